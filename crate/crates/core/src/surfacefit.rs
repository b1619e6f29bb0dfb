//! Estimation of the evolving radius function from scattered 3-D points.
//!
//! Per frame `t`, measurements are radii `‖xᵢ‖` at directions `xᵢ/‖xᵢ‖`.
//! The fit minimises the sum over frames of data misfit, a Sobolev
//! seminorm of order `r` weighted by `β₀`, and a squared temporal backward
//! difference weighted by `β₁`, over spherical-harmonic expansions up to
//! `n_max`. The optimality system is block tridiagonal with one dense
//! `(n_max+1)²` block per frame coupled by `−β₁·I`, solved by block Thomas
//! elimination with zero-Neumann temporal boundary conditions.

use crate::geometry::ShRadiusSlice;
use crate::harmonics::{basis_len, eigenvalue, eval_sh_all, ShExpansion, ShIndex};
use nalgebra::{Cholesky, DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurfaceFitError {
    #[error("at least one sample point is required across all frames")]
    NoSamples,
    #[error("sample point at the origin in frame {frame}")]
    OriginSample { frame: usize },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("optimality system is singular (frame block {frame}); increase β₀ or β₁ or provide more samples")]
    SingularSystem { frame: usize },
    #[error("fitted radius is non-positive (min {min} at frame {frame})")]
    NonPositiveRadius { frame: usize, min: f64 },
    #[error("frame {frame} out of range 0..={max}")]
    FrameOutOfRange { frame: usize, max: usize },
}

/// Scattered measurement points per frame, in µm.
#[derive(Debug, Clone, Default)]
pub struct FrameSamples {
    frames: Vec<Vec<Vector3<f64>>>,
}

impl FrameSamples {
    pub fn new(frames: Vec<Vec<Vector3<f64>>>) -> Result<Self, SurfaceFitError> {
        if frames.iter().map(|f| f.len()).sum::<usize>() == 0 {
            return Err(SurfaceFitError::NoSamples);
        }
        for (t, frame) in frames.iter().enumerate() {
            if frame.iter().any(|p| p.norm() == 0.0) {
                return Err(SurfaceFitError::OriginSample { frame: t });
            }
        }
        Ok(Self { frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn points(&self, t: usize) -> &[Vector3<f64>] {
        &self.frames[t]
    }
}

/// Fit parameters: expansion degree, Sobolev order and the two
/// regularisation weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_max: u32,
    /// Sobolev seminorm order `r`; the reference choice is `3 + ε` with
    /// `ε` the machine precision, numerically indistinguishable from 3.
    pub r: f64,
    pub beta0: f64,
    pub beta1: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_max: 10,
            r: 3.0 + f64::EPSILON,
            beta0: 1e-4,
            beta1: 100.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), SurfaceFitError> {
        if self.beta0 < 0.0 || self.beta1 < 0.0 {
            return Err(SurfaceFitError::InvalidConfig(
                "regularisation weights must be non-negative".into(),
            ));
        }
        if !self.r.is_finite() {
            return Err(SurfaceFitError::InvalidConfig("Sobolev order must be finite".into()));
        }
        Ok(())
    }
}

/// Per-frame spherical-harmonic coefficients of the fitted radius.
#[derive(Debug, Clone)]
pub struct RadiusExpansionSeries {
    frames: Vec<ShExpansion>,
    config: FitConfig,
}

/// On-disk form: the harmonics array-of-frames layout plus fit metadata.
#[derive(Debug, Serialize, Deserialize)]
struct SeriesFile {
    n_max: u32,
    r: f64,
    beta0: f64,
    beta1: f64,
    frames: Vec<Vec<f64>>,
}

impl RadiusExpansionSeries {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn expansion(&self, t: usize) -> &ShExpansion {
        &self.frames[t]
    }

    pub fn config(&self) -> FitConfig {
        self.config
    }

    pub fn to_json(&self) -> String {
        let file = SeriesFile {
            n_max: self.config.n_max,
            r: self.config.r,
            beta0: self.config.beta0,
            beta1: self.config.beta1,
            frames: self.frames.iter().map(|f| f.coeffs().to_vec()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("series serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let file: SeriesFile = serde_json::from_str(json)?;
        Ok(Self {
            frames: file
                .frames
                .into_iter()
                .map(|c| ShExpansion::from_coeffs(file.n_max, c))
                .collect(),
            config: FitConfig {
                n_max: file.n_max,
                r: file.r,
                beta0: file.beta0,
                beta1: file.beta1,
            },
        })
    }
}

/// Assemble and solve the optimality system of the fitting functional.
///
/// Frame `t` of the solution satisfies
/// `(Gₜ + diag(β₀λₚ^r) + cₜβ₁)ϱ(t) − β₁ϱ(t−1) − β₁ϱ(t+1) = rₜ`
/// with the data Gram `Gₜ[p,q] = Σᵢ Yₚ(x̄ᵢ)Y_q(x̄ᵢ)`, right side
/// `rₜ[p] = Σᵢ ‖xᵢ‖Yₚ(x̄ᵢ)`, and `cₜ = 2` at interior frames, `1` at the
/// temporal boundaries (zero-Neumann convention), `0` for a single frame.
pub fn assemble_and_solve(
    samples: &FrameSamples,
    config: FitConfig,
) -> Result<RadiusExpansionSeries, SurfaceFitError> {
    config.validate()?;
    let frames = samples.frame_count();
    let b = basis_len(config.n_max);

    // Per-frame data Grams and right sides, frames in parallel.
    let assembled: Vec<(DMatrix<f64>, DVector<f64>)> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let mut gram = DMatrix::zeros(b, b);
            let mut rhs = DVector::zeros(b);
            let mut basis = vec![0.0; b];
            for point in samples.points(t) {
                let radius = point.norm();
                eval_sh_all(config.n_max, point / radius, &mut basis);
                for p in 0..b {
                    rhs[p] += radius * basis[p];
                    for q in p..b {
                        gram[(p, q)] += basis[p] * basis[q];
                    }
                }
            }
            // Mirror the upper triangle.
            for p in 0..b {
                for q in (p + 1)..b {
                    gram[(q, p)] = gram[(p, q)];
                }
            }
            (gram, rhs)
        })
        .collect();

    let penalty: Vec<f64> = (0..b)
        .map(|p| {
            let n = ShIndex::from_flat(p).degree();
            if n == 0 {
                0.0 // λ₀^r := 0 for the seminorm penalty
            } else {
                config.beta0 * eigenvalue(n).powf(config.r)
            }
        })
        .collect();

    let temporal_diag = |t: usize| -> f64 {
        if frames == 1 {
            0.0
        } else if t == 0 || t == frames - 1 {
            config.beta1
        } else {
            2.0 * config.beta1
        }
    };

    // Block Thomas elimination; the off-diagonal blocks are −β₁·I.
    let mut factors: Vec<Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(frames);
    let mut reduced_rhs: Vec<DVector<f64>> = Vec::with_capacity(frames);
    let mut prev_inverse: Option<DMatrix<f64>> = None;
    for (t, (gram, rhs)) in assembled.iter().enumerate() {
        let mut block = gram.clone();
        for p in 0..b {
            block[(p, p)] += penalty[p] + temporal_diag(t);
        }
        if let Some(inv) = &prev_inverse {
            block -= inv * (config.beta1 * config.beta1);
        }
        let mut rhs_t = rhs.clone();
        if t > 0 {
            rhs_t += factors[t - 1].solve(&reduced_rhs[t - 1]) * config.beta1;
        }
        let chol = Cholesky::new(block.clone())
            .ok_or(SurfaceFitError::SingularSystem { frame: t })?;
        if t + 1 < frames && config.beta1 != 0.0 {
            prev_inverse = Some(chol.solve(&DMatrix::identity(b, b)));
        } else {
            prev_inverse = None;
        }
        factors.push(chol);
        reduced_rhs.push(rhs_t);
    }

    let mut coeffs: Vec<DVector<f64>> = vec![DVector::zeros(b); frames];
    for t in (0..frames).rev() {
        let mut rhs = reduced_rhs[t].clone();
        if t + 1 < frames {
            rhs += (&coeffs[t + 1]).clone_owned() * config.beta1;
        }
        coeffs[t] = factors[t].solve(&rhs);
    }

    // Residual check of the full block-tridiagonal system.
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, (gram, rhs)) in assembled.iter().enumerate() {
        let mut lhs = gram * &coeffs[t];
        for p in 0..b {
            lhs[p] += (penalty[p] + temporal_diag(t)) * coeffs[t][p];
        }
        if t > 0 {
            lhs -= (&coeffs[t - 1]).clone_owned() * config.beta1;
        }
        if t + 1 < frames {
            lhs -= (&coeffs[t + 1]).clone_owned() * config.beta1;
        }
        num += (lhs - rhs).norm_squared();
        den += rhs.norm_squared();
    }
    let relative_residual = num.sqrt() / den.sqrt().max(f64::EPSILON);
    if relative_residual > 1e-12 {
        return Err(SurfaceFitError::SingularSystem { frame: frames });
    }

    let series = RadiusExpansionSeries {
        frames: coeffs
            .into_iter()
            .map(|c| ShExpansion::from_coeffs(config.n_max, c.as_slice().to_vec()))
            .collect(),
        config,
    };
    check_positive(&series)?;
    Ok(series)
}

/// Post-fit positivity scan of every frame over a dense node set.
fn check_positive(series: &RadiusExpansionSeries) -> Result<(), SurfaceFitError> {
    let rule = crate::quadrature::CubatureRule::full_sphere(2 * series.config.n_max.max(4));
    for t in 0..series.frame_count() {
        let e = series.expansion(t);
        let mut min = f64::INFINITY;
        for x in rule.nodes() {
            min = min.min(e.value(*x));
        }
        if min <= 0.0 {
            return Err(SurfaceFitError::NonPositiveRadius { frame: t, min });
        }
    }
    Ok(())
}

/// Radius slice of frame `t` with analytic spatial derivatives and the
/// forward-difference temporal derivative `ϱ(t+1) − ϱ(t)` (backward at the
/// final frame, zero for a single-frame series).
pub fn make_radius_evaluator(
    series: &RadiusExpansionSeries,
    t: usize,
) -> Result<ShRadiusSlice, SurfaceFitError> {
    let frames = series.frame_count();
    if t >= frames {
        return Err(SurfaceFitError::FrameOutOfRange {
            frame: t,
            max: frames - 1,
        });
    }
    let dt = if frames == 1 {
        None
    } else if t + 1 < frames {
        Some(diff(series.expansion(t + 1), series.expansion(t)))
    } else {
        Some(diff(series.expansion(t), series.expansion(t - 1)))
    };
    Ok(ShRadiusSlice::new(series.expansion(t).clone(), dt))
}

fn diff(a: &ShExpansion, b: &ShExpansion) -> ShExpansion {
    let coeffs = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x - y)
        .collect();
    ShExpansion::from_coeffs(a.n_max(), coeffs)
}
