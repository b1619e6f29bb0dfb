//! Real, fully normalised scalar spherical harmonics.
//!
//! The family is orthonormal with respect to the plain `L²(S²)` inner
//! product (no Condon–Shortley phase). Degrees are indexed by `n ≥ 0`,
//! orders within a degree by `j ∈ {1, …, 2n+1}`, and the flattened index
//! `p = n² + j − 1` enumerates the whole family.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HarmonicsError {
    #[error("invalid spherical-harmonic index (n = {n}, j = {j}); j must be in 1..=2n+1")]
    InvalidIndex { n: u32, j: u32 },
    #[error("seminorm of negative order {order} is undefined on an expansion with nonzero constant coefficient")]
    NegativeOrderOnConstant { order: f64 },
}

/// Index of a single real spherical harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShIndex {
    n: u32,
    j: u32,
}

impl ShIndex {
    pub fn new(n: u32, j: u32) -> Result<Self, HarmonicsError> {
        if j < 1 || j > 2 * n + 1 {
            return Err(HarmonicsError::InvalidIndex { n, j });
        }
        Ok(Self { n, j })
    }

    /// Inverse of the flattening `p = n² + j − 1`.
    pub fn from_flat(p: usize) -> Self {
        let n = (p as f64).sqrt().floor() as u32;
        // Guard against floating sqrt landing one off.
        let n = if (n + 1).pow(2) as usize <= p { n + 1 } else { n };
        let j = (p - (n * n) as usize + 1) as u32;
        Self { n, j }
    }

    pub fn degree(&self) -> u32 {
        self.n
    }

    pub fn j(&self) -> u32 {
        self.j
    }

    /// Signed order `m = j − n − 1 ∈ {−n, …, n}`.
    pub fn order(&self) -> i32 {
        self.j as i32 - self.n as i32 - 1
    }

    pub fn flat(&self) -> usize {
        (self.n * self.n + self.j - 1) as usize
    }
}

/// Laplace–Beltrami eigenvalue `λₙ = n(n+1)` of degree-`n` harmonics.
pub fn eigenvalue(n: u32) -> f64 {
    (n as f64) * (n as f64 + 1.0)
}

/// Number of harmonics up to and including degree `n_max`.
pub fn basis_len(n_max: u32) -> usize {
    ((n_max + 1) * (n_max + 1)) as usize
}

/// Colatitude/azimuth split of a unit vector, with `sin θ` taken from the
/// well-conditioned planar radius rather than `sin(acos(·))`.
fn spherical_angles(x: Vector3<f64>) -> (f64, f64, f64) {
    let x = x.normalize();
    let cos_theta = x.z.clamp(-1.0, 1.0);
    let sin_theta = x.x.hypot(x.y);
    let phi = if sin_theta > 0.0 { x.y.atan2(x.x) } else { 0.0 };
    (cos_theta, sin_theta, phi)
}

/// Fully normalised associated Legendre values `P̂ₙᵐ(cos θ)` for all
/// `0 ≤ m ≤ n ≤ n_max`, stored at `idx = n(n+1)/2 + m`.
///
/// Normalisation: `Σₘ` over a full `Yₙⱼ` family integrates to one on the
/// sphere, i.e. `P̂ₙᵐ = √((2n+1)/(4π)·(n−m)!/(n+m)!)·Pₙᵐ` without the
/// Condon–Shortley phase. The three-term recurrence is carried out on the
/// normalised values directly, which is stable far beyond degree 50.
fn legendre_table(n_max: u32, cos_theta: f64, sin_theta: f64) -> Vec<f64> {
    let nm = n_max as usize;
    let mut p = vec![0.0; (nm + 1) * (nm + 2) / 2];
    let at = |n: usize, m: usize| n * (n + 1) / 2 + m;

    p[0] = 0.5 / std::f64::consts::PI.sqrt(); // 1/√(4π)
    for m in 1..=nm {
        // Sectoral seed P̂ₘᵐ.
        let f = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
        p[at(m, m)] = sin_theta * f * p[at(m - 1, m - 1)];
    }
    for m in 0..nm {
        p[at(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * cos_theta * p[at(m, m)];
    }
    for m in 0..=nm {
        for n in (m + 2)..=nm {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((2.0 * nf - 1.0) * (2.0 * nf + 1.0) / ((nf - mf) * (nf + mf))).sqrt();
            let b = ((2.0 * nf + 1.0) * (nf + mf - 1.0) * (nf - mf - 1.0)
                / ((nf - mf) * (nf + mf) * (2.0 * nf - 3.0)))
                .sqrt();
            p[at(n, m)] = a * cos_theta * p[at(n - 1, m)] - b * p[at(n - 2, m)];
        }
    }
    p
}

/// Azimuthal factor: 1 for m = 0, √2·cos(mφ) for m > 0, √2·sin(|m|φ) for m < 0.
fn azimuthal(m: i32, phi: f64) -> f64 {
    use std::f64::consts::SQRT_2;
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => SQRT_2 * (m as f64 * phi).cos(),
        std::cmp::Ordering::Less => SQRT_2 * ((-m) as f64 * phi).sin(),
    }
}

fn azimuthal_dphi(m: i32, phi: f64) -> f64 {
    use std::f64::consts::SQRT_2;
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => 0.0,
        std::cmp::Ordering::Greater => -SQRT_2 * m as f64 * (m as f64 * phi).sin(),
        std::cmp::Ordering::Less => SQRT_2 * (-m) as f64 * ((-m) as f64 * phi).cos(),
    }
}

/// Evaluate `Y_{n,j}` at a point of the unit sphere.
pub fn eval_sh(idx: ShIndex, x: Vector3<f64>) -> f64 {
    let (ct, st, phi) = spherical_angles(x);
    let table = legendre_table(idx.n, ct, st);
    let m = idx.order();
    let n = idx.n as usize;
    table[n * (n + 1) / 2 + m.unsigned_abs() as usize] * azimuthal(m, phi)
}

/// Evaluate all harmonics up to `n_max` at once; `out` is indexed by the
/// flattened index and must have length `(n_max+1)²`.
pub fn eval_sh_all(n_max: u32, x: Vector3<f64>, out: &mut [f64]) {
    assert_eq!(out.len(), basis_len(n_max));
    let (ct, st, phi) = spherical_angles(x);
    let table = legendre_table(n_max, ct, st);
    for n in 0..=n_max as usize {
        for j in 1..=(2 * n + 1) {
            let m = j as i32 - n as i32 - 1;
            out[n * n + j - 1] = table[n * (n + 1) / 2 + m.unsigned_abs() as usize]
                * azimuthal(m, phi);
        }
    }
}

/// Gradient of `Y_{n,j}` on the sphere, returned as the ambient tangent
/// vector `∇_{S²}Y = (∂_θY)ê_θ + (∂_φY/sin θ)ê_φ`.
///
/// The evaluation point must stay away from the poles (`sin θ` appears in
/// denominators); all callers in this crate evaluate at off-pole nodes.
pub fn eval_sh_gradient(idx: ShIndex, x: Vector3<f64>) -> Vector3<f64> {
    let mut out = [Vector3::zeros()];
    gradient_all_impl(idx.n, x, GradientSink::Single(idx, &mut out));
    out[0]
}

/// Gradients of all harmonics up to `n_max`; `out` indexed by flat index.
pub fn eval_sh_gradient_all(n_max: u32, x: Vector3<f64>, out: &mut [Vector3<f64>]) {
    assert_eq!(out.len(), basis_len(n_max));
    gradient_all_impl(n_max, x, GradientSink::All(out));
}

enum GradientSink<'a> {
    Single(ShIndex, &'a mut [Vector3<f64>; 1]),
    All(&'a mut [Vector3<f64>]),
}

fn gradient_all_impl(n_max: u32, x: Vector3<f64>, mut sink: GradientSink<'_>) {
    let (ct, st, phi) = spherical_angles(x);
    let table = legendre_table(n_max, ct, st);
    let at = |n: usize, m: usize| n * (n + 1) / 2 + m;

    let (sin_phi, cos_phi) = phi.sin_cos();
    let e_theta = Vector3::new(ct * cos_phi, ct * sin_phi, -st);
    let e_phi = Vector3::new(-sin_phi, cos_phi, 0.0);

    let mut emit = |n: usize, j: usize, g: Vector3<f64>| match &mut sink {
        GradientSink::Single(idx, out) => {
            if idx.n as usize == n && idx.j as usize == j {
                out[0] = g;
            }
        }
        GradientSink::All(out) => out[n * n + j - 1] = g,
    };

    for n in 0..=n_max as usize {
        for j in 1..=(2 * n + 1) {
            let m = j as i32 - n as i32 - 1;
            let ma = m.unsigned_abs() as usize;
            if n == 0 {
                emit(n, j, Vector3::zeros());
                continue;
            }
            let pnm = table[at(n, ma)];
            // dP̂ₙᵐ/dθ = (n·cosθ·P̂ₙᵐ − eₙₘ·P̂ₙ₋₁ᵐ)/sinθ with
            // eₙₘ = √((n²−m²)(2n+1)/(2n−1)); the n = m case has e = 0.
            let prev = if ma < n { table[at(n - 1, ma)] } else { 0.0 };
            let e = (((n * n - ma * ma) as f64) * (2.0 * n as f64 + 1.0)
                / (2.0 * n as f64 - 1.0))
                .sqrt();
            let dp_dtheta = (n as f64 * ct * pnm - e * prev) / st;
            let dtheta = dp_dtheta * azimuthal(m, phi);
            let dphi_over_sin = (pnm / st) * azimuthal_dphi(m, phi);
            emit(n, j, e_theta * dtheta + e_phi * dphi_over_sin);
        }
    }
}

/// Coefficients of one spherical-harmonic expansion (a single frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShExpansion {
    n_max: u32,
    coeffs: Vec<f64>,
}

impl ShExpansion {
    pub fn zeros(n_max: u32) -> Self {
        Self {
            n_max,
            coeffs: vec![0.0; basis_len(n_max)],
        }
    }

    pub fn from_coeffs(n_max: u32, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), basis_len(n_max), "coefficient count mismatch");
        Self { n_max, coeffs }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, idx: ShIndex) -> f64 {
        self.coeffs[idx.flat()]
    }

    pub fn coeff_mut(&mut self, idx: ShIndex) -> &mut f64 {
        &mut self.coeffs[idx.flat()]
    }

    pub fn value(&self, x: Vector3<f64>) -> f64 {
        let mut basis = vec![0.0; self.coeffs.len()];
        eval_sh_all(self.n_max, x, &mut basis);
        basis.iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }

    /// Ambient tangent gradient of the expansion at a sphere point.
    pub fn gradient(&self, x: Vector3<f64>) -> Vector3<f64> {
        let mut basis = vec![Vector3::zeros(); self.coeffs.len()];
        eval_sh_gradient_all(self.n_max, x, &mut basis);
        basis
            .iter()
            .zip(&self.coeffs)
            .map(|(b, c)| b * *c)
            .fold(Vector3::zeros(), |acc, v| acc + v)
    }

    /// Squared Sobolev seminorm `Σ λₙ^r c²` with `0^r := 0` for `r > 0`.
    pub fn seminorm_sq(&self, order: f64) -> Result<f64, HarmonicsError> {
        if order < 0.0 && self.coeffs[0] != 0.0 {
            return Err(HarmonicsError::NegativeOrderOnConstant { order });
        }
        let mut total = 0.0;
        for (p, c) in self.coeffs.iter().enumerate() {
            let n = ShIndex::from_flat(p).degree();
            if n == 0 {
                // λ₀ = 0; contributes only for r = 0 (Parseval case).
                if order == 0.0 {
                    total += c * c;
                }
                continue;
            }
            total += eigenvalue(n).powf(order) * c * c;
        }
        Ok(total)
    }
}

/// Array-of-frames coefficient container used by the on-disk JSON format
/// `{ "n_max": int, "frames": [[c_0, …], …] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShFrameSeries {
    pub n_max: u32,
    pub frames: Vec<Vec<f64>>,
}

impl ShFrameSeries {
    pub fn from_expansions(frames: &[ShExpansion]) -> Self {
        let n_max = frames.first().map(|f| f.n_max()).unwrap_or(0);
        Self {
            n_max,
            frames: frames.iter().map(|f| f.coeffs().to_vec()).collect(),
        }
    }

    pub fn expansions(&self) -> Vec<ShExpansion> {
        self.frames
            .iter()
            .map(|c| ShExpansion::from_coeffs(self.n_max, c.clone()))
            .collect()
    }
}
