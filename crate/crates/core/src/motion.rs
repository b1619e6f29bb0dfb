//! Galerkin assembly and solution of the brightness-conservation and
//! mass-conservation optimality systems over the span of pushed-forward
//! compactly supported tangent basis fields.
//!
//! Brightness: `(A + α₀C + α₁D) w = b` with
//! `a_pq = ∫ (∇_M f̂·ŷ_p)(∇_M f̂·ŷ_q)`,
//! `c_pq = ∫ s·g_{kℓ}g^{ij}(Dᵢy_pᵏ)(Dⱼy_qˡ)`,
//! `d_pq = ∫ (1−s)(ŷ_p·ŷ_q)`, `b_p = −∫ d_t^V̂f̂·(∇_M f̂·ŷ_p)`.
//!
//! Mass: `(A + α₀C + α₁D + α₂E) u = b` with the data factor
//! `G_p = ∇_M f̂·ŷ_p + f̂·∇_M·ŷ_p`, `a_pq = ∫ G_p G_q`,
//! `e_pq = ∫ (1−s)(∇_M·ŷ_p)(∇_M·ŷ_q)`, and
//! `b_p = −∫ (d_t^V̂f̂ − f̂KV − ∇_M f̂·v̂)·G_p`.
//!
//! All integrals run over the cubature nodes with the sphere-pullback area
//! weight. Matrix entries are only stored for basis pairs whose support
//! caps can overlap (`x_p·x_q > 2h²−1`); every other entry is exactly zero.

use crate::basisfield::BasisAtlas;
use crate::dataio::{SurfaceData, SurfaceFrameData};
use crate::geometry::{
    covariant_coefficients, eval_frame, pushforward_matrix, Chart, GeometryError, RadiusField,
    SurfaceFrameSample,
};
use crate::quadrature::CubatureRule;
use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sprs::{FillInReduction, SymmetryCheck};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("surface data has {data} nodes but the cubature rule has {rule}")]
    NodeMismatch { data: usize, rule: usize },
    #[error("system factorization failed (matrix not positive definite): {0}")]
    IndefiniteSystem(String),
    #[error("chart partial norms are (near) zero; no gradient information in the region")]
    ZeroGradient,
    #[error("frame {frame} out of range for {frames}-frame data")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("velocity file malformed: {0}")]
    Format(String),
}

/// Which conservation law the data term encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConservationLaw {
    Brightness,
    Mass,
}

/// Spatially varying weight `s`: either the clamped surface data or the
/// constant one (recovering the pure-H¹ model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SMode {
    Clamp { eta: f64 },
    ConstantOne,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub s_mode: SMode,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self {
            alpha0: 0.1,
            alpha1: 1e-3,
            alpha2: 1e-3,
            s_mode: SMode::Clamp { eta: 1e-4 },
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        let ok = self.alpha0 > 0.0 && self.alpha1 > 0.0 && self.alpha2 > 0.0;
        let eta_ok = match self.s_mode {
            SMode::Clamp { eta } => eta > 0.0 && eta < 0.5,
            SMode::ConstantOne => true,
        };
        if ok && eta_ok {
            Ok(())
        } else {
            Err(MotionError::Format(
                "regularisation weights must be positive and η ∈ (0, 1/2)".into(),
            ))
        }
    }

    fn s_value(&self, f: f64) -> f64 {
        match self.s_mode {
            SMode::Clamp { eta } => clamp_s(f, eta),
            SMode::ConstantOne => 1.0,
        }
    }
}

/// The data-dependent weight `s = min(max(f̂, η), 1−η) ∈ (0, 1)`.
pub fn clamp_s(value: f64, eta: f64) -> f64 {
    value.clamp(eta, 1.0 - eta)
}

/// Assembled Galerkin system; `A`, `C`, `D`, `E` share one symmetric
/// sparsity pattern over overlapping-support basis pairs.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    dim: usize,
    /// Ordered pairs `(p, q)` with `p ≤ q`.
    pairs: Vec<(usize, usize)>,
    /// Per-row adjacency into `pairs` (sorted by column).
    rows: Vec<Vec<(usize, usize)>>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub rhs: Vec<f64>,
    pub tag: ConservationLaw,
    pub reg: RegularizationConfig,
}

/// One of the four component matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixPart {
    Data,
    Smoothness,
    Damping,
    Divergence,
}

impl GalerkinSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, p: usize, q: usize) -> Option<usize> {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        self.rows[lo]
            .binary_search_by_key(&hi, |&(col, _)| col)
            .ok()
            .map(|i| self.rows[lo][i].1)
    }

    fn part_values(&self, part: MatrixPart) -> &[f64] {
        match part {
            MatrixPart::Data => &self.a,
            MatrixPart::Smoothness => &self.c,
            MatrixPart::Damping => &self.d,
            MatrixPart::Divergence => &self.e,
        }
    }

    /// Entry of one component matrix (zero outside the stored pattern).
    pub fn entry(&self, part: MatrixPart, p: usize, q: usize) -> f64 {
        self.slot(p, q)
            .map_or(0.0, |s| self.part_values(part)[s])
    }

    /// Combined entry `A + α₀C + α₁D (+ α₂E for the mass law)`.
    fn combined_value(&self, slot: usize) -> f64 {
        let mut v = self.a[slot] + self.reg.alpha0 * self.c[slot] + self.reg.alpha1 * self.d[slot];
        if self.tag == ConservationLaw::Mass {
            v += self.reg.alpha2 * self.e[slot];
        }
        v
    }

    pub fn combined_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (slot, &(p, q)) in self.pairs.iter().enumerate() {
            let v = self.combined_value(slot);
            m[(p, q)] = v;
            m[(q, p)] = v;
        }
        m
    }

    fn combined_csr(&self) -> sprs::CsMat<f64> {
        let mut tri = sprs::TriMat::new((self.dim, self.dim));
        for (slot, &(p, q)) in self.pairs.iter().enumerate() {
            let v = self.combined_value(slot);
            tri.add_triplet(p, q, v);
            if p != q {
                tri.add_triplet(q, p, v);
            }
        }
        tri.to_csr()
    }

    /// `M·x` through the stored symmetric pairs.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (slot, &(p, q)) in self.pairs.iter().enumerate() {
            let v = self.combined_value(slot);
            out[p] += v * x[q];
            if p != q {
                out[q] += v * x[p];
            }
        }
        out
    }
}

/// Evaluate the geometric frame at every cubature node (parallel; results
/// in node order).
pub fn frame_samples(
    chart: &Chart,
    rho: &dyn RadiusField,
    rule: &CubatureRule,
) -> Result<Vec<SurfaceFrameSample>, GeometryError> {
    rule.nodes()
        .par_iter()
        .map(|&x| eval_frame(chart, rho, chart.coords_of(x)))
        .collect()
}

struct ActiveField {
    p: usize,
    ambient: Vector3<f64>,
    /// `∇_M f̂ · ŷ_p`.
    grad_dot: f64,
    /// `∇_M · ŷ_p`.
    divergence: f64,
    /// Covariant coefficients `Dᵢy_pᵏ`.
    cov: [[f64; 2]; 2],
    /// Data factor: `grad_dot` (brightness) or `grad_dot + f̂·div` (mass).
    data_factor: f64,
}

struct NodeContribution {
    pair_updates: Vec<(usize, [f64; 4])>,
    rhs_updates: Vec<(usize, f64)>,
}

/// Assemble the brightness-conservation system for frame pair `(t, t+1)`.
pub fn assemble_brightness(
    data: &SurfaceData,
    t: usize,
    samples: &[SurfaceFrameSample],
    atlas: &BasisAtlas,
    rule: &CubatureRule,
    reg: &RegularizationConfig,
) -> Result<GalerkinSystem, MotionError> {
    assemble(ConservationLaw::Brightness, data, t, samples, atlas, rule, reg)
}

/// Assemble the mass-conservation system for frame pair `(t, t+1)`.
pub fn assemble_mass(
    data: &SurfaceData,
    t: usize,
    samples: &[SurfaceFrameSample],
    atlas: &BasisAtlas,
    rule: &CubatureRule,
    reg: &RegularizationConfig,
) -> Result<GalerkinSystem, MotionError> {
    assemble(ConservationLaw::Mass, data, t, samples, atlas, rule, reg)
}

pub fn assemble(
    law: ConservationLaw,
    data: &SurfaceData,
    t: usize,
    samples: &[SurfaceFrameSample],
    atlas: &BasisAtlas,
    rule: &CubatureRule,
    reg: &RegularizationConfig,
) -> Result<GalerkinSystem, MotionError> {
    reg.validate()?;
    if data.node_count != rule.len() {
        return Err(MotionError::NodeMismatch {
            data: data.node_count,
            rule: rule.len(),
        });
    }
    if samples.len() != rule.len() {
        return Err(MotionError::NodeMismatch {
            data: samples.len(),
            rule: rule.len(),
        });
    }
    let dtf = data
        .temporal_difference(t)
        .map_err(|_| MotionError::FrameOutOfRange {
            frame: t,
            frames: data.frames.len(),
        })?;
    let frame = &data.frames[t];

    let (pairs, rows) = support_pattern(atlas);
    let pair_count = pairs.len();
    let dim = atlas.len();

    // Per-node contributions computed in parallel chunks, then folded in
    // node order so the result is bitwise independent of the thread count.
    const CHUNK: usize = 512;
    let mut a = vec![0.0; pair_count];
    let mut c = vec![0.0; pair_count];
    let mut d = vec![0.0; pair_count];
    let mut e = vec![0.0; pair_count];
    let mut rhs = vec![0.0; dim];

    let node_indices: Vec<usize> = (0..rule.len()).collect();
    for chunk in node_indices.chunks(CHUNK) {
        let contributions: Vec<NodeContribution> = chunk
            .par_iter()
            .map(|&i| {
                node_contribution(
                    law, frame, &dtf, &samples[i], atlas, rule.weights()[i], reg, i, &rows,
                )
            })
            .collect();
        for contribution in contributions {
            for (slot, vals) in contribution.pair_updates {
                a[slot] += vals[0];
                c[slot] += vals[1];
                d[slot] += vals[2];
                e[slot] += vals[3];
            }
            for (p, v) in contribution.rhs_updates {
                rhs[p] += v;
            }
        }
    }

    Ok(GalerkinSystem {
        dim,
        pairs,
        rows,
        a,
        c,
        d,
        e,
        rhs,
        tag: law,
        reg: *reg,
    })
}

/// Symmetric sparsity pattern over basis pairs with overlapping supports.
fn support_pattern(atlas: &BasisAtlas) -> (Vec<(usize, usize)>, Vec<Vec<(usize, usize)>>) {
    let centres = atlas.centres().len();
    let mut pairs = Vec::new();
    let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); atlas.len()];
    for j1 in 0..centres {
        for j2 in j1..centres {
            if !atlas.supports_overlap(j1, j2) {
                continue;
            }
            for i1 in 0..2u8 {
                for i2 in 0..2u8 {
                    let p = atlas.flat_index(j1, i1 + 1);
                    let q = atlas.flat_index(j2, i2 + 1);
                    if p <= q {
                        rows[p].push((q, pairs.len()));
                        pairs.push((p, q));
                    }
                }
            }
        }
    }
    for row in &mut rows {
        row.sort_unstable_by_key(|&(col, _)| col);
    }
    (pairs, rows)
}

#[allow(clippy::too_many_arguments)]
fn node_contribution(
    law: ConservationLaw,
    frame: &SurfaceFrameData,
    dtf: &[f64],
    sample: &SurfaceFrameSample,
    atlas: &BasisAtlas,
    cubature_weight: f64,
    reg: &RegularizationConfig,
    node: usize,
    rows: &[Vec<(usize, usize)>],
) -> NodeContribution {
    let slot_of = |p: usize, q: usize| -> usize {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let row = &rows[lo];
        row[row
            .binary_search_by_key(&hi, |&(col, _)| col)
            .expect("active pair must be in the support pattern")]
        .1
    };
    let x = sample.sphere.x;
    // Pullback area weight ρ√(‖∇ρ‖² + ρ²) times the cubature weight.
    let w = sample.rho * (sample.rho_gradient.norm_squared() + sample.rho * sample.rho).sqrt()
        * cubature_weight;
    let f = frame.values[node];
    let grad_f = frame.gradients[node];
    let s = reg.s_value(f);

    let active = atlas.active_centres(x);
    let mut fields: Vec<ActiveField> = Vec::with_capacity(2 * active.len());
    for j in active {
        for kind in 1..=2u8 {
            let p = atlas.flat_index(j, kind);
            let jet = atlas.field_jet(p, &sample.sphere);
            let cov = covariant_coefficients(sample, &jet).0;
            let ambient = sample.ambient(jet.components);
            let grad_dot = grad_f.dot(&ambient);
            let divergence = cov[0][0] + cov[1][1];
            let data_factor = match law {
                ConservationLaw::Brightness => grad_dot,
                ConservationLaw::Mass => grad_dot + f * divergence,
            };
            fields.push(ActiveField {
                p,
                ambient,
                grad_dot,
                divergence,
                cov,
                data_factor,
            });
        }
    }
    // Sorted by p because active centres come out ascending.
    debug_assert!(fields.windows(2).all(|f| f[0].p < f[1].p));

    let data_scalar = match law {
        ConservationLaw::Brightness => dtf[node],
        ConservationLaw::Mass => {
            dtf[node] - f * sample.total_curvature * sample.normal_velocity
                - grad_f.dot(&sample.tangential_velocity)
        }
    };

    let g = sample.metric;
    let gi = sample.metric_inv;
    let mut pair_updates = Vec::with_capacity(fields.len() * (fields.len() + 1) / 2);
    let mut rhs_updates = Vec::with_capacity(fields.len());
    for (idx1, fp) in fields.iter().enumerate() {
        rhs_updates.push((fp.p, -w * data_scalar * fp.data_factor));
        for fq in &fields[idx1..] {
            let slot = slot_of(fp.p, fq.p);
            let a = w * fp.data_factor * fq.data_factor;
            let mut hs = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            hs += g[(k, l)] * gi[(i, j)] * fp.cov[i][k] * fq.cov[j][l];
                        }
                    }
                }
            }
            let c = w * s * hs;
            let d = w * (1.0 - s) * fp.ambient.dot(&fq.ambient);
            let e = w * (1.0 - s) * fp.divergence * fq.divergence;
            pair_updates.push((slot, [a, c, d, e]));
        }
    }
    NodeContribution {
        pair_updates,
        rhs_updates,
    }
}

/// Tangential part of the conservation-law residual at `û = 0` for the
/// mass system: `d_t^V̂f̂ − f̂KV − ∇_M f̂·v̂` per node.
pub fn mass_data_residual(
    data: &SurfaceData,
    t: usize,
    samples: &[SurfaceFrameSample],
) -> Result<Vec<f64>, MotionError> {
    let dtf = data
        .temporal_difference(t)
        .map_err(|_| MotionError::FrameOutOfRange {
            frame: t,
            frames: data.frames.len(),
        })?;
    let frame = &data.frames[t];
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            dtf[i] - frame.values[i] * s.total_curvature * s.normal_velocity
                - frame.gradients[i].dot(&s.tangential_velocity)
        })
        .collect())
}

/// Estimated tangential velocity field: basis coefficients plus the
/// conservation-law tag and the solver's relative residual.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub coefficients: Vec<f64>,
    pub tag: ConservationLaw,
    pub residual: f64,
}

/// Solve the assembled system by sparse LDLᵀ factorization with reverse
/// Cuthill–McKee ordering.
pub fn solve(system: &GalerkinSystem) -> Result<VelocityField, MotionError> {
    let rhs_norm = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return Ok(VelocityField {
            coefficients: vec![0.0; system.dim],
            tag: system.tag,
            residual: 0.0,
        });
    }
    let csr = system.combined_csr();
    let ldl = sprs_ldl::Ldl::new()
        .check_symmetry(SymmetryCheck::DontCheckSymmetry)
        .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
        .numeric(csr.view())
        .map_err(|e| MotionError::IndefiniteSystem(format!("{e:?}")))?;
    if ldl.d().iter().any(|&pivot| pivot <= 0.0) {
        return Err(MotionError::IndefiniteSystem(
            "non-positive pivot in LDLᵀ".into(),
        ));
    }
    let solution = ldl.solve(&system.rhs);
    let applied = system.apply(&solution);
    let residual = applied
        .iter()
        .zip(&system.rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / rhs_norm.max(f64::EPSILON);
    Ok(VelocityField {
        coefficients: solution,
        tag: system.tag,
        residual,
    })
}

impl VelocityField {
    /// Reconstruct the ambient tangent vector `Σ_p coeff_p ŷ_p(x)` at a
    /// sphere direction by pushing the sphere-level sum forward once.
    pub fn reconstruct(
        &self,
        atlas: &BasisAtlas,
        rho: &dyn RadiusField,
        x: Vector3<f64>,
    ) -> Vector3<f64> {
        let mut sphere_sum = Vector3::zeros();
        for j in atlas.active_centres(x) {
            let (grad, rot) = atlas.basis_pair_on_sphere(j, x);
            sphere_sum += grad * self.coefficients[atlas.flat_index(j, 1)]
                + rot * self.coefficients[atlas.flat_index(j, 2)];
        }
        pushforward_matrix(rho, x) * sphere_sum
    }

    /// Total velocity at a frame sample: `V̂ + ŵ` for the brightness law,
    /// `V·N̂ + û` for the mass law.
    pub fn total_velocity(
        &self,
        atlas: &BasisAtlas,
        rho: &dyn RadiusField,
        sample: &SurfaceFrameSample,
    ) -> Vector3<f64> {
        let tangential = self.reconstruct(atlas, rho, sample.sphere.x);
        match self.tag {
            ConservationLaw::Brightness => sample.surface_velocity + tangential,
            ConservationLaw::Mass => sample.normal * sample.normal_velocity + tangential,
        }
    }

    /// Squared `L²(M_t)` norm of the reconstructed field.
    pub fn l2_norm_sq(
        &self,
        atlas: &BasisAtlas,
        rho: &dyn RadiusField,
        rule: &CubatureRule,
    ) -> f64 {
        crate::quadrature::surface_integral(rule, rho, |x| {
            self.reconstruct(atlas, rho, x).norm_squared()
        })
    }

    pub fn to_json(&self, atlas: &BasisAtlas, frame: usize) -> String {
        let file = VelocityFile {
            law: self.tag,
            frame,
            residual: self.residual,
            coefficients: self.coefficients.clone(),
            atlas_h: atlas.params().h,
            atlas_k: atlas.params().k,
            atlas_centres: atlas.centres().iter().map(|c| [c.x, c.y, c.z]).collect(),
        };
        serde_json::to_string_pretty(&file).expect("velocity serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<(Self, BasisAtlas, usize), MotionError> {
        let file: VelocityFile =
            serde_json::from_str(json).map_err(|e| MotionError::Format(e.to_string()))?;
        let atlas = BasisAtlas::new(
            file.atlas_centres
                .iter()
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
            crate::basisfield::ZonalParams::new(file.atlas_h, file.atlas_k),
        );
        if file.coefficients.len() != atlas.len() {
            return Err(MotionError::Format(format!(
                "coefficient count {} does not match atlas size {}",
                file.coefficients.len(),
                atlas.len()
            )));
        }
        Ok((
            Self {
                coefficients: file.coefficients,
                tag: file.law,
                residual: file.residual,
            },
            atlas,
            file.frame,
        ))
    }

    /// Evaluated-field CSV `x,y,z,vx,vy,vz` at the given sphere directions
    /// (points are mapped onto the surface).
    pub fn field_csv(
        &self,
        atlas: &BasisAtlas,
        rho: &dyn RadiusField,
        directions: &[Vector3<f64>],
    ) -> String {
        let mut out = String::from("x,y,z,vx,vy,vz\n");
        for &x in directions {
            let y = x * rho.value(x);
            let v = self.reconstruct(atlas, rho, x);
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                y.x, y.y, y.z, v.x, v.y, v.z
            ));
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VelocityFile {
    law: ConservationLaw,
    frame: usize,
    residual: f64,
    coefficients: Vec<f64>,
    atlas_h: f64,
    atlas_k: u32,
    atlas_centres: Vec<[f64; 3]>,
}

/// Linear-independence diagnostic of the data over a node region:
/// `|⟨∂₁f, ∂₂f⟩| / (‖∂₁f‖·‖∂₂f‖)` with `L²` pairings over the region.
/// Values near one indicate degenerate data (the aperture problem).
pub fn linear_independence_diagnostic(
    frame: &SurfaceFrameData,
    samples: &[SurfaceFrameSample],
    rule: &CubatureRule,
    region: Option<&[usize]>,
) -> Result<f64, MotionError> {
    let all: Vec<usize>;
    let indices = match region {
        Some(r) => r,
        None => {
            all = (0..rule.len()).collect();
            &all
        }
    };
    let mut inner = Vec::with_capacity(indices.len());
    let mut n1 = Vec::with_capacity(indices.len());
    let mut n2 = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &samples[i];
        let w = s.rho * (s.rho_gradient.norm_squared() + s.rho * s.rho).sqrt()
            * rule.weights()[i];
        let partials = s.scalar_partials(frame.gradients[i]);
        inner.push(w * partials[0] * partials[1]);
        n1.push(w * partials[0] * partials[0]);
        n2.push(w * partials[1] * partials[1]);
    }
    let norm1 = crate::tree_sum(&n1).sqrt();
    let norm2 = crate::tree_sum(&n2).sqrt();
    if norm1 * norm2 < 1e-14 {
        return Err(MotionError::ZeroGradient);
    }
    Ok(crate::tree_sum(&inner).abs() / (norm1 * norm2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basisfield::ZonalParams;
    use crate::dataio::SurfaceFrameData;
    use crate::geometry::ConstantRadius;
    use approx::assert_abs_diff_eq;

    fn small_setup() -> (BasisAtlas, CubatureRule, Chart, Vec<SurfaceFrameSample>) {
        let mesh = crate::mesh::icosphere(1).unwrap();
        let atlas = BasisAtlas::from_mesh(&mesh, ZonalParams::new(0.8, 3));
        let rule = CubatureRule::cap(24);
        let chart = Chart::canonical();
        let samples = frame_samples(&chart, &ConstantRadius::new(1.0), &rule).unwrap();
        (atlas, rule, chart, samples)
    }

    fn blob_data(rule: &CubatureRule, shift: f64) -> SurfaceFrameData {
        let centre = Vector3::new(0.3, 0.2, 0.95).normalize();
        let sigma = 0.35f64;
        let values: Vec<f64> = rule
            .nodes()
            .iter()
            .map(|x| {
                let theta = (centre.dot(x)).clamp(-1.0, 1.0).acos() + shift;
                0.9 * (-theta * theta / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let gradients: Vec<Vector3<f64>> = rule
            .nodes()
            .iter()
            .map(|x| {
                let tau: f64 = centre.dot(x).clamp(-1.0, 1.0);
                let theta = tau.acos() + shift;
                let sin = (1.0 - tau * tau).sqrt().max(1e-12);
                let dtheta = -(centre - x * tau) / sin;
                dtheta * (0.9 * (-theta * theta / (2.0 * sigma * sigma)).exp()
                    * (-theta / (sigma * sigma)))
            })
            .collect();
        SurfaceFrameData {
            values,
            gradients,
            zero_band_fraction: 0.0,
        }
    }

    fn two_frame_data(rule: &CubatureRule) -> SurfaceData {
        SurfaceData {
            frames: vec![blob_data(rule, 0.0), blob_data(rule, 0.02)],
            epsilon: 0.1,
            node_count: rule.len(),
        }
    }

    #[test]
    fn clamp_s_branches() {
        assert_eq!(clamp_s(0.5, 1e-4), 0.5);
        assert_eq!(clamp_s(0.0, 1e-4), 1e-4);
        assert_eq!(clamp_s(1.0, 1e-4), 0.9999);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (atlas, rule, _chart, samples) = small_setup();
        let data = SurfaceData {
            frames: vec![
                SurfaceFrameData {
                    values: vec![0.0; rule.len()],
                    gradients: vec![Vector3::zeros(); rule.len()],
                    zero_band_fraction: 1.0,
                },
                SurfaceFrameData {
                    values: vec![0.0; rule.len()],
                    gradients: vec![Vector3::zeros(); rule.len()],
                    zero_band_fraction: 1.0,
                },
            ],
            epsilon: 0.1,
            node_count: rule.len(),
        };
        let reg = RegularizationConfig::default();
        let system =
            assemble_brightness(&data, 0, &samples, &atlas, &rule, &reg).unwrap();
        assert!(system.a.iter().all(|&v| v == 0.0));
        assert!(system.rhs.iter().all(|&v| v == 0.0));
        let field = solve(&system).unwrap();
        assert!(field.coefficients.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn node_mismatch_detected() {
        let (atlas, rule, _chart, samples) = small_setup();
        let data = SurfaceData {
            frames: vec![],
            epsilon: 0.1,
            node_count: rule.len() + 1,
        };
        assert!(matches!(
            assemble_brightness(&data, 0, &samples, &atlas, &rule, &RegularizationConfig::default()),
            Err(MotionError::NodeMismatch { .. })
        ));
    }

    #[test]
    fn disjoint_supports_have_no_stored_entry() {
        let params = ZonalParams::new(0.95, 3);
        let cap = params.h.acos();
        let mk = |theta: f64, phi: f64| {
            Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
        };
        let atlas = BasisAtlas::new(vec![mk(0.0, 0.0), mk(3.0 * cap, 0.0)], params);
        let (pairs, _) = support_pattern(&atlas);
        // Only the 3 self-pairs per centre survive: (0,0),(0,1),(1,1) and
        // (2,2),(2,3),(3,3).
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|&(p, q)| p / 2 == q / 2));
    }

    /// Slow reference: dense loops over all basis pairs and nodes, no
    /// sparsity shortcuts, independent of the production scatter path.
    fn reference_system(
        law: ConservationLaw,
        data: &SurfaceData,
        t: usize,
        samples: &[SurfaceFrameSample],
        atlas: &BasisAtlas,
        rule: &CubatureRule,
        reg: &RegularizationConfig,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
        let n = atlas.len();
        let mut a = DMatrix::zeros(n, n);
        let mut c = DMatrix::zeros(n, n);
        let mut d = DMatrix::zeros(n, n);
        let mut e = DMatrix::zeros(n, n);
        let mut b = vec![0.0; n];
        let dtf = data.temporal_difference(t).unwrap();
        for i in 0..rule.len() {
            let s = &samples[i];
            let w = s.rho * (s.rho_gradient.norm_squared() + s.rho * s.rho).sqrt()
                * rule.weights()[i];
            let f = data.frames[t].values[i];
            let grad_f = data.frames[t].gradients[i];
            let sval = reg.s_value(f);
            let scalar = match law {
                ConservationLaw::Brightness => dtf[i],
                ConservationLaw::Mass => {
                    dtf[i] - f * s.total_curvature * s.normal_velocity
                        - grad_f.dot(&s.tangential_velocity)
                }
            };
            for p in 0..n {
                let jet_p = atlas.field_jet(p, &s.sphere);
                let cov_p = covariant_coefficients(s, &jet_p).0;
                let amb_p = s.ambient(jet_p.components);
                let div_p = cov_p[0][0] + cov_p[1][1];
                let gp = match law {
                    ConservationLaw::Brightness => grad_f.dot(&amb_p),
                    ConservationLaw::Mass => grad_f.dot(&amb_p) + f * div_p,
                };
                b[p] -= w * scalar * gp;
                for q in 0..n {
                    let jet_q = atlas.field_jet(q, &s.sphere);
                    let cov_q = covariant_coefficients(s, &jet_q).0;
                    let amb_q = s.ambient(jet_q.components);
                    let div_q = cov_q[0][0] + cov_q[1][1];
                    let gq = match law {
                        ConservationLaw::Brightness => grad_f.dot(&amb_q),
                        ConservationLaw::Mass => grad_f.dot(&amb_q) + f * div_q,
                    };
                    a[(p, q)] += w * gp * gq;
                    let mut hs = 0.0;
                    for i1 in 0..2 {
                        for j1 in 0..2 {
                            for k1 in 0..2 {
                                for l1 in 0..2 {
                                    hs += s.metric[(k1, l1)]
                                        * s.metric_inv[(i1, j1)]
                                        * cov_p[i1][k1]
                                        * cov_q[j1][l1];
                                }
                            }
                        }
                    }
                    c[(p, q)] += w * sval * hs;
                    d[(p, q)] += w * (1.0 - sval) * amb_p.dot(&amb_q);
                    e[(p, q)] += w * (1.0 - sval) * div_p * div_q;
                }
            }
        }
        (a, c, d, e, b)
    }

    #[test]
    fn assembly_matches_slow_reference() {
        let (atlas, rule, _chart, samples) = small_setup();
        let data = two_frame_data(&rule);
        let reg = RegularizationConfig::default();
        for law in [ConservationLaw::Brightness, ConservationLaw::Mass] {
            let system = assemble(law, &data, 0, &samples, &atlas, &rule, &reg).unwrap();
            let (ra, rc, rd, re, rb) =
                reference_system(law, &data, 0, &samples, &atlas, &rule, &reg);
            let n = atlas.len();
            for p in 0..n {
                assert_abs_diff_eq!(system.rhs[p], rb[p], epsilon = 1e-13);
                for q in 0..n {
                    assert_abs_diff_eq!(
                        system.entry(MatrixPart::Data, p, q),
                        ra[(p, q)],
                        epsilon = 1e-13
                    );
                    assert_abs_diff_eq!(
                        system.entry(MatrixPart::Smoothness, p, q),
                        rc[(p, q)],
                        epsilon = 1e-13
                    );
                    assert_abs_diff_eq!(
                        system.entry(MatrixPart::Damping, p, q),
                        rd[(p, q)],
                        epsilon = 1e-13
                    );
                    assert_abs_diff_eq!(
                        system.entry(MatrixPart::Divergence, p, q),
                        re[(p, q)],
                        epsilon = 1e-13
                    );
                }
            }
        }
    }

    #[test]
    fn combined_matrix_symmetric_and_solvable() {
        let (atlas, rule, _chart, samples) = small_setup();
        let data = two_frame_data(&rule);
        let reg = RegularizationConfig::default();
        let system = assemble_brightness(&data, 0, &samples, &atlas, &rule, &reg).unwrap();
        let m = system.combined_dense();
        assert!((m.clone() - m.transpose()).abs().max() < 1e-12);
        let field = solve(&system).unwrap();
        assert!(field.residual < 1e-10, "residual {}", field.residual);
        assert!(field.coefficients.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn constant_one_smode_kills_damping_terms() {
        let (atlas, rule, _chart, samples) = small_setup();
        let data = two_frame_data(&rule);
        let reg = RegularizationConfig {
            s_mode: SMode::ConstantOne,
            ..Default::default()
        };
        for law in [ConservationLaw::Brightness, ConservationLaw::Mass] {
            let system = assemble(law, &data, 0, &samples, &atlas, &rule, &reg).unwrap();
            assert!(system.d.iter().all(|&v| v == 0.0));
            assert!(system.e.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn divergence_matrix_is_psd() {
        let (atlas, rule, _chart, samples) = small_setup();
        let data = two_frame_data(&rule);
        let reg = RegularizationConfig::default();
        let system = assemble_mass(&data, 0, &samples, &atlas, &rule, &reg).unwrap();
        let n = atlas.len();
        let mut em = DMatrix::zeros(n, n);
        for p in 0..n {
            for q in 0..n {
                em[(p, q)] = system.entry(MatrixPart::Divergence, p, q);
            }
        }
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let x = DMatrix::from_fn(n, 1, |_, _| next());
            let quad = (x.transpose() * &em * &x)[(0, 0)];
            assert!(quad >= -1e-10, "E not PSD: xᵀEx = {quad}");
        }
    }

    #[test]
    fn mock_identity_solve() {
        // M = I via a hand-built system: single centre, two fields with
        // diagonal pattern.
        let atlas = BasisAtlas::new(
            vec![Vector3::new(0.0, 0.0, 1.0)],
            ZonalParams::new(0.8, 3),
        );
        let (pairs, rows) = support_pattern(&atlas);
        let zeros = vec![0.0; pairs.len()];
        let mut a = zeros.clone();
        for (slot, &(p, q)) in pairs.iter().enumerate() {
            if p == q {
                a[slot] = 1.0;
            }
        }
        let system = GalerkinSystem {
            dim: atlas.len(),
            pairs,
            rows,
            a,
            c: zeros.clone(),
            d: zeros.clone(),
            e: zeros,
            rhs: vec![0.25, -1.5],
            tag: ConservationLaw::Brightness,
            reg: RegularizationConfig::default(),
        };
        let field = solve(&system).unwrap();
        assert_abs_diff_eq!(field.coefficients[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(field.coefficients[1], -1.5, epsilon = 1e-12);
    }

    #[test]
    fn random_spd_solve_residual() {
        // Random SPD system routed through the same sparse LDLᵀ path.
        let atlas = BasisAtlas::from_mesh(
            &crate::mesh::icosphere(2).unwrap(),
            ZonalParams::new(0.6, 3),
        );
        let mut state = 42u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let (pairs, rows) = support_pattern(&atlas);
        let zeros = vec![0.0; pairs.len()];
        let mut a = zeros.clone();
        for (slot, &(p, q)) in pairs.iter().enumerate() {
            if p == q {
                a[slot] = 4.0 + next().abs();
            } else {
                a[slot] = 0.05 * next();
            }
        }
        let dim = atlas.len();
        let rhs: Vec<f64> = (0..dim).map(|_| next()).collect();
        let system = GalerkinSystem {
            dim,
            pairs,
            rows,
            a,
            c: zeros.clone(),
            d: zeros.clone(),
            e: zeros,
            rhs,
            tag: ConservationLaw::Brightness,
            reg: RegularizationConfig::default(),
        };
        let field = solve(&system).unwrap();
        assert!(field.residual < 1e-12, "residual {}", field.residual);
    }

    #[test]
    fn reconstruct_and_total_velocity() {
        let (atlas, rule, _chart, samples) = small_setup();
        let rho = ConstantRadius::new(1.0);
        let zero = VelocityField {
            coefficients: vec![0.0; atlas.len()],
            tag: ConservationLaw::Brightness,
            residual: 0.0,
        };
        let x = rule.nodes()[17];
        assert_eq!(zero.reconstruct(&atlas, &rho, x).norm(), 0.0);

        // One coefficient set to one reproduces that basis field.
        let mut one = zero.clone();
        one.coefficients[5] = 1.0;
        let direct = atlas.field_on_sphere(5, x);
        assert!((one.reconstruct(&atlas, &rho, x) - direct).norm() < 1e-12);

        // Tangency on a random coefficient vector.
        let mut field = zero.clone();
        for (i, cf) in field.coefficients.iter_mut().enumerate() {
            *cf = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
        }
        let i = 33;
        let s = &samples[i];
        let v = field.reconstruct(&atlas, &rho, s.sphere.x);
        assert!(v.dot(&s.normal).abs() < 1e-10);

        // Static sphere: total velocity equals the tangential part.
        assert!(
            (field.total_velocity(&atlas, &rho, s) - v).norm() < 1e-14
        );

        // Expanding sphere with zero coefficients: brightness gives the
        // full surface velocity, mass gives its normal part (equal here).
        let expanding = ConstantRadius::expanding(1.0, 0.3, 0.0);
        let chart = Chart::canonical();
        let se = eval_frame(&chart, &expanding, chart.coords_of(s.sphere.x)).unwrap();
        let of_total = zero.total_velocity(&atlas, &expanding, &se);
        assert!((of_total - se.sphere.x * 0.3).norm() < 1e-12);
        let cm = VelocityField {
            tag: ConservationLaw::Mass,
            ..zero.clone()
        };
        let cm_total = cm.total_velocity(&atlas, &expanding, &se);
        assert!((cm_total - se.sphere.x * 0.3).norm() < 1e-12);
    }

    #[test]
    fn velocity_json_roundtrip() {
        let atlas = BasisAtlas::new(
            vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.8, 0.0, 0.6)],
            ZonalParams::new(0.9, 3),
        );
        let field = VelocityField {
            coefficients: vec![0.1, -0.2, 0.3, 0.4],
            tag: ConservationLaw::Mass,
            residual: 1e-13,
        };
        let json = field.to_json(&atlas, 7);
        let (back, atlas2, frame) = VelocityField::from_json(&json).unwrap();
        assert_eq!(frame, 7);
        assert_eq!(back.tag, ConservationLaw::Mass);
        assert_eq!(back.coefficients, field.coefficients);
        assert_eq!(atlas2.len(), atlas.len());
    }

    #[test]
    fn linear_independence_cases() {
        let (_atlas, rule, _chart, samples) = small_setup();

        // Texture varying along colatitude only: ∂₁f = 0 → ZeroGradient.
        let stripes_theta = SurfaceFrameData {
            values: rule.nodes().iter().map(|x| x.z).collect(),
            gradients: rule
                .nodes()
                .iter()
                .map(|x| Vector3::new(0.0, 0.0, 1.0) - x * x.z)
                .collect(),
            zero_band_fraction: 0.0,
        };
        assert!(matches!(
            linear_independence_diagnostic(&stripes_theta, &samples, &rule, None),
            Err(MotionError::ZeroGradient)
        ));

        // Perfectly correlated partials: f = ξ¹ + ξ² gives ratio 1.
        let correlated = SurfaceFrameData {
            values: vec![0.0; rule.len()],
            gradients: samples
                .iter()
                .map(|s| {
                    // Build a gradient whose chart partials are (1, 1).
                    let gi = s.metric_inv;
                    let coeff = [
                        gi[(0, 0)] + gi[(0, 1)],
                        gi[(1, 0)] + gi[(1, 1)],
                    ];
                    s.ambient(coeff)
                })
                .collect(),
            zero_band_fraction: 0.0,
        };
        let ratio =
            linear_independence_diagnostic(&correlated, &samples, &rule, None).unwrap();
        assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-10);

        // Isotropic random texture decorrelates the partials.
        let mut state = 7u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let random = SurfaceFrameData {
            values: vec![0.0; rule.len()],
            gradients: samples
                .iter()
                .map(|s| {
                    let g = Vector3::new(next(), next(), next());
                    g - s.normal * s.normal.dot(&g)
                })
                .collect(),
            zero_band_fraction: 0.0,
        };
        let ratio = linear_independence_diagnostic(&random, &samples, &rule, None).unwrap();
        assert!(ratio < 0.3, "isotropic texture should decorrelate: {ratio}");
    }
}
