//! Compactly supported zonal functions on the sphere and the derived pair
//! of tangent vector basis fields, `ỹ⁽¹⁾ = ∇_{S²}b̃` and `ỹ⁽²⁾ = ∇_{S²}b̃ × Ñ`.
//!
//! A zonal function depends on a centre `x_j` only through `τ = x_j·x` and
//! is the piecewise polynomial `b(τ) = ((τ−h)/(1−h))^k` on `τ > h`, zero
//! elsewhere. Pushing the pair forward to the evolving surface leaves their
//! chart components untouched, so the atlas works entirely on the sphere.

use crate::geometry::{SphereChartFrame, TangentFieldJet};
use crate::mesh::TriSphereMesh;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Support parameter `h ∈ (0,1)` and polynomial degree `k` of the zonal
/// profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZonalParams {
    pub h: f64,
    pub k: u32,
}

impl ZonalParams {
    pub fn new(h: f64, k: u32) -> Self {
        assert!(h > 0.0 && h < 1.0, "support parameter must lie in (0,1)");
        Self { h, k }
    }

    /// Fields are C¹ across the support edge only for k ≥ 2.
    pub fn is_c1(&self) -> bool {
        self.k >= 2
    }

    /// Profile value `b(τ)`.
    pub fn profile(&self, tau: f64) -> f64 {
        if tau <= self.h {
            0.0
        } else {
            ((tau - self.h) / (1.0 - self.h)).powi(self.k as i32)
        }
    }

    /// Profile derivative `b′(τ)` (one-sided zero outside the support).
    pub fn profile_derivative(&self, tau: f64) -> f64 {
        if tau <= self.h || self.k == 0 {
            0.0
        } else {
            self.k as f64 * (tau - self.h).powi(self.k as i32 - 1)
                / (1.0 - self.h).powi(self.k as i32)
        }
    }

    fn profile_second_derivative(&self, tau: f64) -> f64 {
        if tau <= self.h || self.k < 2 {
            0.0
        } else {
            (self.k * (self.k - 1)) as f64 * (tau - self.h).powi(self.k as i32 - 2)
                / (1.0 - self.h).powi(self.k as i32)
        }
    }
}

/// Value of the `x_j`-zonal function at `x`.
pub fn zonal_eval(params: ZonalParams, centre: Vector3<f64>, x: Vector3<f64>) -> f64 {
    params.profile(centre.dot(&x))
}

/// Sphere gradient of the zonal function, `b′(τ)·(x_j − τx)`; zero outside
/// the support cap.
pub fn zonal_gradient(params: ZonalParams, centre: Vector3<f64>, x: Vector3<f64>) -> Vector3<f64> {
    let tau = centre.dot(&x);
    let db = params.profile_derivative(tau);
    if db == 0.0 {
        return Vector3::zeros();
    }
    (centre - x * tau) * db
}

/// Ambient Jacobian of the natural off-sphere extension
/// `F(p) = b′(x_j·p)(x_j − (x_j·p)p)` of the gradient field. Only its
/// action on tangent directions is ever used.
fn zonal_gradient_jacobian(
    params: ZonalParams,
    centre: Vector3<f64>,
    x: Vector3<f64>,
) -> Matrix3<f64> {
    let tau = centre.dot(&x);
    let db = params.profile_derivative(tau);
    let ddb = params.profile_second_derivative(tau);
    if db == 0.0 && ddb == 0.0 {
        return Matrix3::zeros();
    }
    (centre - x * tau) * (centre * ddb).transpose()
        - (x * centre.transpose() + Matrix3::identity() * tau) * db
}

fn cross_matrix(u: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Atlas of basis-field centres with shared zonal parameters. Basis index
/// `p = 2j + (i − 1)` interleaves the gradient-type (`i = 1`) and
/// rotational (`i = 2`) fields of centre `j`.
#[derive(Debug, Clone)]
pub struct BasisAtlas {
    centres: Vec<Vector3<f64>>,
    params: ZonalParams,
}

/// Serialized form `{ "h": float, "k": int, "centres": [[x,y,z], …] }`.
#[derive(Debug, Serialize, Deserialize)]
struct AtlasFile {
    h: f64,
    k: u32,
    centres: Vec<[f64; 3]>,
}

impl BasisAtlas {
    pub fn new(centres: Vec<Vector3<f64>>, params: ZonalParams) -> Self {
        if !params.is_c1() {
            log::warn!(
                "zonal degree k = {} gives fields that are not C¹ across the support edge",
                params.k
            );
        }
        for (a, c) in centres.iter().enumerate() {
            assert!((c.norm() - 1.0).abs() < 1e-10, "centre {a} not on the sphere");
            for other in &centres[..a] {
                assert!((c - other).norm() > 1e-12, "duplicate centre {a}");
            }
        }
        Self { centres, params }
    }

    /// Place centres on the mesh vertices of the upper hemisphere
    /// (`x³ ≥ 0`); centres below the equator are not instantiated since
    /// their coefficients are fixed to zero anyway.
    pub fn from_mesh(mesh: &TriSphereMesh, params: ZonalParams) -> Self {
        let centres = mesh
            .cap_vertices(std::f64::consts::FRAC_PI_2)
            .into_iter()
            .map(|i| mesh.vertices()[i])
            .collect();
        Self::new(centres, params)
    }

    pub fn params(&self) -> ZonalParams {
        self.params
    }

    pub fn centres(&self) -> &[Vector3<f64>] {
        &self.centres
    }

    /// Number of basis fields, `2 · #centres`.
    pub fn len(&self) -> usize {
        2 * self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    /// Centre index and field kind (1 or 2) of a flat basis index.
    pub fn split_index(&self, p: usize) -> (usize, u8) {
        (p / 2, (p % 2) as u8 + 1)
    }

    pub fn flat_index(&self, centre: usize, kind: u8) -> usize {
        2 * centre + (kind - 1) as usize
    }

    /// Both tangent basis fields of centre `j` at a sphere point.
    pub fn basis_pair_on_sphere(&self, j: usize, x: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let grad = zonal_gradient(self.params, self.centres[j], x);
        (grad, grad.cross(&x))
    }

    /// Ambient value of one basis field on the sphere.
    pub fn field_on_sphere(&self, p: usize, x: Vector3<f64>) -> Vector3<f64> {
        let (j, kind) = self.split_index(p);
        let (g, r) = self.basis_pair_on_sphere(j, x);
        if kind == 1 {
            g
        } else {
            r
        }
    }

    /// Component jet (components w.r.t. `∂ᵢx`, chart partials) of basis
    /// field `p` at the chart point. By the pushforward acting solely on
    /// the tangent basis these are simultaneously the components of
    /// `ŷ_p = Dφ̃ ỹ_p` with respect to `∂ᵢy`.
    pub fn field_jet(&self, p: usize, frame: &SphereChartFrame) -> TangentFieldJet {
        let (j, kind) = self.split_index(p);
        let centre = self.centres[j];
        let x = frame.x;
        let grad = zonal_gradient(self.params, centre, x);
        let jac = zonal_gradient_jacobian(self.params, centre, x);
        if kind == 1 {
            frame.field_jet(grad, jac)
        } else {
            // F₂(p) = F₁(p) × p with Jacobian −[p]ₓ J₁ + [F₁]ₓ.
            let value = grad.cross(&x);
            let jac2 = -cross_matrix(x) * jac + cross_matrix(grad);
            frame.field_jet(value, jac2)
        }
    }

    /// True if the supports of the two centres can overlap:
    /// `x_{j1}·x_{j2} > 2h² − 1`.
    pub fn supports_overlap(&self, j1: usize, j2: usize) -> bool {
        self.centres[j1].dot(&self.centres[j2]) > 2.0 * self.params.h * self.params.h - 1.0
    }

    /// Indices of centres whose support contains `x` (`τ > h`).
    pub fn active_centres(&self, x: Vector3<f64>) -> Vec<usize> {
        self.centres
            .iter()
            .enumerate()
            .filter(|(_, c)| c.dot(&x) > self.params.h)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = AtlasFile {
            h: self.params.h,
            k: self.params.k,
            centres: self.centres.iter().map(|c| [c.x, c.y, c.z]).collect(),
        };
        serde_json::to_string_pretty(&file).expect("atlas serialization cannot fail")
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        let file: AtlasFile = serde_json::from_str(json)?;
        Ok(Self::new(
            file.centres
                .into_iter()
                .map(|c| Vector3::new(c[0], c[1], c[2]))
                .collect(),
            ZonalParams::new(file.h, file.k),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{eval_frame, Chart, ChartCoords, ConstantRadius, ShRadiusSlice};
    use crate::harmonics::{ShExpansion, ShIndex};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zonal_profile_values() {
        let params = ZonalParams::new(0.6, 3);
        let c = Vector3::new(0.0, 0.0, 1.0);
        // τ = 1 at the centre.
        assert_abs_diff_eq!(zonal_eval(params, c, c), 1.0, epsilon = 1e-15);
        // h = 0.6, k = 3, τ = 0.8 → (0.2/0.4)³ = 0.125.
        let theta = 0.8_f64.acos();
        let x = Vector3::new(theta.sin(), 0.0, theta.cos());
        assert_abs_diff_eq!(zonal_eval(params, c, x), 0.125, epsilon = 1e-12);
        // Continuity at the support edge and outside.
        let edge = Vector3::new((1.0_f64 - 0.36).sqrt(), 0.0, 0.6);
        assert_eq!(zonal_eval(params, c, edge), 0.0);
        assert_eq!(zonal_eval(params, c, Vector3::new(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn zonal_gradient_cases() {
        let params = ZonalParams::new(0.5, 3);
        let c = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(zonal_gradient(params, c, c).norm(), 0.0);
        assert_eq!(
            zonal_gradient(params, c, Vector3::new(0.0, 1.0, 0.0)).norm(),
            0.0
        );
        // Tangency and FD agreement inside the support.
        let h = 1e-6;
        for i in 0..20 {
            let t = 0.15 + 0.03 * i as f64; // colatitudes within the cap
            let phi = 2.4 * i as f64;
            let x = Vector3::new(t.sin() * phi.cos(), t.sin() * phi.sin(), t.cos());
            let g = zonal_gradient(params, c, x);
            assert!(g.dot(&x).abs() < 1e-12);
            let mut fd = Vector3::zeros();
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                fd[axis] = (zonal_eval(params, c, (x + dp).normalize())
                    - zonal_eval(params, c, (x - dp).normalize()))
                    / (2.0 * h);
            }
            assert!((g - fd).norm() < 1e-6, "{:?}", (g - fd).norm());
        }
    }

    #[test]
    fn basis_pair_orthogonal_equal_length() {
        let atlas = BasisAtlas::new(
            vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 0.0)],
            ZonalParams::new(0.7, 3),
        );
        for i in 0..50 {
            let z: f64 = 0.72 + 0.005 * (i as f64);
            let phi = 1.7 * i as f64;
            let r = (1.0 - z * z).sqrt();
            let x = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let (g, rot) = atlas.basis_pair_on_sphere(0, x);
            assert!(g.dot(&rot).abs() <= 1e-12);
            assert_abs_diff_eq!(g.norm(), rot.norm(), epsilon = 1e-12);
            assert!(g.dot(&x).abs() < 1e-12 && rot.dot(&x).abs() < 1e-12);
        }
        // Both vanish at the cap centre.
        let (g, rot) = atlas.basis_pair_on_sphere(0, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(g.norm(), 0.0);
        assert_eq!(rot.norm(), 0.0);
    }

    #[test]
    fn north_pole_pair_shapes() {
        // Centred at the north pole the gradient field points radially
        // within the cap (toward the centre for decreasing τ) and the
        // second field circulates around it.
        let atlas = BasisAtlas::new(vec![Vector3::new(0.0, 0.0, 1.0)], ZonalParams::new(0.6, 3));
        let x = Vector3::new(0.5, 0.0, (1.0_f64 - 0.25).sqrt());
        let (g, rot) = atlas.basis_pair_on_sphere(0, x);
        // Gradient lies in the meridian plane (no azimuthal component).
        assert_abs_diff_eq!(g.y, 0.0, epsilon = 1e-14);
        assert!(g.z > 0.0, "points toward the pole along the meridian");
        // Rotational field is purely azimuthal.
        assert_abs_diff_eq!(rot.x, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rot.z, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pushforward_identity_on_unit_sphere() {
        let atlas = BasisAtlas::new(vec![Vector3::new(0.0, 0.0, 1.0)], ZonalParams::new(0.6, 2));
        let chart = Chart::canonical();
        let rho = ConstantRadius::new(1.0);
        let xi = ChartCoords {
            azimuth: 0.8,
            colatitude: 0.65,
        };
        let s = eval_frame(&chart, &rho, xi).unwrap();
        for p in 0..2 {
            let jet = atlas.field_jet(p, &s.sphere);
            let ambient = s.ambient(jet.components);
            let direct = atlas.field_on_sphere(p, s.sphere.x);
            assert!((ambient - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn pushforward_tangent_to_perturbed_surface() {
        let mut e = ShExpansion::zeros(2);
        *e.coeff_mut(ShIndex::new(0, 1).unwrap()) = (4.0 * std::f64::consts::PI).sqrt();
        *e.coeff_mut(ShIndex::new(2, 2).unwrap()) = 0.1;
        let rho = ShRadiusSlice::new(e, None);
        let atlas = BasisAtlas::new(vec![Vector3::new(0.0, 0.0, 1.0)], ZonalParams::new(0.6, 3));
        let chart = Chart::canonical();
        let xi = ChartCoords {
            azimuth: 2.2,
            colatitude: 0.5,
        };
        let s = eval_frame(&chart, &rho, xi).unwrap();
        for p in 0..2 {
            let jet = atlas.field_jet(p, &s.sphere);
            let ambient = s.ambient(jet.components);
            assert!(ambient.dot(&s.normal).abs() < 1e-10);
        }
    }

    #[test]
    fn components_invariant_under_radius_scaling() {
        let atlas = BasisAtlas::new(vec![Vector3::new(0.0, 0.0, 1.0)], ZonalParams::new(0.6, 3));
        let chart = Chart::canonical();
        let xi = ChartCoords {
            azimuth: 1.0,
            colatitude: 0.55,
        };
        let s1 = eval_frame(&chart, &ConstantRadius::new(1.0), xi).unwrap();
        let s3 = eval_frame(&chart, &ConstantRadius::new(3.0), xi).unwrap();
        let j1 = atlas.field_jet(0, &s1.sphere);
        let j3 = atlas.field_jet(0, &s3.sphere);
        assert_abs_diff_eq!(j1.components[0], j3.components[0], epsilon = 1e-13);
        assert_abs_diff_eq!(j1.components[1], j3.components[1], epsilon = 1e-13);
        // Ambient vectors scale with the radius.
        let a1 = s1.ambient(j1.components);
        let a3 = s3.ambient(j3.components);
        assert!((a3 - a1 * 3.0).norm() < 1e-12);
    }

    #[test]
    fn field_jet_partials_match_finite_differences() {
        let atlas = BasisAtlas::new(
            vec![Vector3::new(0.2, -0.3, 0.932737905308882).normalize()],
            ZonalParams::new(0.6, 3),
        );
        let chart = Chart::canonical();
        let rho = ConstantRadius::new(1.0);
        let xi = ChartCoords {
            azimuth: 5.6,
            colatitude: 0.42,
        };
        let h = 1e-6;
        for p in 0..2 {
            let s = eval_frame(&chart, &rho, xi).unwrap();
            let jet = atlas.field_jet(p, &s.sphere);
            assert!(
                atlas.centres()[0].dot(&s.sphere.x) > 0.62,
                "test point must be inside the support"
            );
            for i in 0..2 {
                let mut plus = xi;
                let mut minus = xi;
                if i == 0 {
                    plus.azimuth += h;
                    minus.azimuth -= h;
                } else {
                    plus.colatitude += h;
                    minus.colatitude -= h;
                }
                let sp = eval_frame(&chart, &rho, plus).unwrap();
                let sm = eval_frame(&chart, &rho, minus).unwrap();
                let jp = atlas.field_jet(p, &sp.sphere);
                let jm = atlas.field_jet(p, &sm.sphere);
                for j in 0..2 {
                    let fd = (jp.components[j] - jm.components[j]) / (2.0 * h);
                    assert_abs_diff_eq!(jet.partials[i][j], fd, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn support_overlap_criterion() {
        let params = ZonalParams::new(0.9, 3);
        let cap = params.h.acos();
        let mk = |theta: f64| Vector3::new(theta.sin(), 0.0, theta.cos());
        let atlas = BasisAtlas::new(
            vec![mk(0.0), mk(1.9 * cap), mk(2.1 * cap)],
            params,
        );
        assert!(atlas.supports_overlap(0, 1));
        assert!(!atlas.supports_overlap(0, 2));
        // Disjoint supports ⇒ no sphere point activates both.
        for i in 0..500 {
            let theta = 3.0 * cap * (i as f64 / 500.0);
            let x = mk(theta);
            let active = atlas.active_centres(x);
            assert!(!(active.contains(&0) && active.contains(&2)));
        }
    }

    #[test]
    fn hemisphere_atlas_from_mesh() {
        let mesh = crate::mesh::icosphere(2).unwrap();
        let atlas = BasisAtlas::from_mesh(&mesh, ZonalParams::new(0.9, 3));
        assert!(atlas.centres().iter().all(|c| c.z >= 0.0));
        assert_eq!(atlas.len(), 2 * atlas.centres().len());
        let (j, kind) = atlas.split_index(7);
        assert_eq!((j, kind), (3, 2));
        assert_eq!(atlas.flat_index(3, 2), 7);
    }

    #[test]
    fn atlas_json_roundtrip() {
        let atlas = BasisAtlas::new(
            vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.6, 0.0, 0.8)],
            ZonalParams::new(0.8, 2),
        );
        let json = atlas.to_json();
        let back = BasisAtlas::from_json(&json).unwrap();
        assert_eq!(back.params(), atlas.params());
        assert_eq!(back.centres().len(), 2);
        assert!((back.centres()[1] - atlas.centres()[1]).norm() < 1e-15);
    }
}
