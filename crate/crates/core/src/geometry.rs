//! Differential geometry of evolving sphere-like surfaces parametrised
//! radially over the 2-sphere, `y(t, ξ) = ρ̃(t, x(ξ)) x(ξ)`.
//!
//! A [`Chart`] is a rotated longitude–colatitude parametrisation of `S²`
//! with a pole-exclusion margin. A [`RadiusField`] is one time slice of the
//! radius function `ρ̃` together with its sphere gradient, its temporal
//! derivative, and second derivatives of its radially constant extension.
//! [`eval_frame`] combines the two into a [`SurfaceFrameSample`] holding
//! every first- and second-order quantity of the surface at one point:
//! tangent basis, metric, Christoffel symbols, normal, total curvature and
//! the surface velocity decomposition.

use nalgebra::{Matrix2, Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("chart coordinates within {margin} rad of a pole (colatitude {colatitude})")]
    PoleProximity { colatitude: f64, margin: f64 },
    #[error("metric determinant {det} below the degeneracy threshold 1e-14")]
    DegenerateMetric { det: f64 },
    #[error("input vector is not tangent to the sphere (x·v = {dot})")]
    NotTangent { dot: f64 },
}

/// One time slice of the radius function `ρ̃(t, ·): S² → (0, ∞)`.
///
/// `value` and `gradient` describe the spatial behaviour at the slice time,
/// `time_derivative` is `∂ₜρ̃` at the same time, and `extension_hessian` is
/// the ambient Hessian `∇²ρ̄` of the radially constant extension
/// `ρ̄(p) = ρ̃(p/‖p‖)`, used for Christoffel symbols and curvature. The
/// default Hessian is a central difference (step `1e-5`) of the analytic
/// extension gradient; since it is a function of the ambient point only,
/// every chart sees the identical value and chart invariance is preserved
/// exactly.
pub trait RadiusField: Sync {
    /// `ρ̃(x) > 0` at a unit vector `x`.
    fn value(&self, x: Vector3<f64>) -> f64;

    /// `∇_{S²}ρ̃(x)`, tangent to the sphere.
    fn gradient(&self, x: Vector3<f64>) -> Vector3<f64>;

    /// `∂ₜρ̃(x)` at the slice time.
    fn time_derivative(&self, x: Vector3<f64>) -> f64;

    fn extension_hessian(&self, x: Vector3<f64>) -> Matrix3<f64> {
        let h = 1e-5;
        let mut m = Matrix3::zeros();
        for axis in 0..3 {
            let mut dp = Vector3::zeros();
            dp[axis] = h;
            let col = (extension_gradient(self, x + dp) - extension_gradient(self, x - dp))
                / (2.0 * h);
            m.set_column(axis, &col);
        }
        // Symmetrise away the finite-difference asymmetry.
        (m + m.transpose()) * 0.5
    }
}

/// Ambient gradient of the radially constant extension at a general point:
/// `∇ρ̄(p) = ∇_{S²}ρ̃(p/‖p‖)/‖p‖` by degree-(−1) homogeneity.
pub fn extension_gradient<R: RadiusField + ?Sized>(rho: &R, p: Vector3<f64>) -> Vector3<f64> {
    let r = p.norm();
    rho.gradient(p / r) / r
}

/// Constant-in-space radius, optionally changing uniformly in time.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRadius {
    radius: f64,
    rate: f64,
}

impl ConstantRadius {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0);
        Self { radius, rate: 0.0 }
    }

    /// Slice of `ρ̃(t) = base + rate·t` at time `t`.
    pub fn expanding(base: f64, rate: f64, t: f64) -> Self {
        let radius = base + rate * t;
        assert!(radius > 0.0);
        Self { radius, rate }
    }
}

impl RadiusField for ConstantRadius {
    fn value(&self, _x: Vector3<f64>) -> f64 {
        self.radius
    }

    fn gradient(&self, _x: Vector3<f64>) -> Vector3<f64> {
        Vector3::zeros()
    }

    fn time_derivative(&self, _x: Vector3<f64>) -> f64 {
        self.rate
    }

    fn extension_hessian(&self, _x: Vector3<f64>) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

/// Radius slice backed by a spherical-harmonic expansion, with the temporal
/// derivative supplied as a second expansion (typically a frame difference).
#[derive(Debug, Clone)]
pub struct ShRadiusSlice {
    expansion: crate::harmonics::ShExpansion,
    dt_expansion: Option<crate::harmonics::ShExpansion>,
}

impl ShRadiusSlice {
    pub fn new(
        expansion: crate::harmonics::ShExpansion,
        dt_expansion: Option<crate::harmonics::ShExpansion>,
    ) -> Self {
        Self {
            expansion,
            dt_expansion,
        }
    }

    pub fn expansion(&self) -> &crate::harmonics::ShExpansion {
        &self.expansion
    }
}

impl RadiusField for ShRadiusSlice {
    fn value(&self, x: Vector3<f64>) -> f64 {
        self.expansion.value(x)
    }

    fn gradient(&self, x: Vector3<f64>) -> Vector3<f64> {
        self.expansion.gradient(x)
    }

    fn time_derivative(&self, x: Vector3<f64>) -> f64 {
        self.dt_expansion.as_ref().map_or(0.0, |e| e.value(x))
    }
}

/// Chart coordinates `ξ = (azimuth, colatitude)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartCoords {
    pub azimuth: f64,
    pub colatitude: f64,
}

/// Rotated longitude–colatitude chart of the 2-sphere.
///
/// `x(ξ) = R·(sin ξ² cos ξ¹, sin ξ² sin ξ¹, cos ξ²)` with an orthogonal
/// `R`. Coordinates within `pole_margin` radians of either pole of the
/// chart are rejected; all cubature nodes and basis centres used by this
/// crate are placed off-pole.
#[derive(Debug, Clone)]
pub struct Chart {
    rotation: Matrix3<f64>,
    pole_margin: f64,
}

pub const DEFAULT_POLE_MARGIN: f64 = 1e-3;

impl Chart {
    pub fn canonical() -> Self {
        Self {
            rotation: Matrix3::identity(),
            pole_margin: DEFAULT_POLE_MARGIN,
        }
    }

    /// Chart whose pole axis and azimuth origin are rotated by `rotation`
    /// (must be orthogonal).
    pub fn rotated(rotation: Matrix3<f64>) -> Self {
        let orth = (rotation * rotation.transpose() - Matrix3::identity()).norm();
        assert!(orth < 1e-10, "chart rotation must be orthogonal");
        Self {
            rotation,
            pole_margin: DEFAULT_POLE_MARGIN,
        }
    }

    pub fn with_pole_margin(mut self, margin: f64) -> Self {
        assert!(margin >= 0.0 && margin < std::f64::consts::FRAC_PI_2);
        self.pole_margin = margin;
        self
    }

    pub fn pole_margin(&self) -> f64 {
        self.pole_margin
    }

    /// Sphere point of chart coordinates.
    pub fn point(&self, xi: ChartCoords) -> Vector3<f64> {
        let (st, ct) = (xi.colatitude.sin(), xi.colatitude.cos());
        let (sp, cp) = (xi.azimuth.sin(), xi.azimuth.cos());
        self.rotation * Vector3::new(st * cp, st * sp, ct)
    }

    /// Chart coordinates of a sphere point.
    pub fn coords_of(&self, x: Vector3<f64>) -> ChartCoords {
        let local = self.rotation.transpose() * x.normalize();
        ChartCoords {
            azimuth: local.y.atan2(local.x),
            colatitude: local.z.clamp(-1.0, 1.0).acos(),
        }
    }

    /// First and second chart partials of `x(ξ)` plus the sphere metric.
    pub fn frame(&self, xi: ChartCoords) -> Result<SphereChartFrame, GeometryError> {
        let theta = xi.colatitude;
        if theta < self.pole_margin || theta > std::f64::consts::PI - self.pole_margin {
            return Err(GeometryError::PoleProximity {
                colatitude: theta,
                margin: self.pole_margin,
            });
        }
        let (st, ct) = (theta.sin(), theta.cos());
        let (sp, cp) = (xi.azimuth.sin(), xi.azimuth.cos());
        let r = &self.rotation;
        let x = r * Vector3::new(st * cp, st * sp, ct);
        let dx = [
            r * Vector3::new(-st * sp, st * cp, 0.0),
            r * Vector3::new(ct * cp, ct * sp, -st),
        ];
        let dxx = [
            [
                r * Vector3::new(-st * cp, -st * sp, 0.0),
                r * Vector3::new(-ct * sp, ct * cp, 0.0),
            ],
            [
                r * Vector3::new(-ct * sp, ct * cp, 0.0),
                r * Vector3::new(-st * cp, -st * sp, -ct),
            ],
        ];
        let metric = Matrix2::new(
            dx[0].dot(&dx[0]),
            dx[0].dot(&dx[1]),
            dx[1].dot(&dx[0]),
            dx[1].dot(&dx[1]),
        );
        let metric_inv = metric
            .try_inverse()
            .ok_or(GeometryError::DegenerateMetric { det: metric.determinant() })?;
        Ok(SphereChartFrame {
            xi,
            x,
            dx,
            dxx,
            metric,
            metric_inv,
        })
    }
}

/// Chart data of the underlying sphere parametrisation at one point.
#[derive(Debug, Clone)]
pub struct SphereChartFrame {
    pub xi: ChartCoords,
    /// Sphere point `x(ξ)`.
    pub x: Vector3<f64>,
    /// Tangent basis `∂ᵢx`.
    pub dx: [Vector3<f64>; 2],
    /// Second partials `∂ᵢⱼx`.
    pub dxx: [[Vector3<f64>; 2]; 2],
    /// Sphere metric `Dxᵀ Dx`.
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
}

impl SphereChartFrame {
    /// Components and chart partials of a tangent field on `S²` given its
    /// ambient value and ambient Jacobian at this point.
    ///
    /// Any smooth ambient extension of the field may supply the Jacobian:
    /// only its action on tangent directions enters. By the pushforward
    /// acting solely on the tangent basis, the returned components are
    /// simultaneously the components of the pushed-forward field on the
    /// evolving surface with respect to `∂ᵢy`.
    pub fn field_jet(&self, value: Vector3<f64>, jacobian: Matrix3<f64>) -> TangentFieldJet {
        let m = [self.dx[0].dot(&value), self.dx[1].dot(&value)];
        let inv = self.metric_inv;
        let components = [
            inv[(0, 0)] * m[0] + inv[(0, 1)] * m[1],
            inv[(1, 0)] * m[0] + inv[(1, 1)] * m[1],
        ];
        let mut partials = [[0.0; 2]; 2];
        for i in 0..2 {
            // ∂ᵢ of the metric and of the projections m_k.
            let dgi = Matrix2::new(
                self.dxx[i][0].dot(&self.dx[0]) + self.dx[0].dot(&self.dxx[i][0]),
                self.dxx[i][0].dot(&self.dx[1]) + self.dx[0].dot(&self.dxx[i][1]),
                self.dxx[i][1].dot(&self.dx[0]) + self.dx[1].dot(&self.dxx[i][0]),
                self.dxx[i][1].dot(&self.dx[1]) + self.dx[1].dot(&self.dxx[i][1]),
            );
            let dinv = -inv * dgi * inv;
            let dv = jacobian * self.dx[i];
            let dm = [
                self.dxx[i][0].dot(&value) + self.dx[0].dot(&dv),
                self.dxx[i][1].dot(&value) + self.dx[1].dot(&dv),
            ];
            for j in 0..2 {
                partials[i][j] = dinv[(j, 0)] * m[0]
                    + dinv[(j, 1)] * m[1]
                    + inv[(j, 0)] * dm[0]
                    + inv[(j, 1)] * dm[1];
            }
        }
        TangentFieldJet {
            components,
            partials,
        }
    }
}

/// Components `vʲ` of a tangent field and their chart partials `∂ᵢvʲ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFieldJet {
    pub components: [f64; 2],
    /// `partials[i][j] = ∂ᵢ vʲ`.
    pub partials: [[f64; 2]; 2],
}

/// Covariant-derivative coefficients `Dᵢvʲ = ∂ᵢvʲ + vᵏ Γʲᵢₖ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariantCoeffs(pub [[f64; 2]; 2]);

/// All geometric quantities of the evolving surface at one chart point.
#[derive(Debug, Clone)]
pub struct SurfaceFrameSample {
    pub sphere: SphereChartFrame,
    /// Radius `ρ̃` and its sphere gradient at the point.
    pub rho: f64,
    pub rho_gradient: Vector3<f64>,
    /// Surface point `y = ρ̃x`.
    pub y: Vector3<f64>,
    /// Tangent basis `∂ᵢy = (∂ᵢρ)x + ρ∂ᵢx`.
    pub dy: [Vector3<f64>; 2],
    /// Metric `g = Dyᵀ Dy`, its inverse and `J = √det g`.
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
    pub jacobian: f64,
    /// Christoffel symbols `christoffel[j][i][k] = Γʲᵢₖ`.
    pub christoffel: [[[f64; 2]; 2]; 2],
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    /// Total curvature (twice the mean curvature), `K = −∇·N̂`.
    pub total_curvature: f64,
    /// Surface velocity `V̂ = ∂ₜy = ∂ₜρ̃·x` and its decomposition
    /// `V̂ = V·N̂ + v̂`.
    pub surface_velocity: Vector3<f64>,
    pub normal_velocity: f64,
    pub tangential_velocity: Vector3<f64>,
}

impl SurfaceFrameSample {
    /// Orthogonal projector `P = I − N̂N̂ᵀ` onto the tangent plane.
    pub fn projector(&self) -> Matrix3<f64> {
        Matrix3::identity() - self.normal * self.normal.transpose()
    }

    /// Ambient representative `vⁱ∂ᵢy` of coordinate components.
    pub fn ambient(&self, components: [f64; 2]) -> Vector3<f64> {
        self.dy[0] * components[0] + self.dy[1] * components[1]
    }

    /// Chart partials `∂ᵢf` of a scalar whose surface gradient is known,
    /// via `∂ᵢf = ∇_M f̂ · ∂ᵢy`.
    pub fn scalar_partials(&self, surface_gradient: Vector3<f64>) -> [f64; 2] {
        [
            surface_gradient.dot(&self.dy[0]),
            surface_gradient.dot(&self.dy[1]),
        ]
    }

    /// Components with respect to `∂ᵢy` of a vector tangent to the surface,
    /// `vʲ = g^{jk}(∂ₖy·v)`.
    pub fn surface_components(&self, v: Vector3<f64>) -> [f64; 2] {
        let m = [self.dy[0].dot(&v), self.dy[1].dot(&v)];
        let gi = self.metric_inv;
        [
            gi[(0, 0)] * m[0] + gi[(0, 1)] * m[1],
            gi[(1, 0)] * m[0] + gi[(1, 1)] * m[1],
        ]
    }
}

/// Evaluate the full geometric frame of the surface slice `rho` at chart
/// coordinates `ξ`.
pub fn eval_frame(
    chart: &Chart,
    rho: &dyn RadiusField,
    xi: ChartCoords,
) -> Result<SurfaceFrameSample, GeometryError> {
    let sphere = chart.frame(xi)?;
    let x = sphere.x;
    let r = rho.value(x);
    let grad = rho.gradient(x);
    let hess = rho.extension_hessian(x);
    let dt = rho.time_derivative(x);

    let drho = [grad.dot(&sphere.dx[0]), grad.dot(&sphere.dx[1])];
    let mut ddrho = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            ddrho[i][j] =
                (hess * sphere.dx[j]).dot(&sphere.dx[i]) + grad.dot(&sphere.dxx[i][j]);
        }
    }

    let y = x * r;
    let dy = [
        x * drho[0] + sphere.dx[0] * r,
        x * drho[1] + sphere.dx[1] * r,
    ];
    let mut dyy = [[Vector3::zeros(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            dyy[i][j] = x * ddrho[i][j]
                + sphere.dx[j] * drho[i]
                + sphere.dx[i] * drho[j]
                + sphere.dxx[i][j] * r;
        }
    }

    let metric = Matrix2::new(
        dy[0].dot(&dy[0]),
        dy[0].dot(&dy[1]),
        dy[1].dot(&dy[0]),
        dy[1].dot(&dy[1]),
    );
    let det = metric.determinant();
    if det < 1e-14 {
        return Err(GeometryError::DegenerateMetric { det });
    }
    let metric_inv = metric.try_inverse().expect("determinant checked above");
    let jacobian = det.sqrt();

    let mut normal = dy[0].cross(&dy[1]).normalize();
    if normal.dot(&x) < 0.0 {
        normal = -normal;
    }

    let mut christoffel = [[[0.0; 2]; 2]; 2];
    for j in 0..2 {
        for i in 0..2 {
            for k in 0..2 {
                christoffel[j][i][k] = (dyy[i][k].dot(&dy[0])) * metric_inv[(0, j)]
                    + (dyy[i][k].dot(&dy[1])) * metric_inv[(1, j)];
            }
        }
    }

    // K = Tr((∂ᵢⱼy·N̂) g⁻¹); on the unit sphere this evaluates to −2,
    // matching the sign convention K = −∇·N̂.
    let mut total_curvature = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            total_curvature += dyy[i][j].dot(&normal) * metric_inv[(j, i)];
        }
    }

    let surface_velocity = x * dt;
    let normal_velocity = surface_velocity.dot(&normal);
    let tangential_velocity = surface_velocity - normal * normal_velocity;

    Ok(SurfaceFrameSample {
        sphere,
        rho: r,
        rho_gradient: grad,
        y,
        dy,
        metric,
        metric_inv,
        jacobian,
        christoffel,
        normal,
        total_curvature,
        surface_velocity,
        normal_velocity,
        tangential_velocity,
    })
}

/// Covariant-derivative coefficients `Dᵢvʲ = ∂ᵢvʲ + vᵏΓʲᵢₖ` of a tangent
/// field given by its component jet.
pub fn covariant_coefficients(
    sample: &SurfaceFrameSample,
    jet: &TangentFieldJet,
) -> CovariantCoeffs {
    let mut d = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut v = jet.partials[i][j];
            for k in 0..2 {
                v += jet.components[k] * sample.christoffel[j][i][k];
            }
            d[i][j] = v;
        }
    }
    CovariantCoeffs(d)
}

/// Squared Hilbert–Schmidt norm `‖∇v̂‖² = g_{kℓ} g^{ij} Dᵢvᵏ Dⱼvˡ` of the
/// covariant derivative; chart independent.
pub fn hs_norm_sq(sample: &SurfaceFrameSample, d: &CovariantCoeffs) -> f64 {
    let g = sample.metric;
    let gi = sample.metric_inv;
    let mut total = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    total += g[(k, l)] * gi[(i, j)] * d.0[i][k] * d.0[j][l];
                }
            }
        }
    }
    total
}

/// Surface divergence `∇_M·v̂ = Tr(∇v̂) = Dᵢvⁱ`; chart independent.
pub fn surface_divergence(_sample: &SurfaceFrameSample, d: &CovariantCoeffs) -> f64 {
    d.0[0][0] + d.0[1][1]
}

/// Pushforward `Dφ̃ = ρ̃·Id + x∇_{S²}ρ̃ᵀ` carrying a tangent vector of `S²`
/// at `x` to a tangent vector of the surface at `ρ̃x`.
pub fn pushforward(
    rho: &dyn RadiusField,
    x: Vector3<f64>,
    v: Vector3<f64>,
) -> Result<Vector3<f64>, GeometryError> {
    let dot = v.dot(&x);
    if dot.abs() > 1e-8 * v.norm().max(1.0) {
        return Err(GeometryError::NotTangent { dot });
    }
    Ok(v * rho.value(x) + x * rho.gradient(x).dot(&v))
}

/// The pushforward as a 3×3 matrix at a sphere point.
pub fn pushforward_matrix(rho: &dyn RadiusField, x: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::identity() * rho.value(x) + x * rho.gradient(x).transpose()
}

/// Outward unit normal of the surface at the point over sphere direction
/// `x`, chart-free: the surface is the zero set of `‖p‖ − ρ̄(p)`, whose
/// gradient at `ρ̃x` is `x − ∇_{S²}ρ̃(x)/ρ̃`.
pub fn surface_normal(rho: &dyn RadiusField, x: Vector3<f64>) -> Vector3<f64> {
    (x - rho.gradient(x) / rho.value(x)).normalize()
}
