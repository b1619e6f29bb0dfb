//! Synthetic phantoms with known surface, known velocity and known
//! conservation law; the ground-truth oracles for the estimation pipeline.
//!
//! Surface phantoms are analytic: blobs are geodesic Gaussians
//! `exp(−θ²/2σ²)` so rigid-rotation advection is exact, and the mass law
//! scales values by the analytic area factor `(ρ(0)/ρ(t))²` of a uniformly
//! expanding sphere. Volume phantoms voxelise the same blobs as 3-D
//! Gaussians, optionally with additive noise; surface phantoms stay
//! noise-free.

use crate::dataio::{SurfaceData, SurfaceFrameData, VolumetricSequence};
use crate::geometry::{surface_normal, ConstantRadius, RadiusField};
use crate::motion::ConservationLaw;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

/// Radius behaviour of the phantom surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RhoSpec {
    Constant { radius: f64 },
    /// `ρ(t) = base + rate·t`, uniform in space.
    Linear { base: f64, rate: f64 },
}

impl RhoSpec {
    pub fn slice(&self, t: f64) -> ConstantRadius {
        match *self {
            RhoSpec::Constant { radius } => ConstantRadius::new(radius),
            RhoSpec::Linear { base, rate } => ConstantRadius::expanding(base, rate, t),
        }
    }

    fn radius_at(&self, t: f64) -> f64 {
        match *self {
            RhoSpec::Constant { radius } => radius,
            RhoSpec::Linear { base, rate } => base + rate * t,
        }
    }
}

/// One geodesic Gaussian blob on the sphere.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Blob {
    pub centre: [f64; 3],
    /// Angular width in radians.
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MotionSpec {
    None,
    /// Rigid rotation about `axis` by `omega` radians per frame.
    Rotation { axis: [f64; 3], omega: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub rho: RhoSpec,
    pub blobs: Vec<Blob>,
    pub motion: MotionSpec,
    pub law: ConservationLaw,
    /// Number of frames (T + 1).
    pub frames: usize,
    /// Additive Gaussian noise level; applied to volume phantoms only.
    pub noise_sigma: f64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.frames == 0 {
            return Err("at least one frame required".into());
        }
        for b in &self.blobs {
            if b.sigma <= 0.0 {
                return Err("blob sigma must be positive".into());
            }
            if !(0.0 < b.amplitude && b.amplitude <= 1.0) {
                return Err("blob amplitude must lie in (0, 1]".into());
            }
        }
        Ok(())
    }

    fn rotation_at(&self, t: f64) -> Matrix3<f64> {
        match &self.motion {
            MotionSpec::None => Matrix3::identity(),
            MotionSpec::Rotation { axis, omega } => {
                rotation_matrix(Vector3::from(*axis).normalize(), omega * t)
            }
        }
    }

    /// Sphere image `f̃(t, x)` of the phantom.
    pub fn value(&self, t: f64, x: Vector3<f64>) -> f64 {
        // Brightness: f is advected, f(t, x) = f₀(R(−t)x).
        // Mass: additionally scaled by the area factor of the expansion.
        let pulled = self.rotation_at(-t) * x;
        let base = blob_field(&self.blobs, pulled);
        match self.law {
            ConservationLaw::Brightness => base,
            ConservationLaw::Mass => {
                let r0 = self.rho.radius_at(0.0);
                let rt = self.rho.radius_at(t);
                base * (r0 / rt).powi(2)
            }
        }
    }

    /// Sphere gradient `∇_{S²}f̃(t, ·)` at `x` (analytic).
    pub fn sphere_gradient(&self, t: f64, x: Vector3<f64>) -> Vector3<f64> {
        let rot = self.rotation_at(-t);
        let pulled = rot * x;
        let g = blob_field_gradient(&self.blobs, pulled);
        let scale = match self.law {
            ConservationLaw::Brightness => 1.0,
            ConservationLaw::Mass => {
                let r0 = self.rho.radius_at(0.0);
                let rt = self.rho.radius_at(t);
                (r0 / rt).powi(2)
            }
        };
        rot.transpose() * g * scale
    }

    /// Ground-truth tangential velocity at the surface point over sphere
    /// direction `x` at frame time `t` (µm per frame).
    pub fn truth_velocity(&self, t: f64, x: Vector3<f64>) -> Vector3<f64> {
        match &self.motion {
            MotionSpec::None => Vector3::zeros(),
            MotionSpec::Rotation { axis, omega } => {
                let y = x * self.rho.radius_at(t);
                Vector3::from(*axis).normalize().cross(&y) * *omega
            }
        }
    }
}

/// Rotation by `angle` about a unit `axis` (Rodrigues form).
pub fn rotation_matrix(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
    );
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

fn blob_field(blobs: &[Blob], x: Vector3<f64>) -> f64 {
    let mut v = 0.0;
    for b in blobs {
        let c = Vector3::from(b.centre);
        let theta = c.dot(&x).clamp(-1.0, 1.0).acos();
        v += b.amplitude * (-theta * theta / (2.0 * b.sigma * b.sigma)).exp();
    }
    v.min(1.0)
}

fn blob_field_gradient(blobs: &[Blob], x: Vector3<f64>) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for b in blobs {
        let c = Vector3::from(b.centre);
        let tau = c.dot(&x).clamp(-1.0, 1.0);
        let theta = tau.acos();
        let sin = (1.0 - tau * tau).sqrt();
        if sin < 1e-9 {
            continue; // gradient vanishes at the blob centre/antipode
        }
        let dtheta = -(c - x * tau) / sin;
        let value = b.amplitude * (-theta * theta / (2.0 * b.sigma * b.sigma)).exp();
        g += dtheta * (value * (-theta / (b.sigma * b.sigma)));
    }
    g
}

/// Analytic surface data plus ground truth at the given sphere nodes.
pub struct SurfacePhantom {
    pub data: SurfaceData,
    /// Radius slice per frame (value + forward-difference ∂ₜ).
    pub slices: Vec<ConstantRadius>,
    /// Ground-truth tangential velocity per frame per node.
    pub truth: Vec<Vec<Vector3<f64>>>,
}

/// Evaluate the phantom at the node set: values, exact surface gradients,
/// and the ground-truth tangential field per frame.
pub fn generate_surface_phantom(spec: &PhantomSpec, nodes: &[Vector3<f64>]) -> SurfacePhantom {
    spec.validate().expect("invalid phantom spec");
    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    let mut slices = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let tf = t as f64;
        let rho = spec.rho.slice(tf);
        let values: Vec<f64> = nodes.iter().map(|&x| spec.value(tf, x)).collect();
        let gradients: Vec<Vector3<f64>> = nodes
            .iter()
            .map(|&x| {
                let g = spec.sphere_gradient(tf, x) / rho.value(x);
                let n = surface_normal(&rho, x);
                g - n * n.dot(&g)
            })
            .collect();
        frames.push(SurfaceFrameData {
            values,
            gradients,
            zero_band_fraction: 0.0,
        });
        truth.push(nodes.iter().map(|&x| spec.truth_velocity(tf, x)).collect());
        slices.push(rho);
    }
    SurfacePhantom {
        data: SurfaceData {
            frames,
            epsilon: 0.0,
            node_count: nodes.len(),
        },
        slices,
        truth,
    }
}

/// Voxelised phantom: 3-D Gaussian bumps at the blob positions
/// `centre_um + ρ̃(t, d)·d` with spatial width `σ·ρ̃`, plus optional
/// additive Gaussian noise, clipped to `[0, 1]`.
pub fn generate_volume_phantom(
    spec: &PhantomSpec,
    dims: [usize; 3],
    spacing_um: [f64; 3],
    origin_um: [f64; 3],
    centre_um: Vector3<f64>,
    seed: u64,
) -> VolumetricSequence {
    spec.validate().expect("invalid phantom spec");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let tf = t as f64;
        let rot = spec.rotation_at(tf);
        let positions: Vec<(Vector3<f64>, f64, f64)> = spec
            .blobs
            .iter()
            .map(|b| {
                let dir = rot * Vector3::from(b.centre);
                let radius = spec.rho.radius_at(tf);
                let amplitude = match spec.law {
                    ConservationLaw::Brightness => b.amplitude,
                    ConservationLaw::Mass => {
                        b.amplitude * (spec.rho.radius_at(0.0) / radius).powi(2)
                    }
                };
                (centre_um + dir * radius, b.sigma * radius, amplitude)
            })
            .collect();
        let mut frame = vec![0.0f32; dims[0] * dims[1] * dims[2]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = Vector3::new(
                        origin_um[0] + i as f64 * spacing_um[0],
                        origin_um[1] + j as f64 * spacing_um[1],
                        origin_um[2] + k as f64 * spacing_um[2],
                    );
                    let mut v = 0.0;
                    for (q, sigma, amp) in &positions {
                        v += amp * (-(p - q).norm_squared() / (2.0 * sigma * sigma)).exp();
                    }
                    if spec.noise_sigma > 0.0 {
                        // Box–Muller normal draw.
                        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        let n = (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos();
                        v += spec.noise_sigma * n;
                    }
                    frame[i + dims[0] * (j + dims[1] * k)] = v.clamp(0.0, 1.0) as f32;
                }
            }
        }
        frames.push(frame);
    }
    VolumetricSequence::new(dims, spacing_um, origin_um, 1.0, frames)
        .expect("phantom volume construction cannot fail")
}
