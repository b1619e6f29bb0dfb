//! Cubature over the spherical cap and the full sphere, and surface
//! integrals on the evolving surface via the sphere pullback
//! `∫_M f̂ dM = ∫_{S²} f̃ ρ̃ √(‖∇ρ̃‖² + ρ̃²) dS²`.
//!
//! The rule is a product of Gauss–Legendre in `cos θ` with `m = ⌈(d+1)/2⌉`
//! nodes and `2m + 1` equispaced azimuth nodes, which integrates all
//! spherical polynomials up to degree `d` exactly. Nodes are strictly
//! interior, so no node ever lands on a pole.

use crate::geometry::RadiusField;
use crate::tree_sum;
use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// Spherical cap `arccos(x·e₃) ≤ θ_max`.
    Cap { theta_max: f64 },
    FullSphere,
}

impl Domain {
    pub fn area(&self) -> f64 {
        match self {
            Domain::Cap { theta_max } => 2.0 * std::f64::consts::PI * (1.0 - theta_max.cos()),
            Domain::FullSphere => 4.0 * std::f64::consts::PI,
        }
    }
}

/// Nodes and weights of a product cubature rule on a sphere domain.
#[derive(Debug, Clone)]
pub struct CubatureRule {
    nodes: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    degree: u32,
    domain: Domain,
}

impl CubatureRule {
    /// Rule over the upper-hemisphere cap, exact to polynomial degree `degree`.
    pub fn cap(degree: u32) -> Self {
        Self::cap_with_colatitude(degree, std::f64::consts::FRAC_PI_2)
    }

    pub fn cap_with_colatitude(degree: u32, theta_max: f64) -> Self {
        assert!(degree >= 1 && theta_max > 0.0 && theta_max <= std::f64::consts::PI);
        Self::product_rule(degree, theta_max.cos(), Domain::Cap { theta_max })
    }

    pub fn full_sphere(degree: u32) -> Self {
        assert!(degree >= 1);
        Self::product_rule(degree, -1.0, Domain::FullSphere)
    }

    fn product_rule(degree: u32, u_min: f64, domain: Domain) -> Self {
        let m = (degree as usize + 2) / 2; // ⌈(d+1)/2⌉
        let (gl_nodes, gl_weights) = gauss_legendre(m);
        let n_phi = 2 * m + 1;
        let phi_weight = 2.0 * std::f64::consts::PI / n_phi as f64;

        let mut nodes = Vec::with_capacity(m * n_phi);
        let mut weights = Vec::with_capacity(m * n_phi);
        for (u, wu) in gl_nodes.iter().zip(&gl_weights) {
            // Affine map from [-1, 1] to [u_min, 1] in u = cos θ.
            let cos_theta = 0.5 * ((1.0 - u_min) * u + (1.0 + u_min)) + 0.0;
            let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
            let w = wu * 0.5 * (1.0 - u_min) * phi_weight;
            for k in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64;
                nodes.push(Vector3::new(
                    sin_theta * phi.cos(),
                    sin_theta * phi.sin(),
                    cos_theta,
                ));
                weights.push(w);
            }
        }
        Self {
            nodes,
            weights,
            degree,
            domain,
        }
    }

    pub fn nodes(&self) -> &[Vector3<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Plain sphere integral `∫ f dS²` over the rule's domain.
    pub fn integrate(&self, f: impl Fn(Vector3<f64>) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, q)| f(*x) * q)
            .collect();
        tree_sum(&terms)
    }
}

/// Surface integral of `f̂` over the evolving surface, evaluated through
/// its sphere representation `f̃` and the pullback weight
/// `ρ̃ √(‖∇_{S²}ρ̃‖² + ρ̃²)`.
pub fn surface_integral(
    rule: &CubatureRule,
    rho: &dyn RadiusField,
    f: impl Fn(Vector3<f64>) -> f64,
) -> f64 {
    rule.integrate(|x| f(x) * surface_measure_weight(rho, x))
}

/// The pullback area weight `ρ̃ √(‖∇_{S²}ρ̃‖² + ρ̃²)` at a sphere point.
pub fn surface_measure_weight(rho: &dyn RadiusField, x: Vector3<f64>) -> f64 {
    let r = rho.value(x);
    let g = rho.gradient(x);
    r * (g.norm_squared() + r * r).sqrt()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
