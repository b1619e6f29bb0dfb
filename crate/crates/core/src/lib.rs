//! Reconstruction of evolving sphere-like surfaces from scattered point
//! measurements and estimation of tangential motion on them from surface
//! image data.
//!
//! The pipeline: fit a time-dependent radius function over the unit sphere
//! to scattered 3-D points ([`surfacefit`]), pull volumetric image data onto
//! the fitted surface ([`dataio`]), then minimise a brightness-conservation
//! or mass-conservation functional over a span of compactly supported
//! tangent basis fields ([`basisfield`], [`motion`]). Surface integrals are
//! evaluated on the sphere via a cubature rule ([`quadrature`]), and all
//! differential-geometric quantities of the evolving surface come from
//! [`geometry`]. [`synth`] produces phantoms with known ground truth and
//! [`viz`] renders colour-coded flow images, streamlines and meshes.

pub mod basisfield;
pub mod dataio;
pub mod geometry;
pub mod harmonics;
pub mod mesh;
pub mod motion;
pub mod quadrature;
pub mod surfacefit;
pub mod synth;
pub mod viz;

pub use geometry::RadiusField;

/// Deterministic pairwise (tree) summation.
///
/// Used for every quadrature reduction so that results are bitwise identical
/// regardless of how the terms were produced (serially or from parallel
/// chunks collected in order).
pub fn tree_sum(terms: &[f64]) -> f64 {
    match terms.len() {
        0 => 0.0,
        1 => terms[0],
        n => {
            let (lo, hi) = terms.split_at(n / 2);
            tree_sum(lo) + tree_sum(hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::tree_sum;

    #[test]
    fn tree_sum_matches_sequential_on_exact_values() {
        let terms: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(tree_sum(&terms), 499_500.0);
    }

    #[test]
    fn tree_sum_empty_and_singleton() {
        assert_eq!(tree_sum(&[]), 0.0);
        assert_eq!(tree_sum(&[4.25]), 4.25);
    }
}
