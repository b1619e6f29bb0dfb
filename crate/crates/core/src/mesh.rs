//! Icosphere generation by iterative midpoint refinement.
//!
//! Used for placing the compactly supported basis fields approximately
//! uniformly on the sphere and for sampling fields during visualisation.

use nalgebra::Vector3;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("refinement level {0} exceeds the guard limit of 9")]
    LevelTooLarge(u32),
}

/// Triangulated approximation of the unit sphere.
#[derive(Debug, Clone)]
pub struct TriSphereMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    level: u32,
}

impl TriSphereMesh {
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Arithmetic face centroids projected back onto the sphere.
    pub fn face_centroids(&self) -> Vec<Vector3<f64>> {
        self.faces
            .iter()
            .map(|f| {
                ((self.vertices[f[0]] + self.vertices[f[1]] + self.vertices[f[2]]) / 3.0)
                    .normalize()
            })
            .collect()
    }

    /// Indices of vertices inside the spherical cap `arccos(x·e₃) ≤ θ_max`.
    pub fn cap_vertices(&self, theta_max: f64) -> Vec<usize> {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.z.clamp(-1.0, 1.0).acos() <= theta_max)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Icosahedron oriented with two vertices exactly at ±e₃, so that cap
/// selection and hemisphere work are deterministic.
fn base_icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let z = 1.0 / 5.0_f64.sqrt();
    let r = 2.0 / 5.0_f64.sqrt();
    let mut vertices = vec![Vector3::new(0.0, 0.0, 1.0)];
    // Upper ring of five at z = 1/√5, lower ring phase-shifted by π/5.
    for i in 0..5 {
        let a = 2.0 * std::f64::consts::PI * i as f64 / 5.0;
        vertices.push(Vector3::new(r * a.cos(), r * a.sin(), z));
    }
    for i in 0..5 {
        let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / 5.0;
        vertices.push(Vector3::new(r * a.cos(), r * a.sin(), -z));
    }
    vertices.push(Vector3::new(0.0, 0.0, -1.0));

    let up = |i: usize| 1 + i % 5;
    let lo = |i: usize| 6 + i % 5;
    let mut faces = Vec::with_capacity(20);
    for i in 0..5 {
        faces.push([0, up(i), up(i + 1)]);
        faces.push([up(i), lo(i), up(i + 1)]);
        faces.push([up(i + 1), lo(i), lo(i + 1)]);
        faces.push([11, lo(i + 1), lo(i)]);
    }
    (vertices, faces)
}

/// Generate an icosphere with `2 + 10·4^level` vertices.
///
/// Each refinement step halves edge lengths by connecting edge midpoints
/// and projecting them onto the unit sphere; midpoint vertices are
/// deduplicated through an exact sorted-edge key map so the vertex-count
/// formula holds exactly.
pub fn icosphere(level: u32) -> Result<TriSphereMesh, MeshError> {
    if level > 9 {
        return Err(MeshError::LevelTooLarge(level));
    }
    let (mut vertices, mut faces) = base_icosahedron();
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                mid[e] = *midpoints.entry(key).or_insert_with(|| {
                    vertices.push(((vertices[a] + vertices[b]) / 2.0).normalize());
                    vertices.len() - 1
                });
            }
            next_faces.push([f[0], mid[0], mid[2]]);
            next_faces.push([f[1], mid[1], mid[0]]);
            next_faces.push([f[2], mid[2], mid[1]]);
            next_faces.push([mid[0], mid[1], mid[2]]);
        }
        faces = next_faces;
    }
    Ok(TriSphereMesh {
        vertices,
        faces,
        level,
    })
}
