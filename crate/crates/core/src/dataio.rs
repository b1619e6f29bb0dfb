//! Volumetric sequence ingestion, cell-centre detection, centring, and
//! radial projection of image data onto the fitted surface.
//!
//! The volumetric container is a raw little-endian payload (`u8` or `f32`)
//! next to a JSON sidecar describing dimensions, voxel spacing, origin and
//! the intensity scale. Voxel `(i, j, k)` of a frame sits at byte offset
//! `i + nx·(j + ny·k)` and at position `origin + (i,j,k)·spacing` in µm.

use crate::geometry::RadiusField;
use nalgebra::{Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataIoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header or manifest: {0}")]
    FormatError(String),
    #[error("payload size {actual} does not match header ({expected} values expected)")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("frame {frame} out of range 0..{frames}")]
    FrameOutOfRange { frame: usize, frames: usize },
}

/// Number of equispaced samples across the narrow band `c ∈ [1−ε, 1+ε]`.
pub const BAND_SAMPLES: usize = 21;

/// Sidecar header of the raw volumetric format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: String,
    pub spacing_um: [f64; 3],
    pub origin_um: [f64; 3],
    pub frames: usize,
    pub frame_interval_s: f64,
    pub max_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

/// Time-indexed voxel grids with intensities scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct VolumetricSequence {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    frame_interval_s: f64,
    frames: Vec<Vec<f32>>,
}

impl VolumetricSequence {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        frame_interval_s: f64,
        frames: Vec<Vec<f32>>,
    ) -> Result<Self, DataIoError> {
        let voxels = dims[0] * dims[1] * dims[2];
        if spacing.iter().any(|&s| s <= 0.0) {
            return Err(DataIoError::FormatError("spacing must be positive".into()));
        }
        for frame in &frames {
            if frame.len() != voxels {
                return Err(DataIoError::DimensionMismatch {
                    expected: voxels,
                    actual: frame.len(),
                });
            }
            if frame.iter().any(|v| !(0.0..=1.0).contains(&(*v as f64))) {
                return Err(DataIoError::FormatError(
                    "intensities must lie in [0,1] after scaling".into(),
                ));
            }
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            frame_interval_s,
            frames,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn frame_interval_s(&self) -> f64 {
        self.frame_interval_s
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn voxel(&self, t: usize, i: usize, j: usize, k: usize) -> f64 {
        self.frames[t][i + self.dims[0] * (j + self.dims[1] * k)] as f64
    }

    fn voxel_or_zero(&self, t: usize, i: i64, j: i64, k: i64) -> f64 {
        if i < 0
            || j < 0
            || k < 0
            || i >= self.dims[0] as i64
            || j >= self.dims[1] as i64
            || k >= self.dims[2] as i64
        {
            0.0
        } else {
            self.voxel(t, i as usize, j as usize, k as usize)
        }
    }

    /// Voxel-space coordinates of a µm point.
    fn to_voxel(&self, p: Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        )
    }

    /// Trilinear interpolation of the piecewise linear extension; zero
    /// outside the cuboid.
    pub fn trilinear_sample(&self, t: usize, p: Vector3<f64>) -> f64 {
        let v = self.to_voxel(p);
        let base = v.map(|c| c.floor());
        let frac = v - base;
        let (i0, j0, k0) = (base.x as i64, base.y as i64, base.z as i64);
        let mut value = 0.0;
        for di in 0..2i64 {
            let wx = if di == 0 { 1.0 - frac.x } else { frac.x };
            for dj in 0..2i64 {
                let wy = if dj == 0 { 1.0 - frac.y } else { frac.y };
                for dk in 0..2i64 {
                    let wz = if dk == 0 { 1.0 - frac.z } else { frac.z };
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        value += w * self.voxel_or_zero(t, i0 + di, j0 + dj, k0 + dk);
                    }
                }
            }
        }
        value
    }

    /// Central-difference gradient at a grid node (one-sided at the
    /// boundaries), in 1/µm.
    fn node_gradient(&self, t: usize, i: i64, j: i64, k: i64) -> Vector3<f64> {
        let mut g = Vector3::zeros();
        let idx = [i, j, k];
        let dims = [
            self.dims[0] as i64,
            self.dims[1] as i64,
            self.dims[2] as i64,
        ];
        if idx.iter().zip(&dims).any(|(&a, &d)| a < 0 || a >= d) {
            return g;
        }
        for axis in 0..3 {
            let mut lo = idx;
            let mut hi = idx;
            lo[axis] -= 1;
            hi[axis] += 1;
            let (lo_valid, hi_valid) = (lo[axis] >= 0, hi[axis] < dims[axis]);
            let (a, b, span) = match (lo_valid, hi_valid) {
                (true, true) => (lo, hi, 2.0),
                (false, true) => (idx, hi, 1.0),
                (true, false) => (lo, idx, 1.0),
                (false, false) => continue,
            };
            g[axis] = (self.voxel_or_zero(t, b[0], b[1], b[2])
                - self.voxel_or_zero(t, a[0], a[1], a[2]))
                / (span * self.spacing[axis]);
        }
        g
    }

    /// Trilinear interpolation of the node-gradient field at a µm point;
    /// zero outside the cuboid.
    pub fn gradient_sample(&self, t: usize, p: Vector3<f64>) -> Vector3<f64> {
        let v = self.to_voxel(p);
        let base = v.map(|c| c.floor());
        let frac = v - base;
        let (i0, j0, k0) = (base.x as i64, base.y as i64, base.z as i64);
        let mut value = Vector3::zeros();
        for di in 0..2i64 {
            let wx = if di == 0 { 1.0 - frac.x } else { frac.x };
            for dj in 0..2i64 {
                let wy = if dj == 0 { 1.0 - frac.y } else { frac.y };
                for dk in 0..2i64 {
                    let wz = if dk == 0 { 1.0 - frac.z } else { frac.z };
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        value += self.node_gradient(t, i0 + di, j0 + dj, k0 + dk) * w;
                    }
                }
            }
        }
        value
    }

    /// Separable Gaussian blur of one frame (truncated at 3σ), σ in µm.
    pub fn gaussian_blur(&self, t: usize, sigma_um: f64) -> Vec<f32> {
        assert!(sigma_um > 0.0);
        let mut data: Vec<f64> = self.frames[t].iter().map(|&v| v as f64).collect();
        let dims = self.dims;
        for axis in 0..3 {
            let sigma = sigma_um / self.spacing[axis];
            let radius = (3.0 * sigma).ceil() as i64;
            let kernel: Vec<f64> = (-radius..=radius)
                .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
                .collect();
            let norm: f64 = kernel.iter().sum();
            let kernel: Vec<f64> = kernel.into_iter().map(|k| k / norm).collect();
            let mut out = vec![0.0; data.len()];
            let stride = match axis {
                0 => 1usize,
                1 => dims[0],
                _ => dims[0] * dims[1],
            };
            let extent = dims[axis] as i64;
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let pos = [i as i64, j as i64, k as i64];
                        let idx = i + dims[0] * (j + dims[1] * k);
                        let mut acc = 0.0;
                        for (ki, w) in kernel.iter().enumerate() {
                            let off = ki as i64 - radius;
                            let q = pos[axis] + off;
                            if q >= 0 && q < extent {
                                acc += w * data[(idx as i64 + off * stride as i64) as usize];
                            }
                        }
                        out[idx] = acc;
                    }
                }
            }
            data = out;
        }
        data.into_iter().map(|v| v as f32).collect()
    }

    /// Write the raw payload and JSON sidecar; `json_path` names the
    /// sidecar, the payload goes to the same stem with extension `raw`.
    pub fn save(&self, json_path: &Path, dtype: &str) -> Result<(), DataIoError> {
        let raw_path = json_path.with_extension("raw");
        let header = VolumeHeader {
            dims: self.dims,
            dtype: dtype.to_string(),
            spacing_um: self.spacing,
            origin_um: self.origin,
            frames: self.frames.len(),
            frame_interval_s: self.frame_interval_s,
            max_value: match dtype {
                "u8" => 255.0,
                _ => 1.0,
            },
            raw: None,
        };
        let mut raw = std::fs::File::create(&raw_path)?;
        match dtype {
            "u8" => {
                let mut bytes = Vec::with_capacity(self.frames.len() * self.frames[0].len());
                for frame in &self.frames {
                    bytes.extend(frame.iter().map(|&v| (v * 255.0).round() as u8));
                }
                raw.write_all(&bytes)?;
            }
            "f32" => {
                let mut bytes = Vec::with_capacity(4 * self.frames.len() * self.frames[0].len());
                for frame in &self.frames {
                    for v in frame {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                }
                raw.write_all(&bytes)?;
            }
            other => {
                return Err(DataIoError::FormatError(format!(
                    "unsupported dtype {other}"
                )))
            }
        }
        std::fs::write(
            json_path,
            serde_json::to_string_pretty(&header)
                .map_err(|e| DataIoError::FormatError(e.to_string()))?,
        )?;
        Ok(())
    }
}

/// Load a volumetric sequence from its JSON sidecar.
pub fn load_sequence(json_path: &Path) -> Result<VolumetricSequence, DataIoError> {
    let header: VolumeHeader = serde_json::from_str(&std::fs::read_to_string(json_path)?)
        .map_err(|e| DataIoError::FormatError(e.to_string()))?;
    if header.max_value <= 0.0 {
        return Err(DataIoError::FormatError("max_value must be positive".into()));
    }
    let raw_path: PathBuf = match &header.raw {
        Some(name) => json_path.parent().unwrap_or(Path::new(".")).join(name),
        None => json_path.with_extension("raw"),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(&raw_path)?.read_to_end(&mut bytes)?;

    let voxels = header.dims[0] * header.dims[1] * header.dims[2];
    let expected = voxels * header.frames;
    let values: Vec<f64> = match header.dtype.as_str() {
        "u8" => bytes.iter().map(|&b| b as f64).collect(),
        "f32" => {
            if bytes.len() % 4 != 0 {
                return Err(DataIoError::FormatError(
                    "f32 payload length not a multiple of 4".into(),
                ));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
        other => {
            return Err(DataIoError::FormatError(format!(
                "unsupported dtype {other}"
            )))
        }
    };
    if values.len() != expected {
        return Err(DataIoError::DimensionMismatch {
            expected,
            actual: values.len(),
        });
    }
    let frames: Vec<Vec<f32>> = values
        .chunks_exact(voxels)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&v| (v / header.max_value) as f32)
                .collect()
        })
        .collect();
    VolumetricSequence::new(
        header.dims,
        header.spacing_um,
        header.origin_um,
        header.frame_interval_s,
        frames,
    )
}

/// Local maxima (26-neighbourhood) of the Gaussian-smoothed frame with
/// smoothed value at least `threshold`, in µm coordinates.
pub fn detect_cell_centres(
    seq: &VolumetricSequence,
    t: usize,
    sigma_um: f64,
    threshold: f64,
) -> Vec<Vector3<f64>> {
    let smooth = seq.gaussian_blur(t, sigma_um);
    let [nx, ny, nz] = seq.dims();
    let at = |i: usize, j: usize, k: usize| smooth[i + nx * (j + ny * k)];
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = at(i, j, k);
                if (v as f64) < threshold {
                    continue;
                }
                let mut is_max = true;
                'scan: for dk in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            if di == 0 && dj == 0 && dk == 0 {
                                continue;
                            }
                            let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                            if a < 0 || b < 0 || c < 0
                                || a >= nx as i64 || b >= ny as i64 || c >= nz as i64
                            {
                                continue;
                            }
                            if at(a as usize, b as usize, c as usize) >= v {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_max {
                    out.push(Vector3::new(
                        seq.origin[0] + i as f64 * seq.spacing[0],
                        seq.origin[1] + j as f64 * seq.spacing[1],
                        seq.origin[2] + k as f64 * seq.spacing[2],
                    ));
                }
            }
        }
    }
    out
}

/// Algebraic least-squares sphere fit: returns the centre and the points
/// shifted by it. Solves `‖x‖² = 2c·x + (r² − ‖c‖²)` in the least-squares
/// sense; coplanar configurations make the normal matrix singular.
pub fn centre_points(
    points: &[Vector3<f64>],
) -> Result<(Vector3<f64>, Vec<Vector3<f64>>), DataIoError> {
    if points.len() < 4 {
        return Err(DataIoError::DegenerateConfiguration(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let mut ata = Matrix4::zeros();
    let mut atb = Vector4::zeros();
    for p in points {
        let row = Vector4::new(2.0 * p.x, 2.0 * p.y, 2.0 * p.z, 1.0);
        ata += row * row.transpose();
        atb += row * p.norm_squared();
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(DataIoError::DegenerateConfiguration(
            "points are (nearly) coplanar".into(),
        ));
    }
    let solution = svd
        .solve(&atb, 1e-12 * smax)
        .map_err(|e| DataIoError::DegenerateConfiguration(e.to_string()))?;
    let centre = Vector3::new(solution[0], solution[1], solution[2]);
    let shifted: Vec<Vector3<f64>> = points.iter().map(|p| p - centre).collect();
    if shifted.iter().any(|p| p.norm() == 0.0) {
        return Err(DataIoError::DegenerateConfiguration(
            "a point coincides with the fitted centre".into(),
        ));
    }
    Ok((centre, shifted))
}

/// Maximum intensity along the radial segment `c·ρ̃(x)·x`,
/// `c ∈ [1−ε, 1+ε]`, sampled at [`BAND_SAMPLES`] equispaced values.
pub fn radial_max_projection(
    seq: &VolumetricSequence,
    t: usize,
    rho: &dyn RadiusField,
    epsilon: f64,
    x: Vector3<f64>,
) -> f64 {
    let radius = rho.value(x);
    band_values(seq, t, radius, epsilon, x)
        .fold(0.0f64, f64::max)
}

fn band_values<'a>(
    seq: &'a VolumetricSequence,
    t: usize,
    radius: f64,
    epsilon: f64,
    x: Vector3<f64>,
) -> impl Iterator<Item = f64> + 'a {
    (0..BAND_SAMPLES).map(move |s| {
        let c = 1.0 - epsilon + 2.0 * epsilon * s as f64 / (BAND_SAMPLES - 1) as f64;
        seq.trilinear_sample(t, x * (c * radius))
    })
}

/// Surface gradient approximation: tangential projection of the mean
/// ambient gradient over the narrow band.
pub fn surface_gradient(
    seq: &VolumetricSequence,
    t: usize,
    rho: &dyn RadiusField,
    epsilon: f64,
    x: Vector3<f64>,
) -> Vector3<f64> {
    let radius = rho.value(x);
    let mut mean = Vector3::zeros();
    for s in 0..BAND_SAMPLES {
        let c = 1.0 - epsilon + 2.0 * epsilon * s as f64 / (BAND_SAMPLES - 1) as f64;
        mean += seq.gradient_sample(t, x * (c * radius));
    }
    mean /= BAND_SAMPLES as f64;
    let normal = crate::geometry::surface_normal(rho, x);
    mean - normal * normal.dot(&mean)
}

/// Projected image data of one frame at a fixed node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFrameData {
    /// `f̂` at the nodes, in `[0, 1]`.
    pub values: Vec<f64>,
    /// `∇_M f̂` at the nodes (ambient, tangent).
    pub gradients: Vec<Vector3<f64>>,
    /// Fraction of narrow-band samples that were exactly zero; large values
    /// mean the band reaches outside the fluorescent shell and `ε` should
    /// be reconsidered.
    pub zero_band_fraction: f64,
}

/// Full projected sequence at matched sphere directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceData {
    pub frames: Vec<SurfaceFrameData>,
    pub epsilon: f64,
    pub node_count: usize,
}

impl SurfaceData {
    /// Forward temporal difference `∂ₜf̂(t,·) = f̂(t+1,·) − f̂(t,·)` at
    /// matched nodes; this realises the parametrised time derivative since
    /// each frame is sampled over the same sphere directions through its
    /// own radius.
    pub fn temporal_difference(&self, t: usize) -> Result<Vec<f64>, DataIoError> {
        if t + 1 >= self.frames.len() {
            return Err(DataIoError::FrameOutOfRange {
                frame: t,
                frames: self.frames.len().saturating_sub(1),
            });
        }
        Ok(self.frames[t + 1]
            .values
            .iter()
            .zip(&self.frames[t].values)
            .map(|(next, cur)| next - cur)
            .collect())
    }

    /// Binary payload + JSON manifest cache. The payload holds, per frame,
    /// all node values followed by all gradients (xyz), little-endian f64.
    pub fn save(&self, json_path: &Path) -> Result<(), DataIoError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            frames: usize,
            nodes: usize,
            epsilon: f64,
            zero_band_fractions: Vec<f64>,
            raw: &'a str,
        }
        let raw_path = json_path.with_extension("bin");
        let mut bytes = Vec::new();
        for frame in &self.frames {
            for v in &frame.values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            for g in &frame.gradients {
                for c in [g.x, g.y, g.z] {
                    bytes.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        std::fs::write(&raw_path, bytes)?;
        let manifest = Manifest {
            frames: self.frames.len(),
            nodes: self.node_count,
            epsilon: self.epsilon,
            zero_band_fractions: self.frames.iter().map(|f| f.zero_band_fraction).collect(),
            raw: raw_path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("surface_data.bin"),
        };
        std::fs::write(
            json_path,
            serde_json::to_string_pretty(&manifest)
                .map_err(|e| DataIoError::FormatError(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(json_path: &Path) -> Result<Self, DataIoError> {
        #[derive(Deserialize)]
        struct Manifest {
            frames: usize,
            nodes: usize,
            epsilon: f64,
            zero_band_fractions: Vec<f64>,
            raw: String,
        }
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(json_path)?)
            .map_err(|e| DataIoError::FormatError(e.to_string()))?;
        let raw_path = json_path
            .parent()
            .unwrap_or(Path::new("."))
            .join(&manifest.raw);
        let bytes = std::fs::read(raw_path)?;
        let per_frame = manifest.nodes * 4; // value + 3 gradient components
        let expected = manifest.frames * per_frame;
        if bytes.len() != expected * 8 {
            return Err(DataIoError::DimensionMismatch {
                expected,
                actual: bytes.len() / 8,
            });
        }
        let doubles: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut frames = Vec::with_capacity(manifest.frames);
        for t in 0..manifest.frames {
            let base = t * per_frame;
            let values = doubles[base..base + manifest.nodes].to_vec();
            let gradients = (0..manifest.nodes)
                .map(|i| {
                    let g = base + manifest.nodes + 3 * i;
                    Vector3::new(doubles[g], doubles[g + 1], doubles[g + 2])
                })
                .collect();
            frames.push(SurfaceFrameData {
                values,
                gradients,
                zero_band_fraction: manifest.zero_band_fractions.get(t).copied().unwrap_or(0.0),
            });
        }
        Ok(Self {
            frames,
            epsilon: manifest.epsilon,
            node_count: manifest.nodes,
        })
    }
}

/// Project every frame of a volumetric sequence onto its fitted surface at
/// the given sphere nodes.
pub fn extract_surface_data<R: RadiusField>(
    seq: &VolumetricSequence,
    slices: &[R],
    nodes: &[Vector3<f64>],
    epsilon: f64,
) -> Result<SurfaceData, DataIoError> {
    if slices.len() != seq.frame_count() {
        return Err(DataIoError::FrameOutOfRange {
            frame: slices.len(),
            frames: seq.frame_count(),
        });
    }
    let frames: Vec<SurfaceFrameData> = slices
        .iter()
        .enumerate()
        .map(|(t, rho)| {
            let per_node: Vec<(f64, Vector3<f64>, usize)> = nodes
                .par_iter()
                .map(|&x| {
                    let radius = rho.value(x);
                    let mut zeros = 0usize;
                    let mut max = 0.0f64;
                    for v in band_values(seq, t, radius, epsilon, x) {
                        if v == 0.0 {
                            zeros += 1;
                        }
                        max = max.max(v);
                    }
                    let grad = surface_gradient(seq, t, rho, epsilon, x);
                    (max, grad, zeros)
                })
                .collect();
            let zeros: usize = per_node.iter().map(|e| e.2).sum();
            SurfaceFrameData {
                values: per_node.iter().map(|e| e.0).collect(),
                gradients: per_node.iter().map(|e| e.1).collect(),
                zero_band_fraction: zeros as f64 / (nodes.len() * BAND_SAMPLES) as f64,
            }
        })
        .collect();
    Ok(SurfaceData {
        frames,
        epsilon,
        node_count: nodes.len(),
    })
}

/// Read scattered points from CSV lines `frame,x,y,z` (µm); header line
/// optional. Returns per-frame point lists, sized by the largest frame
/// index.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<Vector3<f64>>>, DataIoError> {
    let text = std::fs::read_to_string(path)?;
    parse_points_csv(&text)
}

pub fn parse_points_csv(text: &str) -> Result<Vec<Vec<Vector3<f64>>>, DataIoError> {
    let mut frames: Vec<Vec<Vector3<f64>>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(DataIoError::FormatError(format!(
                "line {}: expected frame,x,y,z",
                lineno + 1
            )));
        }
        if lineno == 0 && fields[0].parse::<usize>().is_err() {
            continue; // header
        }
        let frame: usize = fields[0].parse().map_err(|_| {
            DataIoError::FormatError(format!("line {}: bad frame index", lineno + 1))
        })?;
        let mut coords = [0.0; 3];
        for (slot, field) in coords.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| {
                DataIoError::FormatError(format!("line {}: bad coordinate", lineno + 1))
            })?;
        }
        if frames.len() <= frame {
            frames.resize(frame + 1, Vec::new());
        }
        frames[frame].push(Vector3::new(coords[0], coords[1], coords[2]));
    }
    Ok(frames)
}

pub fn write_points_csv(path: &Path, frames: &[Vec<Vector3<f64>>]) -> Result<(), DataIoError> {
    let mut out = String::from("frame,x,y,z\n");
    for (t, frame) in frames.iter().enumerate() {
        for p in frame {
            out.push_str(&format!("{t},{},{},{}\n", p.x, p.y, p.z));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
