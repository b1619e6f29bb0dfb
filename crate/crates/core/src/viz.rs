//! Flow colour-coding, streamline renderings and mesh export.
//!
//! Surface vectors are projected to the `x¹x²`-plane, rescaled to their
//! original length, and coloured by the standard flow colour wheel (hue by
//! angle, saturation by magnitude relative to the disk radius `R`; zero
//! maps to white). Rasters are orthographic top views of the northern
//! hemisphere written as binary PPM; meshes go out as legacy ASCII VTK
//! PolyData; streamlines as SVG polylines fading from yellow to green.

use crate::mesh::TriSphereMesh;
use nalgebra::{Vector2, Vector3};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Project a surface vector to the plane and rescale it to its original
/// length; vectors orthogonal to the plane map to zero.
pub fn project_rescale(v: Vector3<f64>) -> Vector2<f64> {
    let planar = Vector2::new(v.x, v.y);
    let pn = planar.norm();
    if pn > 0.0 {
        planar * (v.norm() / pn)
    } else {
        Vector2::zeros()
    }
}

/// The 55-segment flow colour wheel (hue transitions
/// red→yellow→green→cyan→blue→magenta→red).
#[derive(Debug, Clone)]
pub struct ColorWheel {
    segments: Vec<[f64; 3]>,
    /// Disk radius: the speed mapped to full saturation.
    pub radius: f64,
}

impl ColorWheel {
    /// Wheel with the given maximum encoded speed.
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0);
        let transitions = [(15, 0, 1), (6, 1, 3), (4, 3, 2), (11, 2, 5), (13, 5, 4), (6, 4, 0)];
        // Channel codes: 0 red, 1 yellow-ish pair handled via component
        // masks below. Build by interpolating the six primary anchors.
        let anchors = [
            [1.0, 0.0, 0.0], // red
            [1.0, 1.0, 0.0], // yellow
            [0.0, 1.0, 1.0], // cyan
            [0.0, 1.0, 0.0], // green
            [1.0, 0.0, 1.0], // magenta
            [0.0, 0.0, 1.0], // blue
        ];
        let mut segments = Vec::with_capacity(55);
        for &(count, from, to) in &transitions {
            let a = anchors[from as usize];
            let b = anchors[to as usize];
            for i in 0..count {
                let t = i as f64 / count as f64;
                segments.push([
                    a[0] + (b[0] - a[0]) * t,
                    a[1] + (b[1] - a[1]) * t,
                    a[2] + (b[2] - a[2]) * t,
                ]);
            }
        }
        debug_assert_eq!(segments.len(), 55);
        Self { segments, radius }
    }

    /// Hue angle of a planar vector in `[0, 2π)`.
    pub fn hue_angle(v: Vector2<f64>) -> f64 {
        let a = v.y.atan2(v.x);
        if a < 0.0 {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }

    /// Colour of a planar vector: hue from its angle, saturation from
    /// `min(‖v‖/R, 1)`; the zero vector maps to white.
    pub fn color(&self, v: Vector2<f64>) -> [u8; 3] {
        let speed = v.norm();
        if speed == 0.0 {
            return [255, 255, 255];
        }
        let n = self.segments.len() as f64;
        let pos = Self::hue_angle(v) / (2.0 * std::f64::consts::PI) * n;
        let i0 = (pos.floor() as usize) % self.segments.len();
        let i1 = (i0 + 1) % self.segments.len();
        let frac = pos - pos.floor();
        let sat = (speed / self.radius).min(1.0);
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            let hue = self.segments[i0][c] * (1.0 - frac) + self.segments[i1][c] * frac;
            // Fade towards white for small vectors.
            let value = 1.0 - sat * (1.0 - hue);
            rgb[c] = (value.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        rgb
    }
}

/// Per-face colours of a surface vector field after projection and
/// rescaling. `radius` defaults to the longest vector when `None`.
pub fn colorize(field: &[Vector3<f64>], radius: Option<f64>) -> (Vec<[u8; 3]>, f64) {
    let r = radius.unwrap_or_else(|| {
        field
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE)
    });
    let wheel = ColorWheel::new(r);
    (
        field
            .iter()
            .map(|&v| wheel.color(project_rescale(v)))
            .collect(),
        r,
    )
}

/// Simple RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, color: [u8; 3]) {
        self.pixels[y * self.width + x] = color;
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Orthographic top view (projection along −e₃) of the northern
/// hemisphere: mesh faces are filled with their per-face colours; the
/// background stays white. Vertices may be radially scaled by a radius
/// field and optionally widened by a factor for display.
pub fn render_top_view(
    mesh: &TriSphereMesh,
    face_colors: &[[u8; 3]],
    rho: Option<&dyn crate::geometry::RadiusField>,
    size: usize,
    radial_widen: f64,
) -> Raster {
    assert_eq!(face_colors.len(), mesh.faces().len());
    let scale_of = |v: &Vector3<f64>| -> Vector3<f64> {
        let r = rho.map_or(1.0, |f| f.value(*v)) * (1.0 + radial_widen);
        v * r
    };
    let positions: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| scale_of(v)).collect();
    let extent = positions
        .iter()
        .filter(|p| p.z >= 0.0)
        .map(|p| p.x.hypot(p.y))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut raster = Raster::filled(size, size, [255, 255, 255]);
    let to_pixel = |p: &Vector3<f64>| -> Vector2<f64> {
        Vector2::new(
            (p.x / extent + 1.0) * 0.5 * (size as f64 - 1.0),
            (1.0 - p.y / extent) * 0.5 * (size as f64 - 1.0),
        )
    };
    for (face, color) in mesh.faces().iter().zip(face_colors) {
        let tri = [
            positions[face[0]],
            positions[face[1]],
            positions[face[2]],
        ];
        // Northern hemisphere only.
        if tri.iter().any(|p| p.z < 0.0) {
            continue;
        }
        let px = [to_pixel(&tri[0]), to_pixel(&tri[1]), to_pixel(&tri[2])];
        fill_triangle(&mut raster, &px, *color);
    }
    raster
}

fn fill_triangle(raster: &mut Raster, p: &[Vector2<f64>; 3], color: [u8; 3]) {
    let min_x = p.iter().map(|v| v.x).fold(f64::MAX, f64::min).floor().max(0.0) as usize;
    let max_x = (p.iter().map(|v| v.x).fold(f64::MIN, f64::max).ceil() as usize)
        .min(raster.width.saturating_sub(1));
    let min_y = p.iter().map(|v| v.y).fold(f64::MAX, f64::min).floor().max(0.0) as usize;
    let max_y = (p.iter().map(|v| v.y).fold(f64::MIN, f64::max).ceil() as usize)
        .min(raster.height.saturating_sub(1));
    let area = (p[1] - p[0]).perp(&(p[2] - p[0]));
    if area.abs() < 1e-12 {
        return;
    }
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let q = Vector2::new(x as f64, y as f64);
            let w0 = (p[1] - q).perp(&(p[2] - q)) / area;
            let w1 = (p[2] - q).perp(&(p[0] - q)) / area;
            let w2 = 1.0 - w0 - w1;
            if w0 >= -1e-9 && w1 >= -1e-9 && w2 >= -1e-9 {
                raster.set(x, y, color);
            }
        }
    }
}

/// Binary PPM (P6) encoding.
pub fn ppm_bytes(raster: &Raster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    for p in &raster.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn export_image(raster: &Raster, path: &Path) -> Result<(), VizError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&ppm_bytes(raster))?;
    Ok(())
}

/// Explicit-Euler streamline of a steady planar field: exactly
/// `steps + 1` points.
pub fn streamline(
    sample: &dyn Fn(Vector2<f64>) -> Vector2<f64>,
    start: Vector2<f64>,
    kappa: f64,
    steps: usize,
) -> Vec<Vector2<f64>> {
    assert!(kappa > 0.0);
    let mut points = Vec::with_capacity(steps + 1);
    let mut x = start;
    points.push(x);
    for _ in 0..steps {
        x += sample(x) * kappa;
        points.push(x);
    }
    points
}

/// Regular planar grid of 2-D vectors with bilinear interpolation, used to
/// sample projected fields for streamline tracing.
#[derive(Debug, Clone)]
pub struct PlanarGridField {
    origin: Vector2<f64>,
    step: f64,
    cols: usize,
    rows: usize,
    vectors: Vec<Vector2<f64>>,
}

impl PlanarGridField {
    pub fn new(origin: Vector2<f64>, step: f64, cols: usize, rows: usize) -> Self {
        Self {
            origin,
            step,
            cols,
            rows,
            vectors: vec![Vector2::zeros(); cols * rows],
        }
    }

    pub fn set(&mut self, col: usize, row: usize, v: Vector2<f64>) {
        self.vectors[row * self.cols + col] = v;
    }

    fn at(&self, col: i64, row: i64) -> Vector2<f64> {
        if col < 0 || row < 0 || col >= self.cols as i64 || row >= self.rows as i64 {
            Vector2::zeros()
        } else {
            self.vectors[row as usize * self.cols + col as usize]
        }
    }

    /// Bilinear sample; zero outside the grid.
    pub fn sample(&self, p: Vector2<f64>) -> Vector2<f64> {
        let gx = (p.x - self.origin.x) / self.step;
        let gy = (p.y - self.origin.y) / self.step;
        let (bx, by) = (gx.floor(), gy.floor());
        let (fx, fy) = (gx - bx, gy - by);
        let (c, r) = (bx as i64, by as i64);
        self.at(c, r) * ((1.0 - fx) * (1.0 - fy))
            + self.at(c + 1, r) * (fx * (1.0 - fy))
            + self.at(c, r + 1) * ((1.0 - fx) * fy)
            + self.at(c + 1, r + 1) * (fx * fy)
    }
}

/// Colour ramp from yellow to green along the streamline parameter.
pub fn streamline_color(tau: usize, tau_max: usize) -> [u8; 3] {
    let t = if tau_max == 0 {
        0.0
    } else {
        tau as f64 / tau_max as f64
    };
    let from = [255.0, 255.0, 0.0];
    let to = [0.0, 128.0, 0.0];
    [
        (from[0] + (to[0] - from[0]) * t).round() as u8,
        (from[1] + (to[1] - from[1]) * t).round() as u8,
        (from[2] + (to[2] - from[2]) * t).round() as u8,
    ]
}

/// SVG document with one polyline per streamline, coloured per step.
pub fn streamlines_svg(lines: &[Vec<Vector2<f64>>], width: f64, height: f64) -> String {
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n"
    );
    for line in lines {
        let steps = line.len().saturating_sub(1);
        for (tau, pair) in line.windows(2).enumerate() {
            let [r, g, b] = streamline_color(tau, steps.max(1) - 1);
            svg.push_str(&format!(
                "  <line x1=\"{:.4}\" y1=\"{:.4}\" x2=\"{:.4}\" y2=\"{:.4}\" stroke=\"rgb({r},{g},{b})\" stroke-width=\"1\"/>\n",
                pair[0].x, pair[0].y, pair[1].x, pair[1].y
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Legacy ASCII VTK PolyData export: points, triangles, optional per-vertex
/// scalars/vectors and per-face colours. Vertices may be radially scaled by
/// a radius field and widened for display.
#[allow(clippy::too_many_arguments)]
pub fn export_mesh(
    mesh: &TriSphereMesh,
    rho: Option<&dyn crate::geometry::RadiusField>,
    point_scalars: Option<(&str, &[f64])>,
    point_vectors: Option<(&str, &[Vector3<f64>])>,
    face_colors: Option<&[[u8; 3]]>,
    radial_widen: f64,
    path: &Path,
) -> Result<(), VizError> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("surface flow output\n");
    out.push_str("ASCII\nDATASET POLYDATA\n");
    out.push_str(&format!("POINTS {} double\n", mesh.vertices().len()));
    for v in mesh.vertices() {
        let r = rho.map_or(1.0, |f| f.value(*v)) * (1.0 + radial_widen);
        let p = v * r;
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out.push_str(&format!(
        "POLYGONS {} {}\n",
        mesh.faces().len(),
        4 * mesh.faces().len()
    ));
    for f in mesh.faces() {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    let mut point_data_written = false;
    if let Some((name, values)) = point_scalars {
        assert_eq!(values.len(), mesh.vertices().len());
        out.push_str(&format!("POINT_DATA {}\n", mesh.vertices().len()));
        point_data_written = true;
        out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for v in values {
            out.push_str(&format!("{v}\n"));
        }
    }
    if let Some((name, vectors)) = point_vectors {
        assert_eq!(vectors.len(), mesh.vertices().len());
        if !point_data_written {
            out.push_str(&format!("POINT_DATA {}\n", mesh.vertices().len()));
        }
        out.push_str(&format!("VECTORS {name} double\n"));
        for v in vectors {
            out.push_str(&format!("{} {} {}\n", v.x, v.y, v.z));
        }
    }
    if let Some(colors) = face_colors {
        assert_eq!(colors.len(), mesh.faces().len());
        out.push_str(&format!("CELL_DATA {}\n", mesh.faces().len()));
        out.push_str("COLOR_SCALARS face_color 3\n");
        for c in colors {
            out.push_str(&format!(
                "{:.6} {:.6} {:.6}\n",
                c[0] as f64 / 255.0,
                c[1] as f64 / 255.0,
                c[2] as f64 / 255.0
            ));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
