//! Top-down orthographic rendering of a [`WorldState`] into an RGB observation.

use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{GeometryConfig, Point, WorldState};
use crate::neural::Tensor;
use crate::scalar::Scalar;

pub const BACKGROUND: [u8; 3] = [230, 230, 230];
pub const TARGET_COLOR: [u8; 3] = [0, 200, 0];
pub const OBSTACLE_COLOR: [u8; 3] = [200, 0, 0];
pub const DISTRACTOR_COLOR: [u8; 3] = [200, 200, 0];
pub const OBJECT_COLOR: [u8; 3] = [0, 0, 200];
pub const TOOL_COLOR: [u8; 3] = [80, 80, 80];

pub const SUPPORTED_RESOLUTIONS: [usize; 3] = [32, 64, 128];

#[derive(Debug, Error)]
pub enum ObserveError {
    #[error("unsupported resolution {0}; expected one of 32, 64, 128")]
    UnsupportedResolution(usize),
    #[error("png encoding failed: {0}")]
    Png(#[from] image::ImageError),
}

/// Square RGB raster, row-major, row 0 at the far edge of the surface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Observation {
    pub fn filled(size: usize, color: [u8; 3]) -> Self {
        let pixels = color.iter().copied().cycle().take(size * size * 3).collect();
        Self { width: size, height: size, pixels }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn fill_rect(&mut self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, color: [u8; 3]) {
        for r in rows {
            for c in cols.clone() {
                let i = (r * self.width + c) * 3;
                self.pixels[i..i + 3].copy_from_slice(&color);
            }
        }
    }

    /// Channel-major tensor `[3, H, W]` with values `channel / 255`.
    pub fn normalize<T: Scalar>(&self) -> Tensor<T> {
        let mut data = vec![T::zero(); self.pixels.len()];
        self.write_normalized(&mut data);
        Tensor::from_vec(vec![3, self.height, self.width], data)
    }

    /// Write the normalized channel-major values into `out` (length `3 * H * W`).
    pub fn write_normalized<T: Scalar>(&self, out: &mut [T]) {
        let plane = self.width * self.height;
        assert_eq!(out.len(), 3 * plane, "output slice has wrong length");
        let scale = T::one() / T::lit(255.0);
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for ch in 0..3 {
                out[ch * plane + i] = T::lit(px[ch] as f64) * scale;
            }
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ObserveError> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ObserveError> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions");
        img.save(path)?;
        Ok(())
    }
}

/// Centimetre to pixel mapping with letterboxing on the short axis.
#[derive(Debug, Clone, Copy)]
struct Projection {
    res: usize,
    scale: f64,
    off_x: f64,
    off_y: f64,
    surface_w: f64,
    surface_h: f64,
}

impl Projection {
    fn new(cfg: &GeometryConfig, res: usize) -> Self {
        let scale = res as f64 / cfg.surface_width.max(cfg.surface_height);
        Self {
            res,
            scale,
            off_x: (res as f64 - cfg.surface_width * scale) / 2.0,
            off_y: (res as f64 - cfg.surface_height * scale) / 2.0,
            surface_w: cfg.surface_width,
            surface_h: cfg.surface_height,
        }
    }

    /// Pixel indices whose centres fall in `[lo, hi)` along one axis, in pixel units.
    fn span(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let clamp = |v: f64| v.max(0.0).min(self.res as f64) as usize;
        let a = clamp((lo - 0.5).ceil());
        let b = clamp((hi - 0.5).ceil());
        a..b.max(a)
    }

    fn rect(&self, center: Point, half: Point) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        // Clip to the surface so nothing is drawn into the letterbox bands.
        let x0 = (center.x - half.x).max(0.0);
        let x1 = (center.x + half.x).min(self.surface_w);
        let y0 = (center.y - half.y).max(0.0);
        let y1 = (center.y + half.y).min(self.surface_h);
        let cols = self.span(self.off_x + x0 * self.scale, self.off_x + x1 * self.scale);
        let from_bottom = self.span(self.off_y + y0 * self.scale, self.off_y + y1 * self.scale);
        // Image rows grow downward; world y grows upward.
        let rows = (self.res - from_bottom.end)..(self.res - from_bottom.start);
        (rows, cols)
    }
}

/// Rasterize the scene with nearest-neighbour pixel-centre sampling.
///
/// Layers, later over earlier: target, obstacles, distractors, object, tool.
pub fn render(world: &WorldState, cfg: &GeometryConfig, resolution: usize) -> Result<Observation, ObserveError> {
    if !SUPPORTED_RESOLUTIONS.contains(&resolution) {
        return Err(ObserveError::UnsupportedResolution(resolution));
    }
    let proj = Projection::new(cfg, resolution);
    let mut obs = Observation::filled(resolution, BACKGROUND);
    let mut draw = |center: Point, half: Point, color: [u8; 3]| {
        let (rows, cols) = proj.rect(center, half);
        obs.fill_rect(rows, cols, color);
    };
    draw(world.target_pose, cfg.target_half(), TARGET_COLOR);
    for &o in &world.obstacles {
        draw(o, cfg.obstacle_half(), OBSTACLE_COLOR);
    }
    for &d in &world.distractors {
        draw(d, cfg.distractor_half(), DISTRACTOR_COLOR);
    }
    draw(world.object_pose, cfg.object_half(), OBJECT_COLOR);
    draw(world.tool_pose, cfg.tool_half_extents, TOOL_COLOR);
    Ok(obs)
}

/// Pixel (row, col) whose centre is nearest to a surface point.
pub fn pixel_of(point: Point, cfg: &GeometryConfig, resolution: usize) -> (usize, usize) {
    let proj = Projection::new(cfg, resolution);
    let col = (proj.off_x + point.x * proj.scale).floor() as usize;
    let from_bottom = (proj.off_y + point.y * proj.scale).floor() as usize;
    (resolution - 1 - from_bottom, col)
}

/// Run-length encoded observation shared between consecutive transitions.
///
/// Rendered scenes are a handful of flat rectangles, so a row of pixels collapses to a few runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u16,
    height: u16,
    runs: Arc<[Run]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Run {
    len: u16,
    color: [u8; 3],
}

impl Frame {
    pub fn pack(obs: &Observation) -> Self {
        let mut runs: Vec<Run> = Vec::new();
        for px in obs.pixels.chunks_exact(3) {
            let color = [px[0], px[1], px[2]];
            match runs.last_mut() {
                Some(r) if r.color == color && r.len < u16::MAX => r.len += 1,
                _ => runs.push(Run { len: 1, color }),
            }
        }
        Self { width: obs.width as u16, height: obs.height as u16, runs: runs.into() }
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    pub fn unpack(&self) -> Observation {
        let mut pixels = Vec::with_capacity(self.width() * self.height() * 3);
        for r in self.runs.iter() {
            for _ in 0..r.len {
                pixels.extend_from_slice(&r.color);
            }
        }
        Observation { width: self.width(), height: self.height(), pixels }
    }

    /// Decode straight into a channel-major normalized buffer.
    pub fn write_normalized<T: Scalar>(&self, out: &mut [T]) {
        let plane = self.width() * self.height();
        assert_eq!(out.len(), 3 * plane, "output slice has wrong length");
        let scale = T::one() / T::lit(255.0);
        let mut i = 0;
        for r in self.runs.iter() {
            let vals = r.color.map(|c| T::lit(c as f64) * scale);
            let n = r.len as usize;
            for (ch, v) in vals.into_iter().enumerate() {
                out[ch * plane + i..ch * plane + i + n].fill(v);
            }
            i += n;
        }
    }
}
