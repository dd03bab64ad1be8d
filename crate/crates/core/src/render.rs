//! Ray generation and volume-rendering quadrature.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::field::{FieldOutput, FieldQuery, ForwardPassLedger, RadianceField, MAX_BATCH};
use crate::image_buf::ColorImage;

/// Sampling bounds and background shared by every ray of a render call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub near: f64,
    pub far: f64,
    pub n_points: usize,
    pub background: [f64; 3],
}

impl RenderSettings {
    pub fn new(near: f64, far: f64, n_points: usize, background: [f64; 3]) -> Result<Self> {
        if !(near < far) {
            return Err(Error::Invalid(format!("near {near} must be below far {far}")));
        }
        if n_points < 2 {
            return Err(Error::Invalid("rays need at least 2 points".into()));
        }
        Ok(Self {
            near,
            far,
            n_points,
            background,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Not normalized: its camera-frame z component is −1, so `t` is depth.
    pub direction: Vector3<f64>,
    pub t_near: f64,
    pub t_far: f64,
    pub n_points: usize,
}

impl Ray {
    pub fn new(
        origin: Vector3<f64>,
        direction: Vector3<f64>,
        t_near: f64,
        t_far: f64,
        n_points: usize,
    ) -> Result<Self> {
        if !(t_near < t_far) || n_points < 2 || direction.norm_squared() == 0.0 {
            return Err(Error::Invalid(format!(
                "invalid ray: t in ({t_near}, {t_far}), {n_points} points"
            )));
        }
        Ok(Self {
            origin,
            direction,
            t_near,
            t_far,
            n_points,
        })
    }

    /// Midpoint rule: `t_i = t_near + (i + 0.5)·(t_far − t_near)/n`.
    pub fn sample_points(&self) -> Vec<(f64, Vector3<f64>)> {
        let step = (self.t_far - self.t_near) / self.n_points as f64;
        (0..self.n_points)
            .map(|i| {
                let t = self.t_near + (i as f64 + 0.5) * step;
                (t, self.origin + self.direction * t)
            })
            .collect()
    }

    /// Segment lengths in scene units; the last one runs to `t_far`.
    fn deltas(&self) -> Vec<f64> {
        let ts: Vec<f64> = self.sample_points().iter().map(|(t, _)| *t).collect();
        let scale = self.direction.norm();
        (0..ts.len())
            .map(|i| {
                let next = ts.get(i + 1).copied().unwrap_or(self.t_far);
                (next - ts[i]) * scale
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderedPixel {
    pub row: u32,
    pub col: u32,
    pub rgb: [f64; 3],
    pub accumulated_alpha: f64,
}

pub fn generate_ray(
    pose: &CameraPose,
    k: &Intrinsics,
    row: u32,
    col: u32,
    settings: &RenderSettings,
) -> Result<Ray> {
    if !k.contains(row, col) {
        return Err(Error::OutOfBounds {
            row,
            col,
            width: k.width,
            height: k.height,
        });
    }
    let cam = Vector3::new(
        (col as f64 + 0.5 - k.cx) / k.fx,
        -(row as f64 + 0.5 - k.cy) / k.fy,
        -1.0,
    );
    Ray::new(
        pose.translation(),
        pose.rotation() * cam,
        settings.near,
        settings.far,
        settings.n_points,
    )
}

/// Per-sample compositing weights `T_i·α_i` followed by the residual
/// transmittance `Π(1 − α_i)` as the final element.
pub fn compositing_weights(sigmas: &[f64], deltas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sigmas.len() + 1);
    let mut transmittance = 1.0;
    for (s, d) in sigmas.iter().zip(deltas) {
        let alpha = 1.0 - (-s * d).exp();
        out.push(transmittance * alpha);
        transmittance *= 1.0 - alpha;
    }
    out.push(transmittance);
    out
}

fn composite(samples: &[FieldOutput], deltas: &[f64], background: [f64; 3]) -> ([f64; 3], f64) {
    let sigmas: Vec<f64> = samples.iter().map(|s| s.sigma).collect();
    let weights = compositing_weights(&sigmas, deltas);
    let residual = *weights.last().unwrap();
    let mut rgb = [0.0; 3];
    for (s, w) in samples.iter().zip(&weights) {
        for (v, c) in rgb.iter_mut().zip(s.rgb) {
            *v += w * c;
        }
    }
    for (v, b) in rgb.iter_mut().zip(background) {
        *v = (*v + residual * b).clamp(0.0, 1.0);
    }
    (rgb, (1.0 - residual).clamp(0.0, 1.0))
}

fn ray_queries(ray: &Ray) -> impl Iterator<Item = FieldQuery> + '_ {
    let dir = ray.direction.normalize();
    ray.sample_points().into_iter().map(move |(_, p)| FieldQuery {
        position: p,
        direction: dir,
    })
}

pub fn render_pixel(
    field: &RadianceField,
    ray: &Ray,
    background: [f64; 3],
    ledger: &ForwardPassLedger,
) -> Result<([f64; 3], f64)> {
    let queries: Vec<FieldQuery> = ray_queries(ray).collect();
    let samples = field.query_batch(&queries, ledger)?;
    Ok(composite(&samples, &ray.deltas(), background))
}

/// Renders the listed pixels in order. Field queries are grouped into batches
/// of at most [`MAX_BATCH`] points; the output does not depend on batching.
pub fn render_pixels(
    field: &RadianceField,
    pose: &CameraPose,
    k: &Intrinsics,
    pixels: &[(u32, u32)],
    settings: &RenderSettings,
    ledger: &ForwardPassLedger,
) -> Result<Vec<RenderedPixel>> {
    let rays = pixels
        .iter()
        .map(|&(row, col)| generate_ray(pose, k, row, col, settings))
        .collect::<Result<Vec<_>>>()?;
    let per_ray = settings.n_points;
    let rays_per_batch = (MAX_BATCH / per_ray).max(1);
    let mut out = Vec::with_capacity(pixels.len());
    for (ray_chunk, px_chunk) in rays.chunks(rays_per_batch).zip(pixels.chunks(rays_per_batch)) {
        let queries: Vec<FieldQuery> = ray_chunk.iter().flat_map(ray_queries).collect();
        let samples = field.query_batch(&queries, ledger)?;
        for ((ray, &(row, col)), s) in ray_chunk
            .iter()
            .zip(px_chunk)
            .zip(samples.chunks_exact(per_ray))
        {
            let (rgb, accumulated_alpha) = composite(s, &ray.deltas(), settings.background);
            out.push(RenderedPixel {
                row,
                col,
                rgb,
                accumulated_alpha,
            });
        }
    }
    Ok(out)
}

/// Renders every pixel, one row per parallel task.
pub fn render_image(
    field: &RadianceField,
    pose: &CameraPose,
    k: &Intrinsics,
    settings: &RenderSettings,
    ledger: &ForwardPassLedger,
) -> Result<ColorImage> {
    let rows = (0..k.height)
        .into_par_iter()
        .map(|row| {
            let pixels: Vec<(u32, u32)> = (0..k.width).map(|col| (row, col)).collect();
            render_pixels(field, pose, k, &pixels, settings, ledger)
        })
        .collect::<Result<Vec<_>>>()?;
    let pixels = rows.into_iter().flatten().map(|p| p.rgb).collect();
    ColorImage::from_pixels(k.width, k.height, pixels)
}
