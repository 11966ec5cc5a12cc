use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{depth_order, Camera, GaussianPrimitive, Ray, NEAR_PLANE};
use crate::compositor::{Accumulator, CompositeResult, SplatSample};
use crate::image::Image;
use crate::transmittance::TransmittanceModel;
use crate::{Rgb, DEFAULT_ALPHA_CUTOFF, DEFAULT_MAX_SPLATS};

const TILE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub model: TransmittanceModel,
    pub background: Rgb,
    pub max_splats: usize,
    pub alpha_cutoff: f64,
}

impl RenderSettings {
    pub fn new(model: TransmittanceModel) -> Self {
        Self {
            model,
            background: Rgb::zeros(),
            max_splats: DEFAULT_MAX_SPLATS,
            alpha_cutoff: DEFAULT_ALPHA_CUTOFF,
        }
    }

    pub fn with_background(mut self, background: Rgb) -> Self {
        self.background = background;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub rgb: Image<Rgb>,
    pub overdraw: Image<u32>,
    /// `T̄_{N+1}` per pixel.
    pub residual_t: Image<f64>,
}

impl RenderOutput {
    fn from_results(results: &Image<CompositeResult>) -> Self {
        Self {
            rgb: results.map(|r| r.radiance),
            overdraw: results.map(|r| r.overdraw as u32),
            residual_t: results.map(|r| r.residual_t),
        }
    }

    /// `1 - T̄_{N+1}` per pixel.
    pub fn coverage(&self) -> Image<f64> {
        self.residual_t.map(|t| 1.0 - t)
    }
}

/// A composited splat together with where it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracedSplat {
    /// Index into the scene.
    pub id: usize,
    pub sample: SplatSample,
    /// Colour channels whose SH sum was positive (not clamped to zero).
    pub active: [bool; 3],
}

/// Splats actually composited for one pixel, in order, and the result.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelTrace {
    pub splats: Vec<TracedSplat>,
    pub result: CompositeResult,
}

impl PixelTrace {
    pub fn samples(&self) -> Vec<SplatSample> {
        self.splats.iter().map(|s| s.sample).collect()
    }
}

/// Renders every pixel's primary ray.
///
/// Output is bit-identical for any rayon pool size: each pixel is computed
/// independently and in a fixed order.
pub fn render(scene: &[GaussianPrimitive], camera: &Camera, settings: &RenderSettings) -> RenderOutput {
    let results = render_pixels(scene, camera, settings, |_, r| r);
    RenderOutput::from_results(&results)
}

/// [`render`] keeping per-pixel traces for the backward pass.
pub fn render_traced(
    scene: &[GaussianPrimitive],
    camera: &Camera,
    settings: &RenderSettings,
) -> (RenderOutput, Image<PixelTrace>) {
    let traces = render_pixels(scene, camera, settings, |splats, result| PixelTrace {
        splats,
        result,
    });
    let out = RenderOutput::from_results(&traces.map(|t| t.result));
    (out, traces)
}

fn render_pixels<T: Send>(
    scene: &[GaussianPrimitive],
    camera: &Camera,
    settings: &RenderSettings,
    emit: impl Fn(Vec<TracedSplat>, CompositeResult) -> T + Sync,
) -> Image<T> {
    let (w, h) = (camera.width(), camera.height());
    let rotations: Vec<Matrix3<f64>> = scene.iter().map(|g| g.rotation_matrix()).collect();
    let tiles_x = w.div_ceil(TILE);
    let tiles_y = h.div_ceil(TILE);
    let radii: Vec<Option<f64>> = scene
        .iter()
        .map(|g| g.cull_radius(settings.alpha_cutoff))
        .collect();
    let tiles: Vec<Vec<usize>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|i| tile_candidates(scene, &radii, camera, i % tiles_x, i / tiles_x))
        .collect();
    let pixels: Vec<T> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let candidates = &tiles[(y / TILE) * tiles_x + x / TILE];
            let ray = camera.ray(x, y);
            let (splats, result) = shade(scene, &rotations, candidates, &ray, settings);
            emit(splats, result)
        })
        .collect();
    Image::from_pixels(w, h, pixels)
}

/// Primitives whose cutoff sphere can touch a ray through the tile.
///
/// Every ray through the tile lies in the cone spanned by its corner rays;
/// a primitive is kept when its bounding sphere meets that cone.
fn tile_candidates(
    scene: &[GaussianPrimitive],
    radii: &[Option<f64>],
    camera: &Camera,
    tx: usize,
    ty: usize,
) -> Vec<usize> {
    let x0 = (tx * TILE) as f64;
    let y0 = (ty * TILE) as f64;
    let x1 = ((tx + 1) * TILE).min(camera.width()) as f64;
    let y1 = ((ty + 1) * TILE).min(camera.height()) as f64;
    let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
        .map(|(u, v)| camera.direction(u, v).normalize());
    let axis: Vector3<f64> = corners.iter().sum::<Vector3<f64>>().normalize();
    let half_angle = corners
        .iter()
        .map(|c| c.angle(&axis))
        .fold(0.0, f64::max);
    let origin = camera.position();
    scene
        .iter()
        .zip(radii)
        .enumerate()
        .filter_map(|(id, (g, r))| {
            let r = (*r)?;
            let v = g.center - origin;
            let dist = v.norm();
            let keep = dist <= r || v.angle(&axis) <= half_angle + (r / dist).asin() + 1e-9;
            keep.then_some(id)
        })
        .collect()
}

struct Candidate {
    t: f64,
    id: usize,
    alpha: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so that `BinaryHeap` pops the nearest first.
    fn cmp(&self, other: &Self) -> Ordering {
        depth_order(other.t, other.id, self.t, self.id)
    }
}

/// Composites one ray, popping candidates front to back only until the ray
/// saturates or `max_splats` have been composited.
fn shade(
    scene: &[GaussianPrimitive],
    rotations: &[Matrix3<f64>],
    candidates: &[usize],
    ray: &Ray,
    settings: &RenderSettings,
) -> (Vec<TracedSplat>, CompositeResult) {
    let visible: Vec<Candidate> = candidates
        .iter()
        .filter_map(|&id| {
            let p = scene[id].peak_with_rotation(ray, &rotations[id]);
            (p.t > NEAR_PLANE && p.alpha >= settings.alpha_cutoff).then_some(Candidate {
                t: p.t,
                id,
                alpha: p.alpha,
            })
        })
        .collect();
    let mut heap = BinaryHeap::from(visible);
    let mut acc = Accumulator::new(settings.model);
    let mut splats = Vec::new();
    while splats.len() < settings.max_splats && !acc.is_saturated() {
        let Some(c) = heap.pop() else { break };
        let (emission, active) = scene[c.id].emission(&ray.dir);
        let sample = SplatSample::new(c.t, c.alpha, emission);
        acc.push(&sample);
        splats.push(TracedSplat {
            id: c.id,
            sample,
            active,
        });
    }
    (splats, acc.finish(settings.background))
}
