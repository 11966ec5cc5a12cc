//! Gaussian primitives, cameras and image rendering.
//!
//! Each Gaussian is drawn as a billboard at the depth where its kernel peaks
//! along the ray. Per pixel the visible billboards are sorted front to back
//! and handed to the compositor.

mod camera;
mod gaussian;
mod render;

use std::cmp::Ordering;

pub use camera::{Camera, Ray};
pub use gaussian::{
    rotation_matrix, sh_basis, GaussianPrimitive, Peak, PrimitiveGrad, MAX_OPACITY, MIN_OPACITY,
    MIN_SCALE, SH_C0, SH_C1,
};
pub use render::{render, render_traced, PixelTrace, RenderOutput, RenderSettings, TracedSplat};

use crate::compositor::SplatSample;
use crate::{Error, Result};

/// Billboards at or before this depth are dropped.
pub const NEAR_PLANE: f64 = 1e-4;

pub fn load_scene(json: &str) -> Result<Vec<GaussianPrimitive>> {
    serde_json::from_str(json).map_err(Error::from)
}

/// Visible splats along `ray`, nearest first, ties broken by scene index.
///
/// Evaluates every primitive.
pub fn gather_sorted(
    scene: &[GaussianPrimitive],
    ray: &Ray,
    max_n: usize,
    alpha_cutoff: f64,
) -> Vec<SplatSample> {
    gather_indexed(scene, ray, max_n, alpha_cutoff)
        .into_iter()
        .map(|s| s.sample)
        .collect()
}

/// [`gather_sorted`] keeping the scene index and SH clamp state of each
/// splat.
pub fn gather_indexed(
    scene: &[GaussianPrimitive],
    ray: &Ray,
    max_n: usize,
    alpha_cutoff: f64,
) -> Vec<TracedSplat> {
    let mut hits: Vec<(f64, usize, f64)> = scene
        .iter()
        .enumerate()
        .filter_map(|(id, g)| {
            let p = g.peak_along_ray(ray);
            (p.t > NEAR_PLANE && p.alpha >= alpha_cutoff).then_some((p.t, id, p.alpha))
        })
        .collect();
    hits.sort_by(|a, b| depth_order(a.0, a.1, b.0, b.1));
    hits.truncate(max_n);
    hits.into_iter()
        .map(|(t, id, alpha)| {
            let (emission, active) = scene[id].emission(&ray.dir);
            TracedSplat {
                id,
                sample: SplatSample::new(t, alpha, emission),
                active,
            }
        })
        .collect()
}

fn depth_order(ta: f64, ia: usize, tb: f64, ib: usize) -> Ordering {
    ta.total_cmp(&tb).then(ia.cmp(&ib))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rgb;
    use nalgebra::Vector3;

    fn splat_at(z: f64) -> GaussianPrimitive {
        GaussianPrimitive::with_color(
            Vector3::new(0.0, 0.0, z),
            Vector3::new(0.5, 0.5, 0.01),
            [1.0, 0.0, 0.0, 0.0],
            0.3,
            Rgb::new(z, 0.0, 0.0),
        )
    }

    fn axis_ray() -> Ray {
        Ray::new(Vector3::zeros(), Vector3::z())
    }

    #[test]
    fn empty_scene_gathers_nothing() {
        assert!(gather_sorted(&[], &axis_ray(), 128, 1.0 / 255.0).is_empty());
    }

    #[test]
    fn gathers_in_depth_order() {
        let scene = [splat_at(3.0), splat_at(1.0), splat_at(2.0)];
        let depths: Vec<f64> = gather_sorted(&scene, &axis_ray(), 128, 1.0 / 255.0)
            .iter()
            .map(|s| s.depth)
            .collect();
        assert_eq!(depths, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn behind_origin_is_culled() {
        let scene = [splat_at(-1.0), splat_at(1.0)];
        let got = gather_sorted(&scene, &axis_ray(), 128, 1.0 / 255.0);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].depth, 1.0);
    }

    #[test]
    fn truncates_to_nearest() {
        let scene: Vec<_> = (0..200).rev().map(|i| splat_at(1.0 + i as f64 * 0.1)).collect();
        let got = gather_sorted(&scene, &axis_ray(), 128, 1.0 / 255.0);
        assert_eq!(got.len(), 128);
        for (i, s) in got.iter().enumerate() {
            assert!((s.depth - (1.0 + i as f64 * 0.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_follow_scene_index() {
        let mut a = splat_at(2.0);
        a.sh[0] = Rgb::new(1.0, 0.0, 0.0) / SH_C0;
        let mut b = splat_at(2.0);
        b.sh[0] = Rgb::new(0.0, 1.0, 0.0) / SH_C0;
        let got = gather_indexed(&[a, b], &axis_ray(), 128, 0.0);
        assert_eq!(got.iter().map(|s| s.id).collect::<Vec<_>>(), [0, 1]);
    }
}
