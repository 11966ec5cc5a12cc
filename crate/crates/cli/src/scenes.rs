//! Procedural scenes for the studies and self-reconstruction runs.

use std::f64::consts::PI;

use nalgebra::Vector3;
use nexsplat::primitives::{Camera, GaussianPrimitive, SH_C0};
use nexsplat::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const STUDY_OPACITY: f64 = 0.02;
pub const STUDY_SPLATS: usize = 100;
pub const STUDY_DEPTH: (f64, f64) = (1.0, 10.0);
pub const STUDY_ASPECT: (f64, f64) = (1.0, 3.0);
const STUDY_FOV_DEG: f64 = 40.0;

fn z_rotation(angle: f64) -> [f64; 4] {
    [(0.5 * angle).cos(), 0.0, 0.0, (0.5 * angle).sin()]
}

/// Camera at the origin looking down `+z`.
pub fn axis_camera(width: usize, height: usize, fov_deg: f64) -> Camera {
    Camera::look_at(
        Vector3::zeros(),
        Vector3::z(),
        Vector3::y(),
        fov_deg,
        width,
        height,
    )
    .expect("fixed camera is valid")
}

pub fn study_camera(size: usize) -> Camera {
    axis_camera(size, size, STUDY_FOV_DEG)
}

/// 100 thin elliptical Gaussians centered on the optical axis with opacity
/// 0.02, depths uniform in `[1, 10]`, aspect uniform in `[1, 3]` and random
/// in-plane rotation. In-plane size grows with depth so every ellipse
/// covers a similar part of the image.
pub fn transmit_scene(seed: u64) -> Vec<GaussianPrimitive> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (0.5 * STUDY_FOV_DEG).to_radians().tan();
    (0..STUDY_SPLATS)
        .map(|_| {
            let z = rng.gen_range(STUDY_DEPTH.0..STUDY_DEPTH.1);
            let aspect: f64 = rng.gen_range(STUDY_ASPECT.0..STUDY_ASPECT.1);
            let angle = rng.gen_range(0.0..PI);
            let base = 0.35 * z * half;
            GaussianPrimitive::with_color(
                Vector3::new(0.0, 0.0, z),
                Vector3::new(base * aspect.sqrt(), base / aspect.sqrt(), 0.01 * z),
                z_rotation(angle),
                STUDY_OPACITY,
                Rgb::repeat(1.0),
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BlendVariant {
    /// Co-axial discs growing with depth.
    Concentric,
    /// Elongated ellipses rotated by 60° steps so that each covers part of
    /// the next.
    Cyclic,
}

impl BlendVariant {
    pub fn name(&self) -> &'static str {
        match self {
            BlendVariant::Concentric => "concentric",
            BlendVariant::Cyclic => "cyclic",
        }
    }
}

/// Red, green and blue Gaussians at increasing depth with opacity 1 (stored
/// as the largest admissible opacity).
pub fn blend_scene(variant: BlendVariant) -> Vec<GaussianPrimitive> {
    let half = (0.5 * STUDY_FOV_DEG).to_radians().tan();
    let colors = [
        Rgb::new(1.0, 0.0, 0.0),
        Rgb::new(0.0, 1.0, 0.0),
        Rgb::new(0.0, 0.0, 1.0),
    ];
    (0..3)
        .map(|i| {
            let z = 3.0 + i as f64;
            let (scale, rotation) = match variant {
                BlendVariant::Concentric => {
                    let r = (0.15 + 0.15 * i as f64) * z * half;
                    (Vector3::new(r, r, 0.01 * z), [1.0, 0.0, 0.0, 0.0])
                }
                BlendVariant::Cyclic => {
                    let r = 0.12 * z * half;
                    (
                        Vector3::new(4.0 * r, r, 0.01 * z),
                        z_rotation(i as f64 * PI / 3.0),
                    )
                }
            };
            GaussianPrimitive::with_color(
                Vector3::new(0.0, 0.0, z),
                scale,
                rotation,
                1.0,
                colors[i],
            )
        })
        .collect()
}

/// Random opaque-ish blobs inside a box of half-size `extent` around the
/// origin, SH degree 0.
pub fn random_scene(n: usize, seed: u64, extent: f64, scale: (f64, f64)) -> Vec<GaussianPrimitive> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let center = Vector3::new(
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
                rng.gen_range(-0.5 * extent..0.5 * extent),
            );
            let s = Vector3::from_fn(|_, _| rng.gen_range(scale.0..scale.1));
            let q = [0; 4].map(|_| rng.gen_range(-1.0..1.0));
            let opacity = rng.gen_range(0.3..0.9);
            let color = Rgb::from_fn(|_, _| rng.gen_range(0.1..0.9));
            GaussianPrimitive::with_color(center, s, q, opacity, color)
        })
        .collect()
}

/// Starting point for self-reconstruction: centers jittered by up to
/// `jitter` per axis, scales by ±30 %, rotations perturbed, opacity 0.5 and
/// mid-gray colour.
pub fn perturbed(scene: &[GaussianPrimitive], seed: u64, jitter: f64) -> Vec<GaussianPrimitive> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scene
        .iter()
        .map(|g| {
            let mut p = g.clone();
            p.center += Vector3::from_fn(|_, _| rng.gen_range(-jitter..jitter));
            p.scale = p.scale.map(|s| s * rng.gen_range(0.7..1.3));
            for q in &mut p.rotation {
                *q += rng.gen_range(-0.1..0.1);
            }
            p.opacity = 0.5;
            for coef in &mut p.sh {
                *coef = Rgb::zeros();
            }
            p.sh[0] = Rgb::repeat(0.5 / SH_C0);
            p.project_to_bounds();
            p
        })
        .collect()
}

/// Cameras on a circle of radius `distance` around the origin in the
/// `xz`-plane, the first on the `-z` axis.
pub fn ring_cameras(n: usize, distance: f64, spread_deg: f64, size: usize) -> Vec<Camera> {
    (0..n)
        .map(|i| {
            let a = if n > 1 {
                (i as f64 / (n - 1) as f64 - 0.5) * spread_deg.to_radians()
            } else {
                0.0
            };
            Camera::look_at(
                Vector3::new(distance * a.sin(), 0.0, -distance * a.cos()),
                Vector3::zeros(),
                Vector3::y(),
                45.0,
                size,
                size,
            )
            .expect("ring camera is valid")
        })
        .collect()
}
