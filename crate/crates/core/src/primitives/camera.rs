use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ray with unit direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
}

impl Ray {
    /// Normalizes `dir`.
    pub fn new(origin: Vector3<f64>, dir: Vector3<f64>) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.dir * t
    }
}

/// Pinhole camera. `fov_deg` is the vertical field of view; image `y` grows
/// downwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    position: Vector3<f64>,
    look_at: Vector3<f64>,
    up: Vector3<f64>,
    fov_deg: f64,
    width: usize,
    height: usize,
    forward: Vector3<f64>,
    right: Vector3<f64>,
    down: Vector3<f64>,
    focal: f64,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    position: [f64; 3],
    look_at: [f64; 3],
    up: [f64; 3],
    fov_deg: f64,
    width: usize,
    height: usize,
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(r: CameraRecord) -> Result<Self> {
        Camera::look_at(
            r.position.into(),
            r.look_at.into(),
            r.up.into(),
            r.fov_deg,
            r.width,
            r.height,
        )
    }
}

impl From<Camera> for CameraRecord {
    fn from(c: Camera) -> Self {
        CameraRecord {
            position: c.position.into(),
            look_at: c.look_at.into(),
            up: c.up.into(),
            fov_deg: c.fov_deg,
            width: c.width,
            height: c.height,
        }
    }
}

impl Camera {
    pub fn look_at(
        position: Vector3<f64>,
        look_at: Vector3<f64>,
        up: Vector3<f64>,
        fov_deg: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("empty image {width}x{height}")));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::Config(format!("fov_deg {fov_deg} outside (0, 180)")));
        }
        let forward = look_at - position;
        if !(forward.norm() > 0.0) {
            return Err(Error::Config("camera position equals look_at".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if !(right.norm() > 1e-12) {
            return Err(Error::Config("up vector parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let focal = 0.5 * height as f64 / (0.5 * fov_deg.to_radians()).tan();
        Ok(Self {
            position,
            look_at,
            up,
            fov_deg,
            width,
            height,
            forward,
            right,
            down,
            focal,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        self.focal
    }

    /// Same view at `1/divisor` resolution, matching [`crate::image::Image::downsample`].
    pub fn scaled(&self, divisor: usize) -> Camera {
        assert!(divisor >= 1);
        let width = (self.width / divisor).max(1);
        let height = (self.height / divisor).max(1);
        let mut c = self.clone();
        c.width = width;
        c.height = height;
        c.focal = self.focal * height as f64 / self.height as f64;
        c
    }

    /// Unnormalized direction through image-plane position `(u, v)` in pixels.
    pub fn direction(&self, u: f64, v: f64) -> Vector3<f64> {
        self.forward * self.focal
            + self.right * (u - 0.5 * self.width as f64)
            + self.down * (v - 0.5 * self.height as f64)
    }

    /// Primary ray through the center of pixel `(x, y)`.
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        Ray::new(
            self.position,
            self.direction(x as f64 + 0.5, y as f64 + 0.5),
        )
    }
}
