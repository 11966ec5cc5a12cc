use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Ray;
use crate::{Error, Result, Rgb, ALPHA_EPS};

pub const MIN_SCALE: f64 = 1e-6;
pub const MIN_OPACITY: f64 = 1e-4;
pub const MAX_OPACITY: f64 = 1.0 - ALPHA_EPS;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

/// Real SH basis up to band 1, in the usual `(Y₀₀, Y₁₋₁, Y₁₀, Y₁₁)` order.
pub fn sh_basis(dir: &Vector3<f64>) -> [f64; 4] {
    [SH_C0, -SH_C1 * dir.y, SH_C1 * dir.z, -SH_C1 * dir.x]
}

/// Anisotropic 3D Gaussian.
///
/// Covariance is `R diag(scale²) Rᵀ` with `R` from the unit quaternion
/// `rotation = [w, x, y, z]`. Emission is SH of degree 0 (one RGB
/// coefficient) or 1 (four).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRecord", into = "GaussianRecord")]
pub struct GaussianPrimitive {
    pub center: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub sh: Vec<Rgb>,
}

/// File layout: SH coefficients grouped per colour channel.
#[derive(Serialize, Deserialize)]
struct GaussianRecord {
    center: [f64; 3],
    scale: [f64; 3],
    rotation: [f64; 4],
    opacity: f64,
    sh: Vec<Vec<f64>>,
}

impl TryFrom<GaussianRecord> for GaussianPrimitive {
    type Error = Error;

    fn try_from(r: GaussianRecord) -> Result<Self> {
        if r.sh.len() != 3 {
            return Err(Error::Config(format!(
                "sh must list 3 channels, got {}",
                r.sh.len()
            )));
        }
        let n = r.sh[0].len();
        if !(n == 1 || n == 4) || r.sh.iter().any(|c| c.len() != n) {
            return Err(Error::Config(
                "sh channels must each hold 1 or 4 coefficients".into(),
            ));
        }
        if r.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config(format!("non-positive scale {:?}", r.scale)));
        }
        let qn = r.rotation.iter().map(|q| q * q).sum::<f64>().sqrt();
        if !(qn > 0.0) {
            return Err(Error::Config("zero rotation quaternion".into()));
        }
        let sh = (0..n)
            .map(|l| Rgb::new(r.sh[0][l], r.sh[1][l], r.sh[2][l]))
            .collect();
        Ok(GaussianPrimitive::new(
            Vector3::from(r.center),
            Vector3::from(r.scale),
            r.rotation,
            r.opacity,
            sh,
        ))
    }
}

impl From<GaussianPrimitive> for GaussianRecord {
    fn from(g: GaussianPrimitive) -> Self {
        let sh = (0..3)
            .map(|c| g.sh.iter().map(|coef| coef[c]).collect())
            .collect();
        GaussianRecord {
            center: g.center.into(),
            scale: g.scale.into(),
            rotation: g.rotation,
            opacity: g.opacity,
            sh,
        }
    }
}

impl GaussianPrimitive {
    /// Normalizes the quaternion and clamps scale and opacity into range.
    pub fn new(
        center: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: [f64; 4],
        opacity: f64,
        sh: Vec<Rgb>,
    ) -> Self {
        assert!(sh.len() == 1 || sh.len() == 4, "SH degree must be 0 or 1");
        let mut g = Self {
            center,
            scale,
            rotation,
            opacity,
            sh,
        };
        g.project_to_bounds();
        g
    }

    /// Degree-0 primitive with constant colour `rgb`.
    pub fn with_color(
        center: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: [f64; 4],
        opacity: f64,
        rgb: Rgb,
    ) -> Self {
        Self::new(center, scale, rotation, opacity, vec![rgb / SH_C0])
    }

    pub fn project_to_bounds(&mut self) {
        self.scale = self.scale.map(|s| s.max(MIN_SCALE));
        self.opacity = self.opacity.clamp(MIN_OPACITY, MAX_OPACITY);
        let n = self.rotation.iter().map(|q| q * q).sum::<f64>().sqrt();
        if !(n > 0.0) {
            self.rotation = [1.0, 0.0, 0.0, 0.0];
        } else if (n - 1.0).abs() > 4.0 * f64::EPSILON {
            // Unit quaternions are left bit-for-bit alone so projecting
            // twice changes nothing.
            self.rotation.iter_mut().for_each(|q| *q /= n);
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        rotation_matrix(&self.rotation)
    }

    pub fn max_scale(&self) -> f64 {
        self.scale.max()
    }

    /// View-dependent emission clamped at zero, and which channels were
    /// left unclamped.
    pub fn emission(&self, dir: &Vector3<f64>) -> (Rgb, [bool; 3]) {
        let basis = sh_basis(dir);
        let raw: Rgb = self
            .sh
            .iter()
            .zip(basis.iter())
            .map(|(coef, b)| coef * *b)
            .sum();
        let active = [raw.x > 0.0, raw.y > 0.0, raw.z > 0.0];
        (raw.map(|v| v.max(0.0)), active)
    }

    /// Promotes degree-0 SH to degree 1 with zero band-1 coefficients.
    pub fn with_degree_one(mut self) -> Self {
        self.sh.resize(4, Rgb::zeros());
        self
    }

    /// Radius beyond which the ray's opacity falls below `cutoff`.
    pub fn cull_radius(&self, cutoff: f64) -> Option<f64> {
        let ratio = self.opacity.min(MAX_OPACITY) / cutoff;
        if ratio < 1.0 {
            None
        } else {
            Some(self.max_scale() * (2.0 * ratio.ln()).sqrt())
        }
    }

    /// Locates the kernel maximum along `ray` (the splat's billboard depth)
    /// and the opacity there.
    pub fn peak_along_ray(&self, ray: &Ray) -> Peak {
        let r = self.rotation_matrix();
        self.peak_with_rotation(ray, &r)
    }

    pub(crate) fn peak_with_rotation(&self, ray: &Ray, r: &Matrix3<f64>) -> Peak {
        let inv_s = self.scale.map(|s| 1.0 / s);
        let a = (r.transpose() * (ray.origin - self.center)).component_mul(&inv_s);
        let b = (r.transpose() * ray.dir).component_mul(&inv_s);
        let bb = b.norm_squared();
        let t = -a.dot(&b) / bb;
        let m = a + b * t;
        let q = m.norm_squared();
        let kernel = (-0.5 * q).exp();
        let raw = self.opacity * kernel;
        Peak {
            t,
            alpha: raw.min(MAX_OPACITY),
            clamped: raw > MAX_OPACITY,
            kernel,
            a,
            b,
            m,
        }
    }

    /// Gradient of the peak opacity with respect to the primitive
    /// parameters. Zero when the opacity was clamped.
    pub fn alpha_gradient(&self, ray: &Ray, peak: &Peak) -> PrimitiveGrad {
        let mut g = PrimitiveGrad::default();
        if peak.clamped {
            return g;
        }
        g.opacity = peak.kernel;
        // α = ℵ exp(-q/2) with q = |a + t b|², t the minimizer; ∂q/∂a = 2m and
        // ∂q/∂b = 2t m.
        let d_q = -0.5 * self.opacity * peak.kernel;
        let ga = peak.m * (2.0 * d_q);
        let gb = peak.m * (2.0 * peak.t * d_q);
        let inv_s = self.scale.map(|s| 1.0 / s);
        let r = self.rotation_matrix();
        let ga_s = ga.component_mul(&inv_s);
        let gb_s = gb.component_mul(&inv_s);
        // a = S⁻¹ Rᵀ (o - μ), b = S⁻¹ Rᵀ d.
        g.center = -(r * ga_s);
        g.scale = -(peak.a.component_mul(&ga) + peak.b.component_mul(&gb)).component_mul(&inv_s);
        let v = ray.origin - self.center;
        let d_r = v * ga_s.transpose() + ray.dir * gb_s.transpose();
        g.rotation = rotation_gradient(&self.rotation, &d_r);
        g
    }
}

/// Peak of a Gaussian along a ray, plus the local-frame quantities reused by
/// the gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub t: f64,
    pub alpha: f64,
    pub clamped: bool,
    pub kernel: f64,
    a: Vector3<f64>,
    b: Vector3<f64>,
    m: Vector3<f64>,
}

/// Gradient with respect to one primitive's parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrimitiveGrad {
    pub center: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub sh: [Rgb; 4],
}

impl PrimitiveGrad {
    pub const LEN: usize = 23;

    pub fn add_scaled(&mut self, other: &PrimitiveGrad, w: f64) {
        self.center += other.center * w;
        self.scale += other.scale * w;
        for i in 0..4 {
            self.rotation[i] += other.rotation[i] * w;
            self.sh[i] += other.sh[i] * w;
        }
        self.opacity += other.opacity * w;
    }

    pub fn to_array(&self) -> [f64; Self::LEN] {
        let mut out = [0.0; Self::LEN];
        out[0..3].copy_from_slice(self.center.as_slice());
        out[3..6].copy_from_slice(self.scale.as_slice());
        out[6..10].copy_from_slice(&self.rotation);
        out[10] = self.opacity;
        for l in 0..4 {
            out[11 + 3 * l..14 + 3 * l].copy_from_slice(self.sh[l].as_slice());
        }
        out
    }
}

pub fn rotation_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls `∂L/∂R` back to the raw quaternion through normalization.
fn rotation_gradient(q: &[f64; 4], d_r: &Matrix3<f64>) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    #[rustfmt::skip]
    let partials = [
        Matrix3::new(
            0.0, -2.0 * z, 2.0 * y,
            2.0 * z, 0.0, -2.0 * x,
            -2.0 * y, 2.0 * x, 0.0,
        ),
        Matrix3::new(
            0.0, 2.0 * y, 2.0 * z,
            2.0 * y, -4.0 * x, -2.0 * w,
            2.0 * z, 2.0 * w, -4.0 * x,
        ),
        Matrix3::new(
            -4.0 * y, 2.0 * x, 2.0 * w,
            2.0 * x, 0.0, 2.0 * z,
            -2.0 * w, 2.0 * z, -4.0 * y,
        ),
        Matrix3::new(
            -4.0 * z, -2.0 * w, 2.0 * x,
            2.0 * w, -4.0 * z, 2.0 * y,
            2.0 * x, 2.0 * y, 0.0,
        ),
    ];
    let g_unit = partials.map(|p| p.component_mul(d_r).sum());
    let unit = [w, x, y, z];
    let radial: f64 = g_unit.iter().zip(unit.iter()).map(|(g, u)| g * u).sum();
    [0, 1, 2, 3].map(|i| (g_unit[i] - radial * unit[i]) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_gaussian(opacity: f64) -> GaussianPrimitive {
        GaussianPrimitive::with_color(
            Vector3::zeros(),
            Vector3::repeat(1.0),
            [1.0, 0.0, 0.0, 0.0],
            opacity,
            Rgb::repeat(1.0),
        )
    }

    #[test]
    fn peak_on_center_ray() {
        let g = unit_gaussian(0.8);
        let ray = Ray::new(Vector3::new(0.0, 0.0, -5.0), Vector3::z());
        let p = g.peak_along_ray(&ray);
        assert_abs_diff_eq!(p.t, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.alpha, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn peak_offset_ray() {
        let g = unit_gaussian(0.8);
        let ray = Ray::new(Vector3::new(1.0, 0.0, -5.0), Vector3::z());
        let p = g.peak_along_ray(&ray);
        assert_abs_diff_eq!(p.alpha, 0.8 * (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn peak_is_kernel_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let g = random_gaussian(&mut rng);
            let ray = random_ray(&mut rng);
            let p = g.peak_along_ray(&ray);
            let r = g.rotation_matrix();
            let q_at = |t: f64| {
                let d = ray.at(t) - g.center;
                let local = (r.transpose() * d).component_div(&g.scale);
                local.norm_squared()
            };
            let q0 = q_at(p.t);
            assert!(q_at(p.t + 1e-3) >= q0 - 1e-12);
            assert!(q_at(p.t - 1e-3) >= q0 - 1e-12);
            assert_abs_diff_eq!(p.kernel, (-0.5 * q0).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn sh_degree_zero_color() {
        let g = unit_gaussian(0.5);
        let (e, active) = g.emission(&Vector3::new(0.3, -0.2, 0.9).normalize());
        assert_abs_diff_eq!(e, Rgb::repeat(1.0), epsilon = 1e-15);
        assert_eq!(active, [true; 3]);
    }

    #[test]
    fn json_layout() {
        let json = r#"{"center":[1,2,3],"scale":[0.5,0.5,0.1],"rotation":[2,0,0,0],"opacity":0.5,"sh":[[1.0],[0.5],[0.25]]}"#;
        let g: GaussianPrimitive = serde_json::from_str(json).unwrap();
        assert_eq!(g.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.sh, vec![Rgb::new(1.0, 0.5, 0.25)]);
        let back: GaussianPrimitive = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"center":[1,2,3],"scale":[0.5,0.5,0.1],"rotation":[1,0,0,0],"opacity":0.5,"sh":[[1.0,2.0],[0.5,1.0],[0.25,1.0]]}"#;
        assert!(serde_json::from_str::<GaussianPrimitive>(bad).is_err());
    }

    fn random_gaussian(rng: &mut impl Rng) -> GaussianPrimitive {
        GaussianPrimitive::with_color(
            Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
            Vector3::new(rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)),
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            rng.gen_range(0.1..0.9),
            Rgb::repeat(0.5),
        )
    }

    fn random_ray(rng: &mut impl Rng) -> Ray {
        let origin = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -4.0);
        let dir = Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), 1.0);
        Ray::new(origin, dir)
    }

    #[test]
    fn alpha_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = 1e-6;
        for _ in 0..100 {
            let g = random_gaussian(&mut rng);
            let ray = random_ray(&mut rng);
            let peak = g.peak_along_ray(&ray);
            if peak.alpha < 1e-6 {
                continue;
            }
            let grad = g.alpha_gradient(&ray, &peak).to_array();
            let base = flatten(&g);
            for p in 0..11 {
                let eval = |delta: f64| {
                    let mut v = base;
                    v[p] += delta;
                    unflatten(&v, &g).peak_along_ray(&ray).alpha
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let d = (fd - grad[p]).abs();
                assert!(
                    d <= 1e-9 || d / fd.abs().max(grad[p].abs()) <= 1e-4,
                    "param {p}: analytic {} fd {fd}",
                    grad[p]
                );
            }
        }
    }

    fn flatten(g: &GaussianPrimitive) -> [f64; 11] {
        let mut v = [0.0; 11];
        v[0..3].copy_from_slice(g.center.as_slice());
        v[3..6].copy_from_slice(g.scale.as_slice());
        v[6..10].copy_from_slice(&g.rotation);
        v[10] = g.opacity;
        v
    }

    // Builds without re-normalizing so that raw quaternion perturbations
    // reach `rotation_matrix`.
    fn unflatten(v: &[f64; 11], like: &GaussianPrimitive) -> GaussianPrimitive {
        GaussianPrimitive {
            center: Vector3::new(v[0], v[1], v[2]),
            scale: Vector3::new(v[3], v[4], v[5]),
            rotation: [v[6], v[7], v[8], v[9]],
            opacity: v[10],
            sh: like.sh.clone(),
        }
    }
}
