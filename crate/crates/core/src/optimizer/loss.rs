use crate::image::{linear_to_srgb, linear_to_srgb_derivative, Image};
use crate::{Result, Rgb};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Loss value and its gradient with respect to every rendered pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub l1: f64,
    pub ssim: f64,
    pub grad: Image<Rgb>,
}

/// `(1 - λ) L1 + λ (1 - SSIM)` between two images in the same space.
pub fn loss(rendered: &Image<Rgb>, target: &Image<Rgb>, lambda: f64) -> Result<LossValue> {
    rendered.same_size(target)?;
    let n = (rendered.pixels.len() * 3) as f64;
    let mut l1 = 0.0;
    let mut grad = rendered.map(|_| Rgb::zeros());
    for ((g, x), y) in grad.pixels.iter_mut().zip(&rendered.pixels).zip(&target.pixels) {
        let d = x - y;
        l1 += d.abs().sum();
        *g = d.map(|v| (1.0 - lambda) * v.signum() * (v != 0.0) as u8 as f64 / n);
    }
    l1 /= n;
    let (ssim, ssim_grad) = ssim_with_grad(rendered, target);
    for (g, s) in grad.pixels.iter_mut().zip(&ssim_grad.pixels) {
        *g -= s * lambda;
    }
    Ok(LossValue {
        value: (1.0 - lambda) * l1 + lambda * (1.0 - ssim),
        l1,
        ssim,
        grad,
    })
}

/// [`loss`] evaluated on sRGB-encoded versions of two linear images, with
/// the gradient pulled back to linear radiance.
pub fn srgb_loss(rendered: &Image<Rgb>, target: &Image<Rgb>, lambda: f64) -> Result<LossValue> {
    let enc = |img: &Image<Rgb>| img.map(|p| p.map(linear_to_srgb));
    let mut out = loss(&enc(rendered), &enc(target), lambda)?;
    for (g, x) in out.grad.pixels.iter_mut().zip(&rendered.pixels) {
        *g = g.component_mul(&x.map(linear_to_srgb_derivative));
    }
    Ok(out)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.map(|v| v / sum)
}

/// Separable "same"-size Gaussian filter with zero padding.
fn blur(data: &[f64], width: usize, height: usize, window: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let pass = |src: &[f64], horizontal: bool| {
        let mut dst = vec![0.0; src.len()];
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for (k, w) in window.iter().enumerate() {
                    let o = k as isize - half;
                    let (sx, sy) = if horizontal {
                        (x as isize + o, y as isize)
                    } else {
                        (x as isize, y as isize + o)
                    };
                    if sx >= 0 && sy >= 0 && (sx as usize) < width && (sy as usize) < height {
                        acc += w * src[sy as usize * width + sx as usize];
                    }
                }
                dst[y * width + x] = acc;
            }
        }
        dst
    };
    pass(&pass(data, true), false)
}

/// Mean SSIM over pixels and channels.
pub fn ssim(a: &Image<Rgb>, b: &Image<Rgb>) -> Result<f64> {
    a.same_size(b)?;
    Ok(ssim_with_grad(a, b).0)
}

/// Mean SSIM and its gradient with respect to `x`.
fn ssim_with_grad(x: &Image<Rgb>, y: &Image<Rgb>) -> (f64, Image<Rgb>) {
    let (w, h) = (x.width, x.height);
    let window = gaussian_window();
    let n = (w * h * 3) as f64;
    let mut total = 0.0;
    let mut grad = x.map(|_| Rgb::zeros());
    for c in 0..3 {
        let xs: Vec<f64> = x.pixels.iter().map(|p| p[c]).collect();
        let ys: Vec<f64> = y.pixels.iter().map(|p| p[c]).collect();
        let mu_x = blur(&xs, w, h, &window);
        let mu_y = blur(&ys, w, h, &window);
        let sq = |v: &[f64], u: &[f64]| v.iter().zip(u).map(|(a, b)| a * b).collect::<Vec<_>>();
        let e_xx = blur(&sq(&xs, &xs), w, h, &window);
        let e_yy = blur(&sq(&ys, &ys), w, h, &window);
        let e_xy = blur(&sq(&xs, &ys), w, h, &window);
        let mut d_mu = vec![0.0; w * h];
        let mut d_xx = vec![0.0; w * h];
        let mut d_xy = vec![0.0; w * h];
        for i in 0..w * h {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let a1 = 2.0 * mx * my + SSIM_C1;
            let b1 = 2.0 * (e_xy[i] - mx * my) + SSIM_C2;
            let a2 = mx * mx + my * my + SSIM_C1;
            let b2 = (e_xx[i] - mx * mx) + (e_yy[i] - my * my) + SSIM_C2;
            let s = a1 * b1 / (a2 * b2);
            total += s;
            d_mu[i] = (2.0 * my * b1 - 2.0 * my * a1) / (a2 * b2) - s * (2.0 * mx / a2 - 2.0 * mx / b2);
            d_xx[i] = -s / b2;
            d_xy[i] = 2.0 * a1 / (a2 * b2);
        }
        // The zero-padded symmetric filter is its own adjoint.
        let g_mu = blur(&d_mu, w, h, &window);
        let g_xx = blur(&d_xx, w, h, &window);
        let g_xy = blur(&d_xy, w, h, &window);
        for i in 0..w * h {
            grad.pixels[i][c] = (g_mu[i] + 2.0 * xs[i] * g_xx[i] + ys[i] * g_xy[i]) / n;
        }
    }
    (total / n, grad)
}

/// Mean squared error over pixels and channels.
pub fn mse(a: &Image<Rgb>, b: &Image<Rgb>) -> Result<f64> {
    a.same_size(b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| (x - y).norm_squared())
        .sum();
    Ok(sum / (a.pixels.len() * 3) as f64)
}

/// `10 log10(1 / MSE)`; `+∞` for identical images.
pub fn psnr(a: &Image<Rgb>, b: &Image<Rgb>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    })
}

/// Image metrics on display values: sRGB-encoded and clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Metrics {
    pub psnr: f64,
    pub mse: f64,
    pub ssim: f64,
}

pub fn display_metrics(rendered: &Image<Rgb>, target: &Image<Rgb>) -> Result<Metrics> {
    let enc = |img: &Image<Rgb>| img.map(|p| p.map(|v| linear_to_srgb(v).clamp(0.0, 1.0)));
    let (a, b) = (enc(rendered), enc(target));
    Ok(Metrics {
        psnr: psnr(&a, &b)?,
        mse: mse(&a, &b)?,
        ssim: ssim(&a, &b)?,
    })
}
