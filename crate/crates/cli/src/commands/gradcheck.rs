use nexsplat::adjoint::{backward, backward_linear, finite_diff_gradients, max_relative_error};
use nexsplat::compositor::{composite_forward, SplatSample};
use nexsplat::transmittance::TransmittanceModel;
use nexsplat::{Error, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::CliResult;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Gradient components below this are compared in absolute terms.
const SCALE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradcheckArgs {
    pub model: TransmittanceModel,
    pub seed: u64,
    pub rays: usize,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckMode {
    /// Analytic adjoint against central differences.
    Analytic,
    /// No analytic adjoint: central differences at `eps` against `eps / 2`.
    FiniteDifferenceSelf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub model: TransmittanceModel,
    pub mode: GradcheckMode,
    pub seed: u64,
    pub rays_checked: usize,
    /// Rays where a perturbation moved the saturation index.
    pub excluded_saturation: usize,
    /// Rays the exponential replay rejects (opacity within `1e-6` of one).
    pub excluded_singular: usize,
    pub max_relative_error: f64,
    /// For `quadratic(c=0)`: largest difference from the linear adjoint.
    pub linear_agreement: Option<f64>,
    pub passed: bool,
}

/// Random sorted ray of `2..=30` splats, background and loss seed.
pub fn random_ray(rng: &mut impl Rng) -> (Vec<SplatSample>, Rgb, Rgb) {
    let n = rng.gen_range(2..=30);
    let mut depths: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..20.0)).collect();
    depths.sort_by(f64::total_cmp);
    let samples = depths
        .into_iter()
        .map(|d| {
            SplatSample::new(
                d,
                rng.gen_range(0.01..0.9),
                Rgb::from_fn(|_, _| rng.gen_range(0.0..1.0)),
            )
        })
        .collect();
    let background = Rgb::from_fn(|_, _| rng.gen_range(0.0..1.0));
    let seed = Rgb::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (samples, background, seed)
}

/// Checks the backward pass of `args.model` against finite differences on
/// `args.rays` random rays.
pub fn gradcheck(args: &GradcheckArgs) -> CliResult<GradcheckReport> {
    let model = args.model;
    let mode = if model.has_analytic_adjoint() {
        GradcheckMode::Analytic
    } else {
        GradcheckMode::FiniteDifferenceSelf
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut report = GradcheckReport {
        model,
        mode,
        seed: args.seed,
        rays_checked: 0,
        excluded_saturation: 0,
        excluded_singular: 0,
        max_relative_error: 0.0,
        linear_agreement: (model == TransmittanceModel::Quadratic { c: 0.0 }).then_some(0.0),
        passed: false,
    };
    for _ in 0..args.rays {
        let (samples, background, seed) = random_ray(&mut rng);
        let fd = finite_diff_gradients(&model, &samples, background, seed, args.eps)?;
        if fd.crosses_saturation {
            report.excluded_saturation += 1;
            continue;
        }
        let reference = match mode {
            GradcheckMode::Analytic => {
                let forward = composite_forward(&model, &samples, background)?;
                match backward(&samples, &forward, seed) {
                    Ok(g) => g,
                    Err(Error::ReplaySingularity { .. }) => {
                        report.excluded_singular += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            GradcheckMode::FiniteDifferenceSelf => {
                let half = finite_diff_gradients(&model, &samples, background, seed, 0.5 * args.eps)?;
                if half.crosses_saturation {
                    report.excluded_saturation += 1;
                    continue;
                }
                half.grads
            }
        };
        report.rays_checked += 1;
        report.max_relative_error = report
            .max_relative_error
            .max(max_relative_error(&reference, &fd.grads, SCALE_FLOOR));
        if let Some(worst) = report.linear_agreement.as_mut() {
            let lin_forward = composite_forward(&TransmittanceModel::Linear, &samples, background)?;
            let lin = backward_linear(&samples, &lin_forward, seed)?;
            for i in 0..samples.len() {
                *worst = worst.max((lin.d_alpha[i] - reference.d_alpha[i]).abs());
                *worst = worst.max((lin.d_emission[i] - reference.d_emission[i]).abs().max());
            }
        }
    }
    report.passed = report.rays_checked > 0
        && report.max_relative_error <= GRADCHECK_TOLERANCE
        && report.linear_agreement.is_none_or(|d| d <= 1e-12);
    Ok(report)
}
