use nexsplat::compositor::{composite_forward, russian_roulette_estimate, SplatSample};
use nexsplat::transmittance::TransmittanceModel;
use nexsplat::Rgb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::CliResult;

pub const Z_LIMIT: f64 = 3.0;

#[derive(Clone, Debug)]
pub struct StochasticArgs {
    pub models: Vec<TransmittanceModel>,
    pub seed: u64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestRay {
    pub name: String,
    pub samples: Vec<SplatSample>,
    pub background: Rgb,
}

/// Ten fixed rays: the two-splat half-opacity case, four 0.4-opacity red
/// splats, and eight random rays drawn from `seed`.
pub fn test_rays(seed: u64) -> Vec<TestRay> {
    let red = Rgb::new(1.0, 0.0, 0.0);
    let green = Rgb::new(0.0, 1.0, 0.0);
    let mut rays = vec![
        TestRay {
            name: "two_half".into(),
            samples: vec![
                SplatSample::new(1.0, 0.5, red),
                SplatSample::new(2.0, 0.5, green),
            ],
            background: Rgb::new(0.0, 0.0, 1.0),
        },
        TestRay {
            name: "four_red".into(),
            samples: (0..4).map(|i| SplatSample::new(1.0 + i as f64, 0.4, red)).collect(),
            background: Rgb::new(0.0, 0.0, 1.0),
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..8 {
        let n = rng.gen_range(2..=12);
        let mut depths: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0)).collect();
        depths.sort_by(f64::total_cmp);
        rays.push(TestRay {
            name: format!("random_{i}"),
            samples: depths
                .into_iter()
                .map(|d| {
                    SplatSample::new(
                        d,
                        rng.gen_range(0.05..0.7),
                        Rgb::from_fn(|_, _| rng.gen_range(0.0..1.0)),
                    )
                })
                .collect(),
            background: Rgb::from_fn(|_, _| rng.gen_range(0.0..1.0)),
        });
    }
    rays
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RayCheck {
    pub model: TransmittanceModel,
    pub ray: String,
    pub deterministic: [f64; 3],
    pub mean: [f64; 3],
    pub std_err: [f64; 3],
    /// `(mean - deterministic) / std_err`; zero when both agree exactly.
    pub z: [f64; 3],
    /// `None` when a single trial gives no usable error estimate.
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StochasticReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<RayCheck>,
}

impl StochasticReport {
    /// `None` when no check produced a verdict.
    pub fn passed(&self) -> Option<bool> {
        let verdicts: Vec<bool> = self.checks.iter().filter_map(|c| c.passed).collect();
        (!verdicts.is_empty()).then(|| verdicts.iter().all(|&v| v))
    }

    pub fn max_abs_z(&self) -> f64 {
        self.checks
            .iter()
            .flat_map(|c| c.z)
            .map(f64::abs)
            .filter(|z| z.is_finite())
            .fold(0.0, f64::max)
    }
}

/// Compares the Russian-roulette estimate with the deterministic
/// compositor on every test ray under every model. Each (model, ray) pair
/// uses its own stream derived from `seed`.
pub fn stochastic_check(args: &StochasticArgs) -> CliResult<StochasticReport> {
    let rays = test_rays(args.seed);
    let mut checks = Vec::new();
    for (mi, model) in args.models.iter().enumerate() {
        for (ri, ray) in rays.iter().enumerate() {
            let exact = composite_forward(model, &ray.samples, ray.background)?.radiance;
            let stream = args
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((mi * rays.len() + ri) as u64);
            let est = russian_roulette_estimate(model, &ray.samples, ray.background, stream, args.trials)?;
            let z: [f64; 3] = std::array::from_fn(|c| {
                let d = est.mean[c] - exact[c];
                if d.abs() <= 1e-12 {
                    0.0
                } else {
                    d / est.std_err[c]
                }
            });
            let passed = (args.trials > 1).then(|| z.iter().all(|v| v.abs() <= Z_LIMIT));
            checks.push(RayCheck {
                model: *model,
                ray: ray.name.clone(),
                deterministic: exact.into(),
                mean: est.mean.into(),
                std_err: est.std_err.into(),
                z,
                passed,
            });
        }
    }
    Ok(StochasticReport {
        seed: args.seed,
        trials: args.trials,
        checks,
    })
}
