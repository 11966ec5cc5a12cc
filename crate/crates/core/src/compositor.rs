//! Front-to-back compositing of depth-sorted splat samples.
//!
//! Radiance along a ray is `L₀ = Σ E_i p̄_i + L_b T̄_{N+1}` where `p̄_i` comes
//! from the transmittance model and `T̄_i = 1 - Σ_{j<i} p̄_j`. The first splat
//! whose weight would push the running sum to one is the saturation index
//! `k`: its weight is clamped to the remaining transmittance and the walk
//! stops there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::transmittance::TransmittanceModel;
use crate::{Error, Result, Rgb};

/// One splat as seen by a ray: depth, opacity at the peak, emission.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplatSample {
    pub depth: f64,
    pub alpha: f64,
    pub emission: Rgb,
}

impl SplatSample {
    pub fn new(depth: f64, alpha: f64, emission: Rgb) -> Self {
        debug_assert!((0.0..=1.0).contains(&alpha), "alpha {alpha} outside [0, 1]");
        debug_assert!(emission.iter().all(|&e| e >= 0.0), "negative emission");
        Self {
            depth,
            alpha,
            emission,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeResult {
    pub model: TransmittanceModel,
    pub radiance: Rgb,
    /// `T̄_{N+1}`; zero whenever the ray saturated.
    pub residual_t: f64,
    /// Splats evaluated before the walk stopped.
    pub overdraw: usize,
    /// Zero-based index of the saturating splat.
    pub saturation_index: Option<usize>,
    /// `Θ₀ = Σ_{0<j<k} (E_j - E_k) α_j`, consumed by the quadratic adjoint.
    pub theta0: Rgb,
    /// Emission at saturation; the background when the ray never saturated.
    pub e_k: Rgb,
}

/// Bookkeeping for one splat pushed into an [`Accumulator`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    /// `p̄_i` after saturation clamping.
    pub weight: f64,
    /// `τ̄_i` before this splat.
    pub tau_bar: f64,
    /// `T̄_i` before this splat.
    pub t_bar: f64,
    pub saturated: bool,
}

/// Streaming front-to-back compositor.
///
/// Samples must be pushed in ascending depth order. Once a push reports
/// saturation, further pushes are ignored.
#[derive(Clone, Debug)]
pub struct Accumulator {
    model: TransmittanceModel,
    tau_bar: f64,
    exp_prod: f64,
    weight_sum: f64,
    radiance: Rgb,
    // Σ_{j≥1} E_j α_j and Σ_{j≥1} α_j over pre-saturation splats.
    tail_e_alpha: Rgb,
    tail_alpha: f64,
    count: usize,
    saturation: Option<(usize, Rgb)>,
}

impl Accumulator {
    pub fn new(model: TransmittanceModel) -> Self {
        Self {
            model,
            tau_bar: 0.0,
            exp_prod: 1.0,
            weight_sum: 0.0,
            radiance: Rgb::zeros(),
            tail_e_alpha: Rgb::zeros(),
            tail_alpha: 0.0,
            count: 0,
            saturation: None,
        }
    }

    pub fn is_saturated(&self) -> bool {
        self.saturation.is_some()
    }

    /// Current `T̄`.
    pub fn transmittance(&self) -> f64 {
        if self.is_saturated() {
            0.0
        } else {
            1.0 - self.weight_sum
        }
    }

    pub fn push(&mut self, sample: &SplatSample) -> Contribution {
        let t_bar = self.transmittance();
        if self.is_saturated() {
            return Contribution {
                weight: 0.0,
                tau_bar: self.tau_bar,
                t_bar,
                saturated: true,
            };
        }
        let index = self.count;
        self.count += 1;
        let tau_bar = self.tau_bar;
        let raw = self
            .model
            .discrete_extinction(sample.alpha, self.tau_bar, self.exp_prod);
        let saturated = self.weight_sum + raw >= 1.0;
        let weight = if saturated { t_bar } else { raw };
        self.radiance += sample.emission * weight;
        if saturated {
            self.saturation = Some((index, sample.emission));
            self.weight_sum = 1.0;
        } else {
            self.weight_sum += weight;
            if index > 0 {
                self.tail_e_alpha += sample.emission * sample.alpha;
                self.tail_alpha += sample.alpha;
            }
        }
        self.tau_bar += sample.alpha;
        self.exp_prod *= 1.0 - sample.alpha;
        Contribution {
            weight,
            tau_bar,
            t_bar,
            saturated,
        }
    }

    pub fn finish(self, background: Rgb) -> CompositeResult {
        let residual_t = self.transmittance();
        let (saturation_index, e_k) = match self.saturation {
            Some((k, e)) => (Some(k), e),
            None => (None, background),
        };
        CompositeResult {
            model: self.model,
            radiance: self.radiance + background * residual_t,
            residual_t,
            overdraw: self.count,
            saturation_index,
            theta0: self.tail_e_alpha - e_k * self.tail_alpha,
            e_k,
        }
    }
}

fn check_sorted(samples: &[SplatSample]) -> Result<()> {
    match samples.windows(2).position(|w| w[1].depth < w[0].depth) {
        Some(i) => Err(Error::Unsorted { index: i + 1 }),
        None => Ok(()),
    }
}

/// Composites depth-sorted samples under `model`.
pub fn composite_forward(
    model: &TransmittanceModel,
    samples: &[SplatSample],
    background: Rgb,
) -> Result<CompositeResult> {
    check_sorted(samples)?;
    let mut acc = Accumulator::new(*model);
    for s in samples {
        if acc.push(s).saturated {
            break;
        }
    }
    Ok(acc.finish(background))
}

/// Per-splat clamped weights `p̄_i` (zero after saturation).
pub fn composite_weights(model: &TransmittanceModel, samples: &[SplatSample]) -> Vec<f64> {
    let mut acc = Accumulator::new(*model);
    samples.iter().map(|s| acc.push(s).weight).collect()
}

/// Classic multiplicative alpha blending, including the background term.
pub fn composite_classic(samples: &[SplatSample], background: Rgb) -> Rgb {
    let mut t = 1.0;
    let mut l = Rgb::zeros();
    for s in samples {
        l += s.emission * (s.alpha * t);
        t *= 1.0 - s.alpha;
    }
    l + background * t
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouletteEstimate {
    pub mean: Rgb,
    /// Per-channel standard error of the mean (zero for a single trial).
    pub std_err: Rgb,
    pub trials: usize,
}

/// Stochastic evaluation of the recursive form
/// `L_i = E_i p̄_i/T̄_i + (1 - p̄_i/T̄_i) L_{i+1}`.
///
/// Each walk visits the splats front to back and stops at splat `i` with
/// probability `p̄_i / T̄_i`; the conditional probability depends on every
/// earlier splat unless the model is exponential, so the samples must still
/// be sorted.
pub fn russian_roulette_estimate(
    model: &TransmittanceModel,
    samples: &[SplatSample],
    background: Rgb,
    seed: u64,
    n_trials: usize,
) -> Result<RouletteEstimate> {
    check_sorted(samples)?;
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Rgb::zeros();
    let mut sum_sq = Rgb::zeros();
    for _ in 0..n_trials {
        let l = roulette_walk(model, samples, background, &mut rng);
        sum += l;
        sum_sq += l.component_mul(&l);
    }
    let n = n_trials as f64;
    let mean = sum / n;
    let std_err = if n_trials > 1 {
        (sum_sq / n - mean.component_mul(&mean))
            .map(|v| (v.max(0.0) * n / (n - 1.0) / n).sqrt())
    } else {
        Rgb::zeros()
    };
    Ok(RouletteEstimate {
        mean,
        std_err,
        trials: n_trials,
    })
}

fn roulette_walk(
    model: &TransmittanceModel,
    samples: &[SplatSample],
    background: Rgb,
    rng: &mut impl Rng,
) -> Rgb {
    let mut acc = Accumulator::new(*model);
    for s in samples {
        let c = acc.push(s);
        if c.saturated {
            // p̄_k / T̄_k = 1.
            return s.emission;
        }
        if c.t_bar > 0.0 && rng.gen::<f64>() * c.t_bar < c.weight {
            return s.emission;
        }
    }
    background
}

/// Per-pixel overdraw counts of a grid of composite results.
pub fn overdraw_map(results: &Image<CompositeResult>) -> Image<u32> {
    results.map(|r| r.overdraw as u32)
}
