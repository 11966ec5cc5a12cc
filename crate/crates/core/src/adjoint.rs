//! Path-replay backward passes through the compositor.
//!
//! Each pass re-walks the ray front to back with an O(1) [`AdjointCarry`]
//! and emits, per splat, the derivative of a scalar loss with respect to the
//! splat opacity and emission. The loss enters through `seed = ∂Loss/∂L₀`.
//!
//! For the linear and quadratic models the forward result supplies `E_k`
//! and `Θ₀`; with `ΔE_i = E_i - E_k` and `Θ_i = Σ_{i<j<k} ΔE_j α_j`,
//!
//! ```text
//! ∂L₀/∂α_i = ΔE_i (1 + c τ̄_i) + c Θ_i      i < k
//! ∂L₀/∂E_i = α_i (1 + c τ̄_i)               i < k
//! ∂L₀/∂E_k = T̄_k
//! ```
//!
//! with `c = 0` for the linear model. The exponential pass reconstructs the
//! suffix radiance `L_{i+1} = (L_i - E_i α_i) / (1 - α_i)` from `L₀`.

use crate::compositor::{composite_forward, CompositeResult, SplatSample};
use crate::transmittance::TransmittanceModel;
use crate::{Error, Result, Rgb, ALPHA_EPS};

/// Running state of a replay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjointCarry {
    pub tau_bar: f64,
    pub t_bar: f64,
    pub theta: Rgb,
    pub e_k: Rgb,
    /// Suffix radiance (exponential replay).
    pub l_next: Rgb,
    pub exp_prod: f64,
}

impl AdjointCarry {
    fn start(forward: &CompositeResult) -> Self {
        Self {
            tau_bar: 0.0,
            t_bar: 1.0,
            theta: forward.theta0,
            e_k: forward.e_k,
            l_next: forward.radiance,
            exp_prod: 1.0,
        }
    }
}

/// Per-splat gradients of a seeded scalar loss.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatGradients {
    /// `Σ_c seed_c ∂L₀_c/∂α_i`.
    pub d_alpha: Vec<f64>,
    /// `seed_c ∂L₀_c/∂E_{i,c}`.
    pub d_emission: Vec<Rgb>,
}

impl SplatGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            d_alpha: vec![0.0; n],
            d_emission: vec![Rgb::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_alpha.is_empty()
    }
}

fn expect_model(forward: &CompositeResult, ok: bool, expected: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ModelMismatch {
            expected,
            found: forward.model.to_string(),
        })
    }
}

/// Backward pass for the linear model.
pub fn backward_linear(
    samples: &[SplatSample],
    forward: &CompositeResult,
    seed: Rgb,
) -> Result<SplatGradients> {
    expect_model(
        forward,
        forward.model == TransmittanceModel::Linear,
        TransmittanceModel::Linear.to_string(),
    )?;
    Ok(replay_polynomial(0.0, samples, forward, seed))
}

/// Backward pass for the quadratic model `1 - τ - c/2 τ²`.
pub fn backward_quadratic(
    c: f64,
    samples: &[SplatSample],
    forward: &CompositeResult,
    seed: Rgb,
) -> Result<SplatGradients> {
    let model = TransmittanceModel::quadratic(c)?;
    expect_model(forward, forward.model == model, model.to_string())?;
    Ok(replay_polynomial(c, samples, forward, seed))
}

fn replay_polynomial(
    c: f64,
    samples: &[SplatSample],
    forward: &CompositeResult,
    seed: Rgb,
) -> SplatGradients {
    let n = forward.overdraw.min(samples.len());
    let mut grads = SplatGradients::zeros(samples.len());
    let mut carry = AdjointCarry::start(forward);
    for i in 0..n {
        let s = &samples[i];
        if forward.saturation_index == Some(i) {
            // δL_k = δE_k T̄_k; α_k does not enter L₀.
            grads.d_emission[i] = seed * carry.t_bar;
            break;
        }
        let slope = (1.0 + c * carry.tau_bar).max(0.0);
        let delta_e = s.emission - carry.e_k;
        let d_l_d_alpha = delta_e * slope + carry.theta * c;
        grads.d_alpha[i] = seed.dot(&d_l_d_alpha);
        grads.d_emission[i] = seed * (s.alpha * slope);

        carry.t_bar -= s.alpha * slope;
        carry.tau_bar += s.alpha;
        if let Some(next) = samples.get(i + 1) {
            if i + 1 < n && forward.saturation_index != Some(i + 1) {
                carry.theta -= (next.emission - carry.e_k) * next.alpha;
            }
        }
    }
    grads
}

/// Backward pass for the exponential model.
pub fn backward_exponential(
    samples: &[SplatSample],
    forward: &CompositeResult,
    seed: Rgb,
) -> Result<SplatGradients> {
    expect_model(
        forward,
        forward.model == TransmittanceModel::Exponential,
        TransmittanceModel::Exponential.to_string(),
    )?;
    let n = forward.overdraw.min(samples.len());
    let mut grads = SplatGradients::zeros(samples.len());
    let mut carry = AdjointCarry::start(forward);
    for (i, s) in samples.iter().enumerate().take(n) {
        if s.alpha > 1.0 - ALPHA_EPS {
            return Err(Error::ReplaySingularity {
                index: i,
                alpha: s.alpha,
            });
        }
        let l_i = carry.l_next;
        let l_next = (l_i - s.emission * s.alpha) / (1.0 - s.alpha);
        grads.d_alpha[i] = carry.exp_prod * seed.dot(&(s.emission - l_next));
        grads.d_emission[i] = seed * (carry.exp_prod * s.alpha);
        carry.l_next = l_next;
        carry.exp_prod *= 1.0 - s.alpha;
    }
    Ok(grads)
}

/// Suffix radiance `L_{N+1}` reconstructed by replaying the exponential
/// recursion from `L₀`; equals the background up to round-off.
pub fn exponential_replay_tail(samples: &[SplatSample], forward: &CompositeResult) -> Rgb {
    samples
        .iter()
        .take(forward.overdraw)
        .fold(forward.radiance, |l, s| (l - s.emission * s.alpha) / (1.0 - s.alpha))
}

/// Dispatches to the analytic pass for `forward.model`.
pub fn backward(
    samples: &[SplatSample],
    forward: &CompositeResult,
    seed: Rgb,
) -> Result<SplatGradients> {
    match forward.model {
        TransmittanceModel::Linear => backward_linear(samples, forward, seed),
        TransmittanceModel::Quadratic { c } => backward_quadratic(c, samples, forward, seed),
        TransmittanceModel::Exponential => backward_exponential(samples, forward, seed),
        other => Err(Error::UnsupportedModel(other.to_string())),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDiffGradients {
    pub grads: SplatGradients,
    /// Some perturbation moved the saturation index; the kinked gradient is
    /// not meaningful there.
    pub crosses_saturation: bool,
}

/// Central differences of [`composite_forward`] with respect to every
/// opacity and emission channel.
pub fn finite_diff_gradients(
    model: &TransmittanceModel,
    samples: &[SplatSample],
    background: Rgb,
    seed: Rgb,
    eps: f64,
) -> Result<FiniteDiffGradients> {
    if eps <= 0.0 {
        return Err(Error::ParameterDomain {
            name: "eps",
            value: eps,
            domain: "eps > 0",
        });
    }
    let base = composite_forward(model, samples, background)?;
    let mut grads = SplatGradients::zeros(samples.len());
    let mut crosses = false;
    let mut work = samples.to_vec();
    let mut eval = |work: &[SplatSample]| -> Result<f64> {
        let r = composite_forward(model, work, background)?;
        if r.saturation_index != base.saturation_index {
            crosses = true;
        }
        Ok(seed.dot(&r.radiance))
    };
    for i in 0..samples.len() {
        let a = samples[i].alpha;
        work[i].alpha = a + eps;
        let plus = eval(&work)?;
        work[i].alpha = a - eps;
        let minus = eval(&work)?;
        work[i].alpha = a;
        grads.d_alpha[i] = (plus - minus) / (2.0 * eps);

        for ch in 0..3 {
            let e = samples[i].emission[ch];
            work[i].emission[ch] = e + eps;
            let plus = eval(&work)?;
            work[i].emission[ch] = e - eps;
            let minus = eval(&work)?;
            work[i].emission[ch] = e;
            grads.d_emission[i][ch] = (plus - minus) / (2.0 * eps);
        }
    }
    Ok(FiniteDiffGradients {
        grads,
        crosses_saturation: crosses,
    })
}

/// Largest relative discrepancy between two gradient sets. Components
/// smaller than `scale_floor` are compared on that absolute scale instead.
pub fn max_relative_error(a: &SplatGradients, b: &SplatGradients, scale_floor: f64) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(scale_floor);
    let mut worst: f64 = 0.0;
    for i in 0..a.len().min(b.len()) {
        worst = worst.max(rel(a.d_alpha[i], b.d_alpha[i]));
        for c in 0..3 {
            worst = worst.max(rel(a.d_emission[i][c], b.d_emission[i][c]));
        }
    }
    worst
}
