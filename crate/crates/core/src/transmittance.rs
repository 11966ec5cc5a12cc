//! Mother transmittance functions and their discrete extinction weights.
//!
//! A model defines a continuous transmittance `T(τ)` over optical depth and
//! its path-length density `p(τ) = -dT/dτ`. Compositing does not integrate
//! the continuous model; it uses the per-splat discrete weight returned by
//! [`TransmittanceModel::discrete_extinction`], which is evaluated
//! front-to-back from two running quantities: the accumulated optical depth
//! `τ̄ = Σ α_j` and the multiplicative product `Π (1 - α_j)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this magnitude the power-law exponent is treated as its `v → 0`
/// limit, the exponential model.
const POWER_LAW_EXP_LIMIT: f64 = 1e-4;

/// Smallest accepted softplus sharpness.
pub const SOFTPLUS_MIN_KAPPA: f64 = 10.0;

/// Mother transmittance function.
///
/// Build through the checked constructors, [`TransmittanceModel::from_tag`],
/// or deserialization; all of these validate parameters once so evaluation
/// stays branch-light.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", try_from = "RawModel")]
pub enum TransmittanceModel {
    /// `exp(-τ)`, classic multiplicative alpha blending.
    Exponential,
    /// `max(1 - τ, 0)`.
    Linear,
    /// `max(1 - τ - c/2 τ², 0)` with `c ≥ -0.5`.
    Quadratic { c: f64 },
    /// `max(lerp(1 - τ, exp(-τ), γ), 0)`.
    Blended { gamma: f64 },
    /// `lerp(max(1 - τ, 0), exp(-τ), γ)`.
    #[serde(rename = "vicini")]
    ViciniBlend { gamma: f64 },
    /// `max((1 + τ v)^(-1/v), 0)` with `v ≥ -1`.
    PowerLaw { v: f64 },
    /// `softplus(κ (1 - τ)) / softplus(κ)`, a smooth stand-in for linear.
    Softplus { kappa: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum RawModel {
    Exponential,
    Linear,
    Quadratic { c: f64 },
    Blended { gamma: f64 },
    #[serde(rename = "vicini")]
    ViciniBlend { gamma: f64 },
    PowerLaw { v: f64 },
    Softplus { kappa: f64 },
}

impl TryFrom<RawModel> for TransmittanceModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let model = match raw {
            RawModel::Exponential => Self::Exponential,
            RawModel::Linear => Self::Linear,
            RawModel::Quadratic { c } => Self::Quadratic { c },
            RawModel::Blended { gamma } => Self::Blended { gamma },
            RawModel::ViciniBlend { gamma } => Self::ViciniBlend { gamma },
            RawModel::PowerLaw { v } => Self::PowerLaw { v },
            RawModel::Softplus { kappa } => Self::Softplus { kappa },
        };
        model.validate()?;
        Ok(model)
    }
}

impl TransmittanceModel {
    pub fn quadratic(c: f64) -> Result<Self> {
        let m = Self::Quadratic { c };
        m.validate().map(|_| m)
    }

    pub fn blended(gamma: f64) -> Result<Self> {
        let m = Self::Blended { gamma };
        m.validate().map(|_| m)
    }

    pub fn vicini(gamma: f64) -> Result<Self> {
        let m = Self::ViciniBlend { gamma };
        m.validate().map(|_| m)
    }

    pub fn power_law(v: f64) -> Result<Self> {
        let m = Self::PowerLaw { v };
        m.validate().map(|_| m)
    }

    pub fn softplus(kappa: f64) -> Result<Self> {
        let m = Self::Softplus { kappa };
        m.validate().map(|_| m)
    }

    /// Checks the parameter domain of the model.
    pub fn validate(&self) -> Result<()> {
        fn domain(ok: bool, name: &'static str, value: f64, domain: &'static str) -> Result<()> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterDomain {
                    name,
                    value,
                    domain,
                })
            }
        }
        match *self {
            Self::Exponential | Self::Linear => Ok(()),
            Self::Quadratic { c } => domain(c >= -0.5, "c", c, "c >= -0.5"),
            Self::Blended { gamma } | Self::ViciniBlend { gamma } => {
                domain((0.0..=1.0).contains(&gamma), "gamma", gamma, "0 <= gamma <= 1")
            }
            Self::PowerLaw { v } => domain(v >= -1.0, "v", v, "v >= -1"),
            Self::Softplus { kappa } => {
                domain(kappa >= SOFTPLUS_MIN_KAPPA, "kappa", kappa, "kappa >= 10")
            }
        }
    }

    /// Builds a model from a string tag and a parameter map, e.g.
    /// `("quadratic", {"c": 0.5})`.
    pub fn from_tag(tag: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |name: &str| {
            params
                .get(name)
                .copied()
                .ok_or_else(|| Error::MissingParameter {
                    model: tag.to_string(),
                    param: name.to_string(),
                })
        };
        let model = match tag.to_ascii_lowercase().as_str() {
            "exponential" | "exp" => Self::Exponential,
            "linear" | "lin" => Self::Linear,
            "quadratic" => Self::Quadratic { c: get("c")? },
            "blended" | "blend" => Self::Blended {
                gamma: get("gamma")?,
            },
            "vicini" | "vicini_blend" => Self::ViciniBlend {
                gamma: get("gamma")?,
            },
            "power_law" | "powerlaw" | "power-law" => Self::PowerLaw { v: get("v")? },
            "softplus" => Self::Softplus {
                kappa: get("kappa")?,
            },
            other => return Err(Error::UnknownModel(other.to_string())),
        };
        model.validate()?;
        Ok(model)
    }

    /// Short tag used in file names and reports.
    pub fn tag(&self) -> String {
        match *self {
            Self::Exponential => "exponential".into(),
            Self::Linear => "linear".into(),
            Self::Quadratic { c } => format!("quadratic_c{}", fmt_param(c)),
            Self::Blended { gamma } => format!("blended_gamma{}", fmt_param(gamma)),
            Self::ViciniBlend { gamma } => format!("vicini_gamma{}", fmt_param(gamma)),
            Self::PowerLaw { v } => format!("power_law_v{}", fmt_param(v)),
            Self::Softplus { kappa } => format!("softplus_kappa{}", fmt_param(kappa)),
        }
    }

    /// Continuous transmittance `T(τ)`, clamped to `[0, 1]`.
    pub fn transmittance(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0, "negative optical depth {tau}");
        match *self {
            Self::Exponential => (-tau).exp(),
            Self::Linear => (1.0 - tau).max(0.0),
            Self::Quadratic { c } => {
                // For c < 0 the parabola turns back up past its first root.
                if c < 0.0 && tau >= (-1.0 + (1.0 + 2.0 * c).sqrt()) / c {
                    0.0
                } else {
                    (1.0 - tau - 0.5 * c * tau * tau).max(0.0)
                }
            }
            Self::Blended { gamma } => lerp(1.0 - tau, (-tau).exp(), gamma).max(0.0),
            // Both branches are non-negative; the outer clamp is a no-op.
            Self::ViciniBlend { gamma } => lerp((1.0 - tau).max(0.0), (-tau).exp(), gamma).max(0.0),
            Self::PowerLaw { v } => {
                if v == -1.0 {
                    (1.0 - tau).max(0.0)
                } else if v.abs() < POWER_LAW_EXP_LIMIT {
                    (-tau).exp()
                } else {
                    let base = 1.0 + tau * v;
                    if base <= 0.0 {
                        0.0
                    } else {
                        base.powf(-1.0 / v)
                    }
                }
            }
            Self::Softplus { kappa } => softplus(kappa * (1.0 - tau)) / softplus(kappa),
        }
    }

    /// Path-length density `p(τ) = -dT/dτ`; zero once `T` has saturated.
    pub fn density(&self, tau: f64) -> f64 {
        debug_assert!(tau >= 0.0, "negative optical depth {tau}");
        if self.transmittance(tau) <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential => (-tau).exp(),
            Self::Linear => 1.0,
            Self::Quadratic { c } => 1.0 + c * tau,
            Self::Blended { gamma } => 1.0 - gamma + gamma * (-tau).exp(),
            Self::ViciniBlend { gamma } => {
                let linear = if tau < 1.0 { 1.0 } else { 0.0 };
                lerp(linear, (-tau).exp(), gamma)
            }
            Self::PowerLaw { v } => {
                if v == -1.0 {
                    1.0
                } else if v.abs() < POWER_LAW_EXP_LIMIT {
                    (-tau).exp()
                } else {
                    (1.0 + tau * v).powf(-(1.0 + v) / v)
                }
            }
            Self::Softplus { kappa } => kappa * logistic(kappa * (1.0 - tau)) / softplus(kappa),
        }
    }

    /// Unclamped discrete extinction weight `p̄_i` of a splat with opacity
    /// `alpha` preceded by optical depth `tau_bar` and multiplicative
    /// transmittance `exp_prod`.
    ///
    /// Saturation (the weight at which the running sum reaches one) is the
    /// compositor's job and is not applied here.
    pub fn discrete_extinction(&self, alpha: f64, tau_bar: f64, exp_prod: f64) -> f64 {
        match *self {
            Self::Exponential => alpha * exp_prod,
            Self::Linear => alpha,
            Self::Quadratic { c } => alpha * (1.0 + c * tau_bar).max(0.0),
            Self::Blended { gamma } | Self::ViciniBlend { gamma } => {
                // lerp(α, α·Π(1-α_j), γ) for both blends.
                alpha * (1.0 - gamma + gamma * exp_prod)
            }
            Self::PowerLaw { v } => {
                if v == -1.0 {
                    alpha
                } else if v.abs() < POWER_LAW_EXP_LIMIT {
                    alpha * exp_prod
                } else {
                    let base = 1.0 + tau_bar * v;
                    if base <= 0.0 {
                        0.0
                    } else {
                        alpha * base.powf(-(1.0 + v) / v)
                    }
                }
            }
            Self::Softplus { kappa } => alpha * logistic(kappa * (1.0 - tau_bar)),
        }
    }

    /// Whether [`crate::adjoint`] has an analytic path-replay adjoint.
    pub fn has_analytic_adjoint(&self) -> bool {
        matches!(
            self,
            Self::Exponential | Self::Linear | Self::Quadratic { .. }
        )
    }
}

impl fmt::Display for TransmittanceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Exponential => write!(f, "exponential"),
            Self::Linear => write!(f, "linear"),
            Self::Quadratic { c } => write!(f, "quadratic(c={c})"),
            Self::Blended { gamma } => write!(f, "blended(gamma={gamma})"),
            Self::ViciniBlend { gamma } => write!(f, "vicini(gamma={gamma})"),
            Self::PowerLaw { v } => write!(f, "power_law(v={v})"),
            Self::Softplus { kappa } => write!(f, "softplus(kappa={kappa})"),
        }
    }
}

fn fmt_param(x: f64) -> String {
    format!("{x}").replace('-', "m").replace('.', "p")
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
