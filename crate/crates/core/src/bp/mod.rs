//! Flooding-schedule sum-product belief propagation.
//!
//! Two forward paths share one set of update equations:
//!
//! * [`SparseDecoder`] walks only the edges of a binary `H`. It is the fast
//!   path used for Monte-Carlo evaluation.
//! * [`GatedTape`] runs the dense gated form over a relaxed `H` with entries
//!   in `[0, 1]` and records everything needed for the reverse pass. At binary
//!   `H` both paths produce the same messages.
//!
//! LLRs follow the convention `log P(bit = 0) / P(bit = 1)`.

mod gated;
mod sparse;

pub use gated::{backward, bp_decode_gated, GatedTape, RelaxedH, WGradient};
pub use sparse::{bp_decode, SparseDecoder};

use crate::error::{Error, Result};

/// How the reverse pass treats the derivative of `arctanh`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// `1 / (1 - x²)`.
    Exact,
    /// Forced to 1.
    PassThrough,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpConfig {
    pub iterations: usize,
    /// Check products are clamped to `[-1 + epsilon, 1 - epsilon]`.
    pub epsilon: f64,
    pub gradient_mode: GradientMode,
    /// Optional symmetric clamp on variable-to-check messages.
    pub message_clamp: Option<f64>,
}

pub const DEFAULT_EPSILON: f64 = 1e-7;

impl BpConfig {
    pub fn new(iterations: usize) -> Self {
        BpConfig {
            iterations,
            epsilon: DEFAULT_EPSILON,
            gradient_mode: GradientMode::PassThrough,
            message_clamp: None,
        }
    }

    pub fn with_gradient_mode(mut self, mode: GradientMode) -> Self {
        self.gradient_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("BP iterations must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon {} outside (0, 1)",
                self.epsilon
            )));
        }
        if let Some(c) = self.message_clamp {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("message clamp {c} must be > 0")));
            }
        }
        Ok(())
    }
}

/// `2·atanh(clamp(x))`, the check-to-variable message for a check product `x`.
#[inline]
pub(crate) fn check_message(product: f64, epsilon: f64) -> f64 {
    let x = product.clamp(-1.0 + epsilon, 1.0 - epsilon);
    2.0 * atanh_odd(x)
}

/// `atanh` computed on `|x|` so that `atanh(-x) == -atanh(x)` bit for bit.
#[inline]
pub(crate) fn atanh_odd(x: f64) -> f64 {
    let a = x.abs();
    (0.5 * (2.0 * a / (1.0 - a)).ln_1p()).copysign(x)
}

#[inline]
pub(crate) fn clamp_message(m: f64, clamp: Option<f64>) -> f64 {
    match clamp {
        Some(c) => m.clamp(-c, c),
        None => m,
    }
}

/// Hard decision: bit 1 iff the posterior LLR is negative.
#[inline]
pub fn hard_decision(llr: f64) -> u8 {
    (llr < 0.0) as u8
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_bit: Vec<f64>,
}

/// Binary cross-entropy against the all-zero codeword.
///
/// Each bit costs `-ln P(bit = 0) = softplus(-λ̃)`.
pub fn bce_loss(lambda_out: &[f64]) -> LossValue {
    let per_bit: Vec<f64> = lambda_out.iter().map(|&l| softplus(-l)).collect();
    LossValue {
        total: per_bit.iter().sum(),
        per_bit,
    }
}

/// `∂ loss / ∂ λ̃` for [`bce_loss`], scaled by `scale`.
pub fn bce_loss_grad(lambda_out: &[f64], scale: f64, out: &mut [f64]) {
    for (o, &l) in out.iter_mut().zip(lambda_out) {
        *o = -scale * sigmoid(-l);
    }
}
