//! Standard and grammar-forced cross-entropy over logit rows, with exact
//! analytic gradients.
//!
//! The forced loss renormalizes the predictive distribution over the
//! grammar's valid-token set before scoring, so probability mass spent on
//! tokens the grammar forbids is never penalized: it never exceeds the
//! standard loss on the same row, and its gradient is exactly zero outside
//! the valid set.

use crate::decode::{constrained_softmax, DecodeError};
use crate::grammar::TokenSet;
use crate::ltl::TokenId;
use thiserror::Error;

/// Flat per-parameter gradient, aligned with the model's parameter vector.
pub type GradientBundle = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LossError {
    #[error("target logit is -inf")]
    TargetMasked,
    #[error("target token {target} is outside the valid set")]
    TargetNotValid { target: TokenId },
    #[error("empty gradient batch")]
    EmptyBatch,
}

fn full_set(n: usize) -> TokenSet {
    (0..n).collect()
}

/// log(sum(exp(z))) over the members of `valid`, shifted by the max finite
/// member for stability. -∞ members contribute an exact zero term.
fn log_sum_exp(z: &[f64], valid: TokenSet) -> f64 {
    let m = z
        .iter()
        .enumerate()
        .filter(|(i, _)| valid.contains(*i))
        .map(|(_, &v)| v.max(f64::MIN))
        .fold(f64::MIN, f64::max);
    let mut sum = 0.0;
    for (i, &v) in z.iter().enumerate() {
        if valid.contains(i) {
            sum += (v.max(f64::MIN) - m).exp();
        }
    }
    m + sum.ln()
}

/// Standard cross-entropy `-log softmax(z)[y]`. Finite and nonnegative
/// whenever `z[y]` is finite.
pub fn cross_entropy(z: &[f64], y: TokenId) -> Result<f64, LossError> {
    if z[y] == f64::NEG_INFINITY {
        return Err(LossError::TargetMasked);
    }
    Ok(log_sum_exp(z, full_set(z.len())) - z[y])
}

/// Grammar-forced cross-entropy: `-log` of the probability of `y` under the
/// distribution renormalized over `valid`. Requires `y` to be a member.
pub fn forced_cross_entropy(z: &[f64], y: TokenId, valid: TokenSet) -> Result<f64, LossError> {
    if !valid.contains(y) {
        return Err(LossError::TargetNotValid { target: y });
    }
    if z[y] == f64::NEG_INFINITY {
        return Err(LossError::TargetMasked);
    }
    Ok(log_sum_exp(z, valid) - z[y])
}

/// dL/dz for the standard loss: `softmax(z) - onehot(y)`.
pub fn grad_ce(z: &[f64], y: TokenId) -> Result<Vec<f64>, LossError> {
    if z[y] == f64::NEG_INFINITY {
        return Err(LossError::TargetMasked);
    }
    let mut g = constrained_softmax(z, full_set(z.len())).map_err(|e| match e {
        DecodeError::EmptyValidSet => unreachable!("full set is never empty"),
    })?;
    g[y] -= 1.0;
    Ok(g)
}

/// dL'/dz for the forced loss: the renormalized softmax minus `onehot(y)` on
/// the valid set, and *exactly* `0.0` everywhere else — no gradient signal
/// ever flows through a forbidden token's logit.
pub fn grad_forced_ce(z: &[f64], y: TokenId, valid: TokenSet) -> Result<Vec<f64>, LossError> {
    if !valid.contains(y) {
        return Err(LossError::TargetNotValid { target: y });
    }
    if z[y] == f64::NEG_INFINITY {
        return Err(LossError::TargetMasked);
    }
    let mut g = constrained_softmax(z, valid).map_err(|e| match e {
        DecodeError::EmptyValidSet => unreachable!("valid contains y"),
    })?;
    g[y] -= 1.0;
    Ok(g)
}

/// Mean squared Euclidean norm over a batch of per-example gradients — the
/// second-moment estimate used to compare training signal variance.
pub fn grad_second_moment(grads: &[GradientBundle]) -> Result<f64, LossError> {
    if grads.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let total: f64 = grads
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(total / grads.len() as f64)
}
