//! Constrained decoding: logit masking, softmax over the valid-token set,
//! and budget-aware greedy search that always ends in an accepting state.
//!
//! Negative infinity marks a forbidden token. During arithmetic it is
//! realized as the most-negative finite double (so no `(-∞) - (-∞)` NaNs can
//! arise), and masked probabilities are written as exact `0.0` afterwards.

use crate::grammar::{Grammar, TokenSet};
use crate::ltl::TokenId;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("valid-token set is empty")]
    EmptyValidSet,
}

/// Clamp -∞ to the most-negative finite double for safe subtraction.
fn finite(z: f64) -> f64 {
    z.max(f64::MIN)
}

/// Copy a logit row with everything outside `valid` forced to -∞.
pub fn mask_logits(row: &[f64], valid: TokenSet) -> Result<Vec<f64>, DecodeError> {
    if valid.is_empty() {
        return Err(DecodeError::EmptyValidSet);
    }
    Ok(row
        .iter()
        .enumerate()
        .map(|(i, &z)| if valid.contains(i) { z } else { f64::NEG_INFINITY })
        .collect())
}

/// Softmax renormalized over `valid`: probabilities are exactly `0.0` for
/// masked tokens and sum to 1 over the rest. Stable under large logits (the
/// max finite logit is subtracted before exponentiation).
pub fn constrained_softmax(row: &[f64], valid: TokenSet) -> Result<Vec<f64>, DecodeError> {
    if valid.is_empty() {
        return Err(DecodeError::EmptyValidSet);
    }
    let m = row
        .iter()
        .enumerate()
        .filter(|(i, _)| valid.contains(*i))
        .map(|(_, &z)| finite(z))
        .fold(f64::MIN, f64::max);
    let mut probs = vec![0.0; row.len()];
    let mut sum = 0.0;
    for (i, &z) in row.iter().enumerate() {
        if valid.contains(i) {
            let e = (finite(z) - m).exp();
            probs[i] = e;
            sum += e;
        }
    }
    for (i, p) in probs.iter_mut().enumerate() {
        if valid.contains(i) {
            *p /= sum;
        }
    }
    Ok(probs)
}

/// Index of the largest entry within `valid`; ties break toward the lowest
/// token id. `None` iff `valid` is empty.
pub fn argmax_in(row: &[f64], valid: TokenSet) -> Option<TokenId> {
    let mut best: Option<(TokenId, f64)> = None;
    for (i, &z) in row.iter().enumerate() {
        if valid.contains(i) && best.is_none_or(|(_, bz)| z > bz) {
            best = Some((i, z));
        }
    }
    best.map(|(i, _)| i)
}

/// Greedy decoding driver. `next_logits` is called once per step with the
/// tokens emitted so far and must return one logit per vocabulary entry.
///
/// Constrained mode intersects the grammar's valid set with the remaining
/// length budget before taking the argmax, so for `max_len >= 2` the output
/// always ends in an accepting state (EOS last). Unconstrained mode is plain
/// argmax, truncated at EOS or `max_len`.
pub fn greedy_decode<F>(
    mut next_logits: F,
    grammar: &Grammar,
    max_len: usize,
    constrained: bool,
) -> Result<Vec<TokenId>, DecodeError>
where
    F: FnMut(&[TokenId]) -> Vec<f64>,
{
    let vocab = *grammar.vocab();
    let mut out: Vec<TokenId> = Vec::new();
    if constrained {
        let mut state = grammar.init_state();
        while !grammar.is_accepting(&state) {
            let budget = max_len - out.len();
            let valid = grammar.valid_tokens_within(&state, budget);
            let row = next_logits(&out);
            let pick = argmax_in(&row, valid).ok_or(DecodeError::EmptyValidSet)?;
            state = grammar
                .update(&state, vocab.token(pick))
                .expect("argmax over the valid set yields a valid token");
            out.push(pick);
        }
    } else {
        while out.len() < max_len {
            let row = next_logits(&out);
            let mut all = TokenSet::empty();
            for i in 0..row.len() {
                all.insert(i);
            }
            let pick = argmax_in(&row, all).ok_or(DecodeError::EmptyValidSet)?;
            out.push(pick);
            if pick == vocab.eos_id() {
                break;
            }
        }
    }
    Ok(out)
}
