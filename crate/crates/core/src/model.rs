//! A small encoder/decoder for translating lifted sentences into formula
//! token sequences: single-layer gated recurrent encoder, single-layer gated
//! recurrent decoder with dot-product attention over encoder states, and a
//! linear output head. Forward and backward passes are written by hand; the
//! backward pass is the exact analytic gradient of the batch-mean sequence
//! loss and is finite-difference-verified in the tests.
//!
//! Everything is `f64` in one flat parameter vector, so gradients are plain
//! vectors too and checkpoints are trivially byte-exact. Training is plain
//! SGD, deterministic for a fixed seed: per-example gradients inside a batch
//! may be computed in parallel but are reduced in index order.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decode::{greedy_decode, DecodeError};
use crate::grammar::Grammar;
use crate::loss::{
    cross_entropy, forced_cross_entropy, grad_ce, grad_forced_ce, GradientBundle, LossError,
};
use crate::ltl::{parse_tokens, Formula, ParseError, SurfaceToken, TokenId};
use crate::par;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("target prefix longer than max_len")]
    LengthExceeded,
    #[error("source sequence is empty")]
    EmptySource,
    #[error("example {index}: target must parse and end with a single EOS")]
    UnparseableTarget { index: usize },
    #[error("example {index}, position {pos}: target token outside the grammar's valid set")]
    TargetNotValid { index: usize, pos: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("constrained decode violated its own guarantee: {0}")]
    InvariantViolated(String),
    #[error("unconstrained output does not parse: {0}")]
    OutputUnparseable(ParseError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Architecture and budget knobs. `vocab` is the target (formula-token)
/// vocabulary size, `src_vocab` the source embedding-table height.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub src_vocab: usize,
    pub vocab: usize,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub max_len: usize,
}

impl ModelDims {
    /// Closed-form parameter count: two embedding tables, two 3-gate
    /// recurrent cells, the attention projection, and the output head.
    pub fn param_count(&self) -> usize {
        let gru = 3 * (self.d_hidden * self.d_emb + self.d_hidden * self.d_hidden + self.d_hidden);
        self.src_vocab * self.d_emb
            + self.vocab * self.d_emb
            + 2 * gru
            + self.d_hidden * self.d_hidden
            + self.vocab * self.d_hidden
            + self.vocab
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Standard,
    GrammarForced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: TrainMode,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub max_len: usize,
    /// Cap on the L2 norm of each batch gradient; 0 disables clipping.
    /// Recurrent nets under plain SGD occasionally blow up on long
    /// targets, and a norm cap removes those runs without changing which
    /// loss is being optimized.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 3,
            batch_size: 16,
            seed: 1,
            mode: TrainMode::Standard,
            d_emb: 32,
            d_hidden: 64,
            max_len: 64,
            clip_norm: 5.0,
        }
    }
}

/// One (source ids, target ids) training pair; the target includes its
/// final EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainExample {
    pub src: Vec<TokenId>,
    pub tgt: Vec<TokenId>,
}

// Gate order inside each recurrent cell: reset, update, candidate.
const GATES: usize = 3;

/// Byte offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    e_src: usize,
    e_tgt: usize,
    enc: GruOffsets,
    dec: GruOffsets,
    w_att: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

#[derive(Debug, Clone, Copy)]
struct GruOffsets {
    w: [usize; GATES], // [d_hidden x d_emb]
    u: [usize; GATES], // [d_hidden x d_hidden]
    b: [usize; GATES], // [d_hidden]
}

impl Offsets {
    fn new(d: &ModelDims) -> Offsets {
        let mut cursor = 0;
        let mut take = |len: usize| {
            let at = cursor;
            cursor += len;
            at
        };
        let e_src = take(d.src_vocab * d.d_emb);
        let e_tgt = take(d.vocab * d.d_emb);
        let mut gru = || {
            let mut w = [0; GATES];
            let mut u = [0; GATES];
            let mut b = [0; GATES];
            for g in 0..GATES {
                w[g] = take(d.d_hidden * d.d_emb);
                u[g] = take(d.d_hidden * d.d_hidden);
                b[g] = take(d.d_hidden);
            }
            GruOffsets { w, u, b }
        };
        let enc = gru();
        let dec = gru();
        let w_att = take(d.d_hidden * d.d_hidden);
        let w_out = take(d.vocab * d.d_hidden);
        let b_out = take(d.vocab);
        Offsets {
            e_src,
            e_tgt,
            enc,
            dec,
            w_att,
            w_out,
            b_out,
            total: cursor,
        }
    }
}

/// The model: dimensions plus one flat `f64` vector in [`Offsets`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: ModelDims,
    seed: u64,
    theta: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ModelParams {
    /// Deterministic scaled-uniform initialization: every tensor is drawn
    /// uniformly from ±sqrt(6 / (fan_in + fan_out)) off one seeded stream,
    /// biases included, so two seeds disagree almost everywhere and one seed
    /// reproduces bit-identically.
    pub fn init(dims: ModelDims, seed: u64) -> ModelParams {
        let off = Offsets::new(&dims);
        let mut theta = vec![0.0; off.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |theta: &mut Vec<f64>, at: usize, len: usize, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for slot in &mut theta[at..at + len] {
                *slot = rng.gen_range(-a..a);
            }
        };
        let (de, dh, v, sv) = (dims.d_emb, dims.d_hidden, dims.vocab, dims.src_vocab);
        fill(&mut theta, off.e_src, sv * de, de, de);
        fill(&mut theta, off.e_tgt, v * de, de, de);
        for gru in [off.enc, off.dec] {
            for g in 0..GATES {
                fill(&mut theta, gru.w[g], dh * de, de, dh);
                fill(&mut theta, gru.u[g], dh * dh, dh, dh);
                fill(&mut theta, gru.b[g], dh, dh, dh);
            }
        }
        fill(&mut theta, off.w_att, dh * dh, dh, dh);
        fill(&mut theta, off.w_out, v * dh, dh, v);
        fill(&mut theta, off.b_out, v, dh, v);
        ModelParams { dims, seed, theta }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn from_theta(dims: ModelDims, seed: u64, theta: Vec<f64>) -> ModelParams {
        assert_eq!(theta.len(), dims.param_count());
        ModelParams { dims, seed, theta }
    }

    fn offsets(&self) -> Offsets {
        Offsets::new(&self.dims)
    }

    fn emb(&self, table: usize, id: TokenId) -> &[f64] {
        let de = self.dims.d_emb;
        &self.theta[table + id * de..table + (id + 1) * de]
    }

    /// One recurrent-cell step. Returns the full cache needed by backward.
    fn gru_step(&self, gru: &GruOffsets, x: &[f64], h_prev: &[f64]) -> GruCache {
        let dh = self.dims.d_hidden;
        let de = x.len();
        let t = &self.theta;
        let mut r = vec![0.0; dh];
        let mut u = vec![0.0; dh];
        let mut k = vec![0.0; dh];
        let mut c = vec![0.0; dh];
        let mut h = vec![0.0; dh];
        for i in 0..dh {
            let mut ar = t[gru.b[0] + i];
            let mut au = t[gru.b[1] + i];
            for (j, &xj) in x.iter().enumerate() {
                ar += t[gru.w[0] + i * de + j] * xj;
                au += t[gru.w[1] + i * de + j] * xj;
            }
            for (j, &hj) in h_prev.iter().enumerate() {
                ar += t[gru.u[0] + i * dh + j] * hj;
                au += t[gru.u[1] + i * dh + j] * hj;
            }
            r[i] = sigmoid(ar);
            u[i] = sigmoid(au);
        }
        for i in 0..dh {
            let mut ki = 0.0;
            for (j, &hj) in h_prev.iter().enumerate() {
                ki += t[gru.u[2] + i * dh + j] * hj;
            }
            let mut ac = t[gru.b[2] + i] + r[i] * ki;
            for (j, &xj) in x.iter().enumerate() {
                ac += t[gru.w[2] + i * de + j] * xj;
            }
            k[i] = ki;
            c[i] = ac.tanh();
            h[i] = u[i] * h_prev[i] + (1.0 - u[i]) * c[i];
        }
        GruCache { r, u, k, c, h }
    }

    /// Backward through one cell step. Accumulates parameter gradients into
    /// `grad`, the input gradient into `dx`, and returns nothing else; `dh`
    /// is the incoming gradient on the step's output.
    #[allow(clippy::too_many_arguments)]
    fn gru_backward(
        &self,
        gru: &GruOffsets,
        x: &[f64],
        h_prev: &[f64],
        cache: &GruCache,
        dh_out: &[f64],
        grad: &mut [f64],
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        let dhn = self.dims.d_hidden;
        let de = x.len();
        let t = &self.theta;
        for i in 0..dhn {
            let (r, u, k, c) = (cache.r[i], cache.u[i], cache.k[i], cache.c[i]);
            let du = dh_out[i] * (h_prev[i] - c);
            let dc = dh_out[i] * (1.0 - u);
            dh_prev[i] += dh_out[i] * u;
            let dac = dc * (1.0 - c * c);
            let dk = dac * r;
            let dar = dac * k * r * (1.0 - r);
            let dau = du * u * (1.0 - u);
            grad[gru.b[0] + i] += dar;
            grad[gru.b[1] + i] += dau;
            grad[gru.b[2] + i] += dac;
            for (j, &xj) in x.iter().enumerate() {
                grad[gru.w[0] + i * de + j] += dar * xj;
                grad[gru.w[1] + i * de + j] += dau * xj;
                grad[gru.w[2] + i * de + j] += dac * xj;
                dx[j] += t[gru.w[0] + i * de + j] * dar
                    + t[gru.w[1] + i * de + j] * dau
                    + t[gru.w[2] + i * de + j] * dac;
            }
            for (j, &hj) in h_prev.iter().enumerate() {
                grad[gru.u[0] + i * dhn + j] += dar * hj;
                grad[gru.u[1] + i * dhn + j] += dau * hj;
                grad[gru.u[2] + i * dhn + j] += dk * hj;
                dh_prev[j] += t[gru.u[0] + i * dhn + j] * dar
                    + t[gru.u[1] + i * dhn + j] * dau
                    + t[gru.u[2] + i * dhn + j] * dk;
            }
        }
    }

    /// Encode a source sequence: per-step hidden states plus the
    /// attention-projected states.
    fn encode(&self, src: &[TokenId]) -> Result<Encoding, ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptySource);
        }
        let off = self.offsets();
        let dh = self.dims.d_hidden;
        let mut h = vec![0.0; dh];
        let mut steps = Vec::with_capacity(src.len());
        for &id in src {
            let x = self.emb(off.e_src, id).to_vec();
            let cache = self.gru_step(&off.enc, &x, &h);
            h = cache.h.clone();
            steps.push(cache);
        }
        // ghat[i] = W_att h_i, reused by every decoder step.
        let t = &self.theta;
        let ghat: Vec<Vec<f64>> = steps
            .iter()
            .map(|s| {
                (0..dh)
                    .map(|a| {
                        let mut acc = 0.0;
                        for (b, &hb) in s.h.iter().enumerate() {
                            acc += t[off.w_att + a * dh + b] * hb;
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Encoding { steps, ghat })
    }

    /// One decoder step on top of an encoding: cell update, attention over
    /// the encoder states, additive combination, output head.
    fn decode_step(&self, enc: &Encoding, input: TokenId, d_prev: &[f64]) -> DecStep {
        let off = self.offsets();
        let dh = self.dims.d_hidden;
        let t = &self.theta;
        let x = self.emb(off.e_tgt, input).to_vec();
        let cell = self.gru_step(&off.dec, &x, d_prev);
        let d = &cell.h;
        let scores: Vec<f64> = enc
            .ghat
            .iter()
            .map(|g| g.iter().zip(d).map(|(gi, di)| gi * di).sum())
            .collect();
        let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let alpha: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let mut ctx = vec![0.0; dh];
        for (i, step) in enc.steps.iter().enumerate() {
            for (a, &ha) in step.h.iter().enumerate() {
                ctx[a] += alpha[i] * ha;
            }
        }
        let o: Vec<f64> = d.iter().zip(&ctx).map(|(a, b)| a + b).collect();
        let logits: Vec<f64> = (0..self.dims.vocab)
            .map(|v| {
                let mut acc = t[off.b_out + v];
                for (a, &oa) in o.iter().enumerate() {
                    acc += t[off.w_out + v * dh + a] * oa;
                }
                acc
            })
            .collect();
        DecStep {
            input,
            cell,
            alpha,
            o,
            logits,
        }
    }

    /// Teacher-forced forward pass: one logit row per target position, row
    /// `t` scoring position `t` given `tgt_prefix[..t]`. The decoder's first
    /// input is the EOS embedding (the target vocabulary has no separate
    /// start symbol).
    pub fn forward(
        &self,
        src: &[TokenId],
        tgt_prefix: &[TokenId],
        eos: TokenId,
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        if tgt_prefix.len() > self.dims.max_len {
            return Err(ModelError::LengthExceeded);
        }
        let enc = self.encode(src)?;
        let mut rows = Vec::with_capacity(tgt_prefix.len());
        let mut d = enc.steps.last().expect("nonempty src").h.clone();
        let mut input = eos;
        for &next in tgt_prefix {
            let step = self.decode_step(&enc, input, &d);
            rows.push(step.logits.clone());
            d = step.cell.h.clone();
            input = next;
        }
        Ok(rows)
    }

    /// Loss and exact parameter gradient for one example. The grammar state
    /// is driven by the *target* tokens, mirroring teacher forcing: position
    /// `t`'s valid set is what the grammar allows after `tgt[..t]`.
    pub fn example_gradient(
        &self,
        example: &TrainExample,
        mode: TrainMode,
        grammar: &Grammar,
        index: usize,
    ) -> Result<(GradientBundle, f64), ModelError> {
        let vocab = grammar.vocab();
        let eos = vocab.eos_id();
        let tgt = &example.tgt;
        if tgt.len() > self.dims.max_len {
            return Err(ModelError::LengthExceeded);
        }
        // Data contract: the target is a formula plus exactly one final EOS.
        let well_formed = tgt.len() >= 2
            && *tgt.last().unwrap() == eos
            && !tgt[..tgt.len() - 1].contains(&eos)
            && parse_tokens(
                &tgt[..tgt.len() - 1]
                    .iter()
                    .map(|&id| vocab.token(id))
                    .collect::<Vec<_>>(),
            )
            .is_ok();
        if !well_formed {
            return Err(ModelError::UnparseableTarget { index });
        }

        let off = self.offsets();
        let dh = self.dims.d_hidden;
        let enc = self.encode(&example.src)?;

        // Forward, keeping every step's tape.
        let mut steps: Vec<DecStep> = Vec::with_capacity(tgt.len());
        let mut d_hiddens: Vec<Vec<f64>> = Vec::with_capacity(tgt.len() + 1);
        d_hiddens.push(enc.steps.last().expect("nonempty src").h.clone());
        let mut input = eos;
        for &next in tgt {
            let step = self.decode_step(&enc, input, d_hiddens.last().unwrap());
            d_hiddens.push(step.cell.h.clone());
            input = next;
            steps.push(step);
        }

        // Per-position loss and dL/dlogits under the requested regime.
        let mut state = grammar.init_state();
        let mut loss = 0.0;
        let mut dzs: Vec<Vec<f64>> = Vec::with_capacity(tgt.len());
        for (t, step) in steps.iter().enumerate() {
            let y = tgt[t];
            match mode {
                TrainMode::Standard => {
                    loss += cross_entropy(&step.logits, y)?;
                    dzs.push(grad_ce(&step.logits, y)?);
                }
                TrainMode::GrammarForced => {
                    let valid = grammar.valid_tokens(&state);
                    let check = |e: LossError| match e {
                        LossError::TargetNotValid { .. } => {
                            ModelError::TargetNotValid { index, pos: t }
                        }
                        other => ModelError::Loss(other),
                    };
                    loss += forced_cross_entropy(&step.logits, y, valid).map_err(check)?;
                    dzs.push(grad_forced_ce(&step.logits, y, valid).map_err(check)?);
                }
            }
            state = grammar
                .update(&state, vocab.token(tgt[t]))
                .map_err(|_| ModelError::TargetNotValid { index, pos: t })?;
        }

        // Backward.
        let t = &self.theta;
        let mut grad = vec![0.0; off.total];
        let mut dh_enc: Vec<Vec<f64>> = vec![vec![0.0; dh]; enc.steps.len()];
        let mut d_next = vec![0.0; dh]; // gradient flowing into d_hiddens[t+1]
        for (idx, step) in steps.iter().enumerate().rev() {
            let dz = &dzs[idx];
            let mut dd = std::mem::take(&mut d_next);
            let mut dctx = vec![0.0; dh];
            for (v, &dzv) in dz.iter().enumerate() {
                if dzv == 0.0 {
                    continue;
                }
                grad[off.b_out + v] += dzv;
                for (a, &oa) in step.o.iter().enumerate() {
                    grad[off.w_out + v * dh + a] += dzv * oa;
                    let w = t[off.w_out + v * dh + a];
                    dd[a] += w * dzv;
                    dctx[a] += w * dzv;
                }
            }
            // Attention backward.
            let dalpha: Vec<f64> = enc
                .steps
                .iter()
                .map(|s| s.h.iter().zip(&dctx).map(|(h, d)| h * d).sum())
                .collect();
            for (i, s) in enc.steps.iter().enumerate() {
                for (a, _) in s.h.iter().enumerate() {
                    dh_enc[i][a] += step.alpha[i] * dctx[a];
                }
            }
            let dot: f64 = step.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
            let d_state = &step.cell.h;
            // W_att^T d, shared across encoder positions this step.
            let mut wta = vec![0.0; dh];
            for a in 0..dh {
                for b in 0..dh {
                    wta[b] += t[off.w_att + a * dh + b] * d_state[a];
                }
            }
            for (i, s) in enc.steps.iter().enumerate() {
                let ds = step.alpha[i] * (dalpha[i] - dot);
                if ds == 0.0 {
                    continue;
                }
                for a in 0..dh {
                    dd[a] += ds * enc.ghat[i][a];
                    let dg = ds * d_state[a];
                    for (b, &hb) in s.h.iter().enumerate() {
                        grad[off.w_att + a * dh + b] += dg * hb;
                    }
                }
                for (b, &w) in wta.iter().enumerate() {
                    dh_enc[i][b] += ds * w;
                }
            }
            // Through the decoder cell into its input embedding and the
            // previous decoder state.
            let x = self.emb(off.e_tgt, step.input).to_vec();
            let h_prev = &d_hiddens[idx];
            let mut dx = vec![0.0; x.len()];
            let mut dh_prev = vec![0.0; dh];
            self.gru_backward(&off.dec, &x, h_prev, &step.cell, &dd, &mut grad, &mut dx, &mut dh_prev);
            let de = self.dims.d_emb;
            for (j, &dxj) in dx.iter().enumerate() {
                grad[off.e_tgt + step.input * de + j] += dxj;
            }
            d_next = dh_prev;
        }
        // The decoder's initial hidden state is the last encoder state.
        for (a, &g) in d_next.iter().enumerate() {
            dh_enc[enc.steps.len() - 1][a] += g;
        }
        // Encoder backward, last step first.
        let mut zero = vec![0.0; dh];
        for idx in (0..enc.steps.len()).rev() {
            let x = self.emb(off.e_src, example.src[idx]).to_vec();
            let h_prev = if idx == 0 {
                zero.clone()
            } else {
                enc.steps[idx - 1].h.clone()
            };
            let dh_out = std::mem::take(&mut dh_enc[idx]);
            let mut dx = vec![0.0; x.len()];
            let mut dh_prev = vec![0.0; dh];
            self.gru_backward(
                &off.enc,
                &x,
                &h_prev,
                &enc.steps[idx],
                &dh_out,
                &mut grad,
                &mut dx,
                &mut dh_prev,
            );
            let de = self.dims.d_emb;
            for (j, &dxj) in dx.iter().enumerate() {
                grad[off.e_src + example.src[idx] * de + j] += dxj;
            }
            if idx > 0 {
                for (a, &g) in dh_prev.iter().enumerate() {
                    dh_enc[idx - 1][a] += g;
                }
            } else {
                zero = dh_prev; // h_{-1} is a constant; gradient discarded
                zero.fill(0.0);
            }
        }
        Ok((grad, loss))
    }

    /// Batch-mean loss and gradient: per-example gradients (parallel when
    /// the `parallel` feature is on) reduced in index order, then scaled by
    /// 1/batch — deterministic for a fixed batch regardless of threads.
    pub fn backward(
        &self,
        batch: &[TrainExample],
        mode: TrainMode,
        grammar: &Grammar,
    ) -> Result<(GradientBundle, f64), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Loss(LossError::EmptyBatch));
        }
        let per: Vec<Result<(GradientBundle, f64), ModelError>> = par::map(batch, |ex| {
            // Index recovered below; per-example errors carry it.
            self.example_gradient(ex, mode, grammar, 0)
        });
        let mut grad = vec![0.0; self.dims.param_count()];
        let mut loss = 0.0;
        for (i, item) in per.into_iter().enumerate() {
            let (g, l) = item.map_err(|e| match e {
                ModelError::UnparseableTarget { .. } => ModelError::UnparseableTarget { index: i },
                ModelError::TargetNotValid { pos, .. } => ModelError::TargetNotValid { index: i, pos },
                other => other,
            })?;
            for (acc, x) in grad.iter_mut().zip(&g) {
                *acc += x;
            }
            loss += l;
        }
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grad {
            *g *= inv;
        }
        Ok((grad, loss * inv))
    }

    /// Constrained or unconstrained greedy decode of one source sequence,
    /// returning emitted token ids (EOS last when it terminates).
    pub fn decode_tokens(
        &self,
        src: &[TokenId],
        grammar: &Grammar,
        constrained: bool,
        max_len: usize,
    ) -> Result<Vec<TokenId>, ModelError> {
        let enc = self.encode(src)?;
        let eos = grammar.vocab().eos_id();
        let mut d = enc.steps.last().expect("nonempty src").h.clone();
        let mut fed = 0usize;
        let out = greedy_decode(
            |prefix: &[TokenId]| {
                debug_assert_eq!(prefix.len(), fed);
                let input = if prefix.is_empty() { eos } else { prefix[prefix.len() - 1] };
                let step = self.decode_step(&enc, input, &d);
                d = step.cell.h.clone();
                fed += 1;
                step.logits
            },
            grammar,
            max_len,
            constrained,
        )?;
        Ok(out)
    }

    /// Decode and parse. Constrained mode always yields a formula; in
    /// unconstrained mode a non-parsing output is reported as such.
    pub fn translate(
        &self,
        src: &[TokenId],
        grammar: &Grammar,
        constrained: bool,
        max_len: usize,
    ) -> Result<Formula, ModelError> {
        let ids = self.decode_tokens(src, grammar, constrained, max_len)?;
        let vocab = grammar.vocab();
        let eos = vocab.eos_id();
        let surface: Vec<SurfaceToken> = ids
            .iter()
            .take_while(|&&id| id != eos)
            .map(|&id| vocab.token(id))
            .collect();
        match parse_tokens(&surface) {
            Ok(f) => Ok(f),
            Err(e) if constrained => Err(ModelError::InvariantViolated(format!(
                "accepted sequence failed to parse: {e}"
            ))),
            Err(e) => Err(ModelError::OutputUnparseable(e)),
        }
    }
}

struct GruCache {
    r: Vec<f64>,
    u: Vec<f64>,
    k: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

struct Encoding {
    steps: Vec<GruCache>,
    ghat: Vec<Vec<f64>>,
}

struct DecStep {
    input: TokenId,
    cell: GruCache,
    alpha: Vec<f64>,
    o: Vec<f64>,
    logits: Vec<f64>,
}

/// Outcome of a training run: final parameters plus the per-step batch loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_curve: Vec<f64>,
}

/// Plain-SGD training loop, deterministic for a fixed config: seeded
/// initialization, seeded per-epoch shuffle, fixed-order batch reduction.
/// Loss per step is the batch-mean of per-sequence sums over positions.
pub fn train(
    pairs: &[TrainExample],
    src_vocab_size: usize,
    cfg: &TrainConfig,
    grammar: &Grammar,
) -> Result<TrainOutcome, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::Loss(LossError::EmptyBatch));
    }
    let dims = ModelDims {
        src_vocab: src_vocab_size,
        vocab: grammar.vocab().size(),
        d_emb: cfg.d_emb,
        d_hidden: cfg.d_hidden,
        max_len: cfg.max_len,
    };
    let mut params = ModelParams::init(dims, cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut curve = Vec::new();
    let batch = cfg.batch_size.max(1);
    for _epoch in 0..cfg.epochs {
        // Fisher-Yates off the dedicated stream.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for chunk in order.chunks(batch) {
            let examples: Vec<TrainExample> =
                chunk.iter().map(|&i| pairs[i].clone()).collect();
            let (grad, loss) = params.backward(&examples, cfg.mode, grammar)?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let scale = if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
                cfg.clip_norm / norm
            } else {
                1.0
            };
            for (p, g) in params.theta.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * scale * g;
            }
            curve.push(loss);
        }
    }
    Ok(TrainOutcome { params, loss_curve: curve })
}

/// Source-side word vocabulary: lowercased words in first-appearance order,
/// with a reserved unknown-word id 0 so unseen domains still encode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrcVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub const UNK_TOKEN: &str = "<unk>";

impl SrcVocab {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a str>) -> SrcVocab {
        let mut v = SrcVocab::from_tokens(vec![UNK_TOKEN.to_string()]);
        for s in sentences {
            for w in s.split_whitespace() {
                let w = w.to_lowercase();
                if !v.index.contains_key(&w) {
                    v.index.insert(w.clone(), v.tokens.len());
                    v.tokens.push(w);
                }
            }
        }
        v
    }

    pub fn from_tokens(tokens: Vec<String>) -> SrcVocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        SrcVocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> TokenId {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn encode(&self, sentence: &str) -> Vec<TokenId> {
        sentence.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// FNV-1a over the token list; stable across runs and platforms.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for tok in &self.tokens {
            for b in tok.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        h
    }
}

/// On-disk checkpoint: versioned JSON header plus the flat parameter array.
/// f64 values use shortest-round-trip encoding, so save/load is bit-exact.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    dims: ModelDims,
    seed: u64,
    max_props: u32,
    src_tokens: Vec<String>,
    vocab_hash: u64,
    params: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    src_vocab: &SrcVocab,
    max_props: u32,
) -> Result<(), ModelError> {
    let cp = Checkpoint {
        schema_version: CHECKPOINT_VERSION,
        dims: params.dims,
        seed: params.seed,
        max_props,
        src_tokens: src_vocab.tokens().to_vec(),
        vocab_hash: src_vocab.hash(),
        params: params.theta.clone(),
    };
    let json = serde_json::to_string(&cp).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, SrcVocab, u32), ModelError> {
    let raw = std::fs::read_to_string(path)?;
    let cp: Checkpoint =
        serde_json::from_str(&raw).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if cp.schema_version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported schema_version {}",
            cp.schema_version
        )));
    }
    if cp.params.len() != cp.dims.param_count() {
        return Err(ModelError::Checkpoint(format!(
            "parameter count {} does not match dims (want {})",
            cp.params.len(),
            cp.dims.param_count()
        )));
    }
    let vocab = SrcVocab::from_tokens(cp.src_tokens);
    if vocab.hash() != cp.vocab_hash {
        return Err(ModelError::Checkpoint(
            "vocabulary hash mismatch".to_string(),
        ));
    }
    if vocab.len() != cp.dims.src_vocab {
        return Err(ModelError::Checkpoint(
            "vocabulary length does not match dims".to_string(),
        ));
    }
    Ok((
        ModelParams::from_theta(cp.dims, cp.seed, cp.params),
        vocab,
        cp.max_props,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::Grammar;
    use crate::ltl::{parse_formula, Notation, Vocab};

    fn tiny_dims(src_vocab: usize) -> ModelDims {
        ModelDims {
            src_vocab,
            vocab: 16,
            d_emb: 4,
            d_hidden: 6,
            max_len: 32,
        }
    }

    fn grammar() -> Grammar {
        Grammar::new(Vocab::new(5))
    }

    fn pairs(g: &Grammar, specs: &[(&[TokenId], &str)]) -> Vec<TrainExample> {
        specs
            .iter()
            .map(|(src, tl)| TrainExample {
                src: src.to_vec(),
                tgt: parse_formula(g.vocab(), tl).unwrap().target_ids(g.vocab()),
            })
            .collect()
    }

    #[test]
    fn parameter_count_matches_the_closed_form() {
        let d = ModelDims {
            src_vocab: 50,
            vocab: 16,
            d_emb: 32,
            d_hidden: 64,
            max_len: 64,
        };
        assert_eq!(d.param_count(), 44_496);
        assert_eq!(ModelParams::init(d, 0).theta().len(), 44_496);
    }

    #[test]
    fn init_is_seed_deterministic_and_seed_sensitive() {
        let d = tiny_dims(8);
        let a = ModelParams::init(d, 42);
        let b = ModelParams::init(d, 42);
        assert_eq!(a.theta(), b.theta());
        let c = ModelParams::init(d, 43);
        let differing = a
            .theta()
            .iter()
            .zip(c.theta())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing as f64 >= 0.99 * a.theta().len() as f64);
    }

    #[test]
    fn forward_shapes_and_preconditions() {
        let g = grammar();
        let p = ModelParams::init(tiny_dims(8), 1);
        let eos = g.vocab().eos_id();
        let rows = p.forward(&[1, 2, 3], &[0, eos], eos).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].len(), 16);
        assert!(matches!(
            p.forward(&[], &[0], eos),
            Err(ModelError::EmptySource)
        ));
        let long = vec![0; 33];
        assert!(matches!(
            p.forward(&[1], &long, eos),
            Err(ModelError::LengthExceeded)
        ));
    }

    #[test]
    fn attention_sees_the_whole_source() {
        // Permuting source tokens must change the logits somewhere: the
        // context vector is a weighted sum over all encoder states.
        let g = grammar();
        let p = ModelParams::init(tiny_dims(8), 5);
        let eos = g.vocab().eos_id();
        let a = p.forward(&[1, 2, 3, 4], &[0], eos).unwrap();
        let b = p.forward(&[4, 3, 2, 1], &[0], eos).unwrap();
        assert!(a[0].iter().zip(&b[0]).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    fn rel_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        let scale = numeric
            .iter()
            .fold(0.0f64, |m, &x| m.max(x.abs()))
            .max(1e-300);
        analytic
            .iter()
            .zip(numeric)
            .fold(0.0f64, |m, (&a, &n)| m.max((a - n).abs()))
            / scale
    }

    #[test]
    fn backward_matches_central_finite_differences_in_both_modes() {
        let g = grammar();
        let batch = pairs(
            &g,
            &[
                (&[1, 2, 3, 4], "◇ ( prop_1 ∧ prop_2 )"),
                (&[2, 5, 1], "□ ¬ prop_3"),
            ],
        );
        for mode in [TrainMode::Standard, TrainMode::GrammarForced] {
            let params = ModelParams::init(tiny_dims(8), 9);
            let (analytic, _) = params.backward(&batch, mode, &g).unwrap();
            let h = 1e-5;
            let numeric: Vec<f64> = (0..params.theta().len())
                .map(|k| {
                    let mut plus = params.clone();
                    plus.theta[k] += h;
                    let mut minus = params.clone();
                    minus.theta[k] -= h;
                    let (_, lp) = plus.backward(&batch, mode, &g).unwrap();
                    let (_, lm) = minus.backward(&batch, mode, &g).unwrap();
                    (lp - lm) / (2.0 * h)
                })
                .collect();
            let err = rel_gradient_error(&analytic, &numeric);
            assert!(err <= 1e-6, "mode {mode:?}: rel err {err}");
        }
    }

    #[test]
    fn forced_backward_leaves_always_invalid_token_columns_untouched() {
        // Target "prop_1 <eos>": position 0 admits formula starters,
        // position 1 admits only EOS. A binary operator is invalid at both,
        // so under grammar forcing its output row gets exactly zero
        // gradient; standard training leaks signal into it.
        let g = grammar();
        let batch = pairs(&g, &[(&[1, 2], "prop_1")]);
        let params = ModelParams::init(tiny_dims(4), 3);
        let and_id = g.vocab().id(SurfaceToken::And);
        let off = params.offsets();
        let dh = params.dims.d_hidden;
        let (forced, _) = params.backward(&batch, TrainMode::GrammarForced, &g).unwrap();
        let (standard, _) = params.backward(&batch, TrainMode::Standard, &g).unwrap();
        let row = |grad: &[f64]| -> Vec<f64> {
            let mut r = grad[off.w_out + and_id * dh..off.w_out + (and_id + 1) * dh].to_vec();
            r.push(grad[off.b_out + and_id]);
            r
        };
        assert!(row(&forced).iter().all(|&x| x.to_bits() == 0.0f64.to_bits()));
        assert!(row(&standard).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn step_zero_forced_loss_never_exceeds_standard() {
        let g = grammar();
        let batch = pairs(
            &g,
            &[
                (&[1, 2, 3], "( prop_1 ∪ prop_2 )"),
                (&[3, 1], "◇ prop_5"),
                (&[2, 2, 4, 5], "¬ ( prop_1 ∨ ◇ prop_3 )"),
            ],
        );
        for seed in 0..5 {
            let params = ModelParams::init(tiny_dims(8), seed);
            let (_, forced) = params.backward(&batch, TrainMode::GrammarForced, &g).unwrap();
            let (_, standard) = params.backward(&batch, TrainMode::Standard, &g).unwrap();
            assert!(forced <= standard);
        }
    }

    #[test]
    fn batch_gradient_is_the_mean_of_example_gradients() {
        let g = grammar();
        let batch = pairs(&g, &[(&[1, 2], "prop_1"), (&[3], "◇ prop_2")]);
        let params = ModelParams::init(tiny_dims(4), 7);
        let (whole, loss) = params.backward(&batch, TrainMode::Standard, &g).unwrap();
        let (g0, l0) = params
            .example_gradient(&batch[0], TrainMode::Standard, &g, 0)
            .unwrap();
        let (g1, l1) = params
            .example_gradient(&batch[1], TrainMode::Standard, &g, 1)
            .unwrap();
        for (w, (a, b)) in whole.iter().zip(g0.iter().zip(&g1)) {
            assert!((w - (a + b) / 2.0).abs() <= 1e-15);
        }
        assert!((loss - (l0 + l1) / 2.0).abs() <= 1e-15);
    }

    #[test]
    fn sequential_and_dispatched_maps_agree_bitwise_on_gradients() {
        let g = grammar();
        let batch = pairs(
            &g,
            &[
                (&[1, 2, 3], "( prop_1 ∧ prop_2 )"),
                (&[2, 1], "□ prop_4"),
                (&[4, 4, 4], "¬ prop_1"),
            ],
        );
        let params = ModelParams::init(tiny_dims(8), 13);
        let dispatched: Vec<(GradientBundle, f64)> = crate::par::map(&batch, |ex| {
            params
                .example_gradient(ex, TrainMode::GrammarForced, &g, 0)
                .unwrap()
        });
        let sequential: Vec<(GradientBundle, f64)> = crate::par::map_seq(&batch, |ex| {
            params
                .example_gradient(ex, TrainMode::GrammarForced, &g, 0)
                .unwrap()
        });
        for ((ga, la), (gb, lb)) in dispatched.iter().zip(&sequential) {
            assert_eq!(la.to_bits(), lb.to_bits());
            for (a, b) in ga.iter().zip(gb) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_malformed_targets() {
        let g = grammar();
        let params = ModelParams::init(tiny_dims(4), 1);
        let eos = g.vocab().eos_id();
        // No EOS at the end.
        let bad = TrainExample { src: vec![1], tgt: vec![0, 1] };
        assert!(matches!(
            params.backward(&[bad], TrainMode::Standard, &g),
            Err(ModelError::UnparseableTarget { index: 0 })
        ));
        // Parses only up to the operator: "prop_1 prop_2 <eos>".
        let bad = TrainExample { src: vec![1], tgt: vec![0, 1, eos] };
        assert!(matches!(
            params.backward(&[bad], TrainMode::Standard, &g),
            Err(ModelError::UnparseableTarget { index: 0 })
        ));
    }

    #[test]
    fn memorizes_ten_pairs_and_reproduces_them_exactly() {
        let g = grammar();
        let specs: Vec<(Vec<TokenId>, &str)> = vec![
            (vec![1, 2], "◇ prop_1"),
            (vec![2, 3], "□ prop_2"),
            (vec![3, 4], "( prop_1 ∧ prop_2 )"),
            (vec![4, 5], "( prop_3 ∪ prop_1 )"),
            (vec![5, 6], "¬ prop_4"),
            (vec![6, 7], "◇ ( prop_1 ∧ ◇ prop_2 )"),
            (vec![7, 1], "○ prop_5"),
            (vec![1, 3, 5], "( prop_2 ⇒ prop_3 )"),
            (vec![2, 4, 6], "□ ◇ prop_1"),
            (vec![3, 5, 7], "( prop_5 ∨ prop_2 )"),
        ];
        let training: Vec<TrainExample> = specs
            .iter()
            .map(|(src, tl)| TrainExample {
                src: src.clone(),
                tgt: parse_formula(g.vocab(), tl).unwrap().target_ids(g.vocab()),
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.25,
            epochs: 50, // 10 pairs, full batch: 50 steps x 10 = 500 updates
            batch_size: 10,
            seed: 4,
            mode: TrainMode::GrammarForced,
            d_emb: 16,
            d_hidden: 24,
            max_len: 32,
            clip_norm: 5.0,
        };
        let out = train(&training, 8, &cfg, &g).unwrap();
        assert_eq!(out.loss_curve.len(), 50);
        for ex in &training {
            let decoded = out
                .params
                .decode_tokens(&ex.src, &g, true, 32)
                .unwrap();
            assert_eq!(decoded, ex.tgt);
        }
        // The curve trends down: the last step is well under the first.
        assert!(out.loss_curve.last().unwrap() < &(out.loss_curve[0] * 0.2));
    }

    #[test]
    fn constrained_translation_from_random_parameters_always_parses() {
        let g = grammar();
        let params = ModelParams::init(
            ModelDims { src_vocab: 12, vocab: 16, d_emb: 8, d_hidden: 10, max_len: 64 },
            99,
        );
        for s in 0..20usize {
            let src = vec![(s % 11) + 1, ((s * 3) % 11) + 1];
            let f = params.translate(&src, &g, true, 64).unwrap();
            assert!(!f.render(Notation::Unicode).is_empty());
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("model.json");
        let vocab = SrcVocab::build(["go to the red room", "push the box"]);
        let dims = ModelDims {
            src_vocab: vocab.len(),
            vocab: 16,
            d_emb: 4,
            d_hidden: 6,
            max_len: 32,
        };
        let params = ModelParams::init(dims, 21);
        save_checkpoint(&path, &params, &vocab, 5).unwrap();
        let (loaded, loaded_vocab, max_props) = load_checkpoint(&path).unwrap();
        assert_eq!(max_props, 5);
        assert_eq!(loaded_vocab, vocab);
        assert_eq!(loaded.theta().len(), params.theta().len());
        for (a, b) in loaded.theta().iter().zip(params.theta()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Tampered vocabulary is caught by the hash.
        let raw = std::fs::read_to_string(&path).unwrap();
        let tampered = raw.replace("\"red\"", "\"blue\"");
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::Checkpoint(_))
        ));
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = SrcVocab::build(["Go to the Red room"]);
        assert_eq!(v.id("go"), v.id("Go"));
        assert_eq!(v.id("never-seen"), 0);
        assert_eq!(v.tokens()[0], UNK_TOKEN);
        assert_eq!(v.encode("red room zzz").last(), Some(&0));
    }
}
