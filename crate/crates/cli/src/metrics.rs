//! Evaluation and experiment runners shared by the CLI verbs and the
//! property suite: corpus-to-pairs conversion, batched exact-match
//! evaluation, the two-regime training comparison, and the
//! held-one-domain-out transfer grid.

use std::collections::BTreeMap;

use tlforce_core::datagen::{gen_corpus, GenConfig};
use tlforce_core::grammar::Grammar;
use tlforce_core::lifting::LiftedExample;
use tlforce_core::loss::grad_second_moment;
use tlforce_core::ltl::{parse_formula, parse_tokens, TokenId};
use tlforce_core::model::{train, ModelParams, SrcVocab, TrainConfig, TrainExample, TrainMode};
use tlforce_core::par;

use crate::report::{ComparisonRun, EvalOutcome, OodRow};
use crate::CliError;

/// Encode a corpus into (source ids, target ids) pairs against a fixed
/// source vocabulary and grammar.
pub fn training_pairs(
    corpus: &[LiftedExample],
    src_vocab: &SrcVocab,
    grammar: &Grammar,
) -> Result<Vec<TrainExample>, CliError> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let formula = parse_formula(grammar.vocab(), &ex.lifted_tl).map_err(|e| {
                CliError::Data(format!("example {}: lifted_tl does not parse: {e}", i + 1))
            })?;
            Ok(TrainExample {
                src: src_vocab.encode(&ex.lifted_nl),
                tgt: formula.target_ids(grammar.vocab()),
            })
        })
        .collect()
}

/// Decode every example and score exact sequence match plus
/// well-formedness. Decoding runs through the batch map, so it is parallel
/// under the `parallel` feature and yields identical results without it.
pub fn evaluate(
    params: &ModelParams,
    corpus: &[LiftedExample],
    src_vocab: &SrcVocab,
    grammar: &Grammar,
    constrained: bool,
    max_len: usize,
) -> Result<EvalOutcome, CliError> {
    let pairs = training_pairs(corpus, src_vocab, grammar)?;
    let eos = grammar.vocab().eos_id();
    let decoded: Vec<Result<Vec<TokenId>, String>> = par::map(&pairs, |pair| {
        params
            .decode_tokens(&pair.src, grammar, constrained, max_len)
            .map_err(|e| e.to_string())
    });
    let mut out = EvalOutcome {
        count: corpus.len(),
        exact: 0,
        well_formed: 0,
        per_domain: BTreeMap::new(),
    };
    for ((ex, pair), got) in corpus.iter().zip(&pairs).zip(decoded) {
        let got = got.map_err(CliError::Internal)?;
        let exact = got == pair.tgt;
        let well_formed = got.last() == Some(&eos) && !got[..got.len() - 1].contains(&eos) && {
            let surface: Vec<_> = got[..got.len() - 1]
                .iter()
                .map(|&id| grammar.vocab().token(id))
                .collect();
            parse_tokens(&surface).is_ok()
        };
        let slot = out.per_domain.entry(ex.domain.clone()).or_default();
        slot.count += 1;
        if exact {
            slot.exact += 1;
            out.exact += 1;
        }
        if well_formed {
            out.well_formed += 1;
        }
    }
    Ok(out)
}

/// Deterministic split: every `k`-th example is held out.
pub fn split_holdout(corpus: &[LiftedExample], k: usize) -> (Vec<LiftedExample>, Vec<LiftedExample>) {
    let mut train_set = Vec::new();
    let mut held = Vec::new();
    for (i, ex) in corpus.iter().enumerate() {
        if i % k == 0 {
            held.push(ex.clone());
        } else {
            train_set.push(ex.clone());
        }
    }
    (train_set, held)
}

/// Decoding regime that mirrors each training regime: grammar-forced
/// training decodes with the constraint, standard training without.
pub fn mode_matched_constrained(mode: TrainMode) -> bool {
    matches!(mode, TrainMode::GrammarForced)
}

/// Train both regimes from shared initializations across the given seeds
/// and evaluate on the held-out split. The per-(seed, mode) records carry
/// everything the ordering claims need: the step-0 loss under the shared
/// first batch, the final held-out exact match, and the loss curves.
pub fn run_training_comparison(
    corpus: &[LiftedExample],
    seeds: &[u64],
    base: &TrainConfig,
    grammar: &Grammar,
) -> Result<Vec<ComparisonRun>, CliError> {
    let (train_set, held) = split_holdout(corpus, 5);
    let src_vocab = SrcVocab::build(train_set.iter().map(|e| e.lifted_nl.as_str()));
    let pairs = training_pairs(&train_set, &src_vocab, grammar)?;
    let mut runs = Vec::new();
    for &seed in seeds {
        for mode in [TrainMode::GrammarForced, TrainMode::Standard] {
            let cfg = TrainConfig { seed, mode, ..*base };
            let outcome = train(&pairs, src_vocab.len(), &cfg, grammar).map_err(CliError::from)?;
            // Mean squared per-example gradient norm at initialization,
            // over the first up-to-32 training pairs.
            let init = ModelParams::init(*outcome.params.dims(), seed);
            let probe = &pairs[..pairs.len().min(32)];
            let grads: Vec<_> = par::map(probe, |p| {
                init.example_gradient(p, mode, grammar, 0)
                    .map(|(g, _)| g)
                    .map_err(|e| e.to_string())
            });
            let grads: Vec<_> = grads
                .into_iter()
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::Data)?;
            let second_moment = grad_second_moment(&grads).map_err(|e| CliError::Data(e.to_string()))?;
            let eval = evaluate(
                &outcome.params,
                &held,
                &src_vocab,
                grammar,
                mode_matched_constrained(mode),
                cfg.max_len,
            )?;
            runs.push(ComparisonRun {
                mode,
                seed,
                step0_loss: outcome.loss_curve[0],
                final_loss: *outcome.loss_curve.last().unwrap(),
                heldout_exact_match: eval.exact_match_rate(),
                grad_second_moment_at_init: second_moment,
                loss_curve: outcome.loss_curve,
            });
        }
    }
    Ok(runs)
}

pub const DOMAIN_NAMES: [&str; 3] = ["blocks", "grid", "robot"];

/// Generate one corpus per domain with a shared shape.
pub fn per_domain_corpora(
    seed: u64,
    count: usize,
    max_depth: u32,
) -> Result<BTreeMap<String, Vec<LiftedExample>>, CliError> {
    let mut out = BTreeMap::new();
    for (i, name) in DOMAIN_NAMES.iter().enumerate() {
        let cfg = GenConfig {
            seed: seed + i as u64,
            count,
            max_depth,
            domain: (*name).to_string(),
            ..GenConfig::default()
        };
        out.insert((*name).to_string(), gen_corpus(&cfg)?);
    }
    Ok(out)
}

/// The held-one-domain-out grid: for every domain, train both regimes on
/// the other two and evaluate exact match on the held-out domain.
pub fn run_ood_grid(
    corpora: &BTreeMap<String, Vec<LiftedExample>>,
    seeds: &[u64],
    base: &TrainConfig,
    grammar: &Grammar,
) -> Result<Vec<OodRow>, CliError> {
    let mut rows = Vec::new();
    for heldout in DOMAIN_NAMES {
        let train_domains: Vec<String> = DOMAIN_NAMES
            .iter()
            .filter(|d| **d != heldout)
            .map(|d| (*d).to_string())
            .collect();
        let mut train_corpus = Vec::new();
        for d in &train_domains {
            train_corpus.extend(corpora[d].iter().cloned());
        }
        // Interleave the two domains so every batch mixes them.
        let half = train_corpus.len() / 2;
        let mut interleaved = Vec::with_capacity(train_corpus.len());
        for i in 0..half {
            interleaved.push(train_corpus[i].clone());
            interleaved.push(train_corpus[half + i].clone());
        }
        interleaved.extend(train_corpus[2 * half..].iter().cloned());
        let src_vocab = SrcVocab::build(interleaved.iter().map(|e| e.lifted_nl.as_str()));
        let pairs = training_pairs(&interleaved, &src_vocab, grammar)?;
        let eval_corpus = &corpora[heldout];
        for &seed in seeds {
            for mode in [TrainMode::GrammarForced, TrainMode::Standard] {
                let cfg = TrainConfig { seed, mode, ..*base };
                let outcome = train(&pairs, src_vocab.len(), &cfg, grammar)?;
                let eval = evaluate(
                    &outcome.params,
                    eval_corpus,
                    &src_vocab,
                    grammar,
                    mode_matched_constrained(mode),
                    cfg.max_len,
                )?;
                rows.push(OodRow {
                    heldout_domain: heldout.to_string(),
                    mode,
                    seed,
                    heldout_exact_match: eval.exact_match_rate(),
                    train_domains: train_domains.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// Per held-out domain, count the seeds where the grammar-forced run's
/// exact match is at least the standard run's.
pub fn forced_wins(rows: &[OodRow]) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut by_key: BTreeMap<(String, u64, bool), f64> = BTreeMap::new();
    for row in rows {
        by_key.insert(
            (
                row.heldout_domain.clone(),
                row.seed,
                mode_matched_constrained(row.mode),
            ),
            row.heldout_exact_match,
        );
    }
    for row in rows {
        if !mode_matched_constrained(row.mode) {
            continue;
        }
        let forced = row.heldout_exact_match;
        let standard = by_key[&(row.heldout_domain.clone(), row.seed, false)];
        let slot = out.entry(row.heldout_domain.clone()).or_insert((0, 0));
        slot.1 += 1;
        if forced >= standard {
            slot.0 += 1;
        }
    }
    out
}
