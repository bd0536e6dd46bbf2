//! The property suite: ten machine-checked claims about the library, each
//! returning a pass/fail outcome with a one-line detail. The CLI's
//! `property-suite` verb prints them; the acceptance integration test
//! asserts them. Both run exactly this code.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tlforce_core::datagen::{gen_concat_corpus, gen_corpus, validate_example, GenConfig};
use tlforce_core::grammar::{Grammar, GrammarState, TokenSet};
use tlforce_core::lifting::train_tagger;
use tlforce_core::loss::{
    cross_entropy, forced_cross_entropy, grad_ce, grad_forced_ce, grad_second_moment,
};
use tlforce_core::ltl::{parse_tokens, ParseError, SurfaceToken, TokenId, Vocab};
use tlforce_core::model::{ModelDims, ModelParams, TrainConfig, TrainExample, TrainMode};
use tlforce_core::par;

use crate::metrics::{per_domain_corpora, run_ood_grid, run_training_comparison};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn fail(detail: String) -> CheckOutcome {
        CheckOutcome { pass: false, detail }
    }

    fn verdict(pass: bool, detail: String) -> CheckOutcome {
        CheckOutcome { pass, detail }
    }
}

pub struct Check {
    pub number: usize,
    pub name: &'static str,
    pub run: fn() -> CheckOutcome,
}

pub fn all_checks() -> Vec<Check> {
    vec![
        Check { number: 1, name: "constrained_decode_validity", run: check_decode_validity },
        Check { number: 2, name: "forced_loss_never_exceeds_standard", run: check_forced_le_standard },
        Check { number: 3, name: "forced_gradient_exact_zeros", run: check_zero_gradients },
        Check { number: 4, name: "gradients_match_finite_differences", run: check_gradient_exactness },
        Check { number: 5, name: "forced_gradient_second_moment", run: check_second_moment },
        Check { number: 6, name: "training_comparison_in_domain", run: check_training_comparison },
        Check { number: 7, name: "domain_transfer_grid", run: check_ood_transfer },
        Check { number: 8, name: "lifting_round_trip", run: check_lifting_round_trip },
        Check { number: 9, name: "tagger_heldout_accuracy", run: check_tagger_heldout },
        Check { number: 10, name: "grammar_parser_equivalence", run: check_grammar_parser_equivalence },
    ]
}

// -------------------------------------------------------------------------
// 1. Every constrained greedy decode from random parameters is a valid,
//    terminated formula.
// -------------------------------------------------------------------------

fn check_decode_validity() -> CheckOutcome {
    let started = Instant::now();
    let grammar = Grammar::new(Vocab::new(5));
    let vocab = grammar.vocab();
    let dims = ModelDims {
        src_vocab: 50,
        vocab: vocab.size(),
        d_emb: 32,
        d_hidden: 64,
        max_len: 64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xDEC0DE);
    let mut ok = 0usize;
    let total = 1000usize;
    for round in 0..10u64 {
        let params = ModelParams::init(dims, round + 1);
        for _ in 0..total / 10 {
            let len = rng.gen_range(3..10);
            let src: Vec<TokenId> = (0..len).map(|_| rng.gen_range(1..dims.src_vocab)).collect();
            let Ok(ids) = params.decode_tokens(&src, &grammar, true, 64) else {
                continue;
            };
            let terminated = ids.len() <= 64 && ids.last() == Some(&vocab.eos_id());
            let surface: Vec<SurfaceToken> =
                ids[..ids.len() - 1].iter().map(|&id| vocab.token(id)).collect();
            if terminated && parse_tokens(&surface).is_ok() {
                ok += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    CheckOutcome::verdict(
        ok == total && secs < 10.0,
        format!("{ok}/{total} decodes valid and terminated in {secs:.2}s (budget 10s)"),
    )
}

// -------------------------------------------------------------------------
// 2 + 3. Logit-level ordering and exact zero gradients over random triples.
// -------------------------------------------------------------------------

fn random_triples(n: usize, seed: u64) -> Vec<(Vec<f64>, TokenSet, TokenId)> {
    random_triples_in(n, seed, 10.0)
}

/// Triples with logits in +-lim. The ordering and exact-zero checks use a
/// wide range to cover saturated softmaxes; the finite-difference check
/// keeps logits moderate, because a saturated softmax drives the true
/// gradient toward zero while central differences keep an absolute noise
/// floor of about ulp(loss)/h, making a ratio of the two meaningless.
fn random_triples_in(n: usize, seed: u64, lim: f64) -> Vec<(Vec<f64>, TokenSet, TokenId)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..16).map(|_| rng.gen_range(-lim..lim)).collect();
            let mut valid = TokenSet::empty();
            for id in 0..16 {
                if rng.gen_bool(0.5) {
                    valid.insert(id);
                }
            }
            if valid.is_empty() {
                valid.insert(rng.gen_range(0..16));
            }
            let members: Vec<TokenId> = valid.iter().collect();
            let y = members[rng.gen_range(0..members.len())];
            (z, valid, y)
        })
        .collect()
}

fn check_forced_le_standard() -> CheckOutcome {
    let triples = random_triples(10_000, 0xF0CE);
    let mut order_violations = 0usize;
    let mut premask_mismatches = 0usize;
    for (z, valid, y) in &triples {
        let standard = cross_entropy(z, *y).unwrap();
        let forced = forced_cross_entropy(z, *y, *valid).unwrap();
        // A NaN on either side must count as a violation.
        let ordered = forced <= standard;
        if !ordered {
            order_violations += 1;
        }
        // Pre-masking the invalid logits makes the two losses the same
        // computation, down to the bit.
        let masked: Vec<f64> = z
            .iter()
            .enumerate()
            .map(|(i, &v)| if valid.contains(i) { v } else { f64::NEG_INFINITY })
            .collect();
        let standard_on_masked = cross_entropy(&masked, *y).unwrap();
        if standard_on_masked.to_bits() != forced.to_bits() {
            premask_mismatches += 1;
        }
    }
    CheckOutcome::verdict(
        order_violations == 0 && premask_mismatches == 0,
        format!(
            "{} triples: {order_violations} ordering violations, {premask_mismatches} pre-mask bit mismatches",
            triples.len()
        ),
    )
}

fn check_zero_gradients() -> CheckOutcome {
    let triples = random_triples(10_000, 0x2E40);
    let mut nonzero = 0usize;
    for (z, valid, y) in &triples {
        let g = grad_forced_ce(z, *y, *valid).unwrap();
        for (i, &gi) in g.iter().enumerate() {
            if !valid.contains(i) && gi.to_bits() != 0.0f64.to_bits() {
                nonzero += 1;
            }
        }
    }
    CheckOutcome::verdict(
        nonzero == 0,
        format!(
            "{} triples: {nonzero} out-of-set coordinates not bitwise +0.0",
            triples.len()
        ),
    )
}

// -------------------------------------------------------------------------
// 4. Analytic gradients against central finite differences.
// -------------------------------------------------------------------------

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

fn check_gradient_exactness() -> CheckOutcome {
    let started = Instant::now();
    let h = 1e-5;

    // Loss level, both regimes, 50 random triples.
    let mut worst_loss_level = 0.0f64;
    for (z, valid, y) in random_triples_in(50, 0x907A, 3.0) {
        for forced in [false, true] {
            let loss =
                |z: &[f64]| -> f64 {
                    if forced {
                        forced_cross_entropy(z, y, valid).unwrap()
                    } else {
                        cross_entropy(z, y).unwrap()
                    }
                };
            let analytic = if forced {
                grad_forced_ce(&z, y, valid).unwrap()
            } else {
                grad_ce(&z, y).unwrap()
            };
            let numeric: Vec<f64> = (0..z.len())
                .map(|k| {
                    let mut plus = z.clone();
                    plus[k] += h;
                    let mut minus = z.clone();
                    minus[k] -= h;
                    (loss(&plus) - loss(&minus)) / (2.0 * h)
                })
                .collect();
            worst_loss_level = worst_loss_level.max(rel_gradient_error(&analytic, &numeric));
        }
    }

    // Full model on a tiny configuration, both regimes.
    let grammar = Grammar::new(Vocab::new(5));
    let vocab = grammar.vocab();
    let make = |tl: &str, src: Vec<TokenId>| TrainExample {
        src,
        tgt: tlforce_core::ltl::parse_formula(vocab, tl).unwrap().target_ids(vocab),
    };
    let batch = vec![
        make("◇ ( prop_1 ∧ prop_2 )", vec![1, 2, 3, 4]),
        make("□ ¬ prop_3", vec![2, 5, 1]),
    ];
    let dims = ModelDims {
        src_vocab: 8,
        vocab: vocab.size(),
        d_emb: 4,
        d_hidden: 6,
        max_len: 32,
    };
    let mut worst_model_level = 0.0f64;
    for mode in [TrainMode::Standard, TrainMode::GrammarForced] {
        let params = ModelParams::init(dims, 17);
        let (analytic, _) = params.backward(&batch, mode, &grammar).unwrap();
        let theta = params.theta().to_vec();
        let numeric: Vec<f64> = (0..theta.len())
            .map(|k| {
                let mut up = theta.clone();
                up[k] += h;
                let mut down = theta.clone();
                down[k] -= h;
                let pu = ModelParams::from_theta(dims, 17, up);
                let pd = ModelParams::from_theta(dims, 17, down);
                let (_, lu) = pu.backward(&batch, mode, &grammar).unwrap();
                let (_, ld) = pd.backward(&batch, mode, &grammar).unwrap();
                (lu - ld) / (2.0 * h)
            })
            .collect();
        worst_model_level = worst_model_level.max(rel_gradient_error(&analytic, &numeric));
    }
    let secs = started.elapsed().as_secs_f64();
    CheckOutcome::verdict(
        worst_loss_level <= 1e-8 && worst_model_level <= 1e-6 && secs < 60.0,
        format!(
            "loss-level rel err {worst_loss_level:.2e} (tol 1e-8), model rel err {worst_model_level:.2e} (tol 1e-6), {secs:.1}s"
        ),
    )
}

// -------------------------------------------------------------------------
// 5. Batch-mean squared gradient norm: forced <= standard at random
//    parameters, across parameter draws.
// -------------------------------------------------------------------------

fn check_second_moment() -> CheckOutcome {
    let grammar = Grammar::new(Vocab::new(5));
    let cfg = GenConfig { seed: 23, count: 256, ..GenConfig::default() };
    let corpus = gen_corpus(&cfg).unwrap();
    let src_vocab =
        tlforce_core::model::SrcVocab::build(corpus.iter().map(|e| e.lifted_nl.as_str()));
    let pairs = match crate::metrics::training_pairs(&corpus, &src_vocab, &grammar) {
        Ok(p) => p,
        Err(e) => return CheckOutcome::fail(format!("corpus preparation failed: {}", e.message())),
    };
    let dims = ModelDims {
        src_vocab: src_vocab.len(),
        vocab: grammar.vocab().size(),
        d_emb: 16,
        d_hidden: 24,
        max_len: 64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EC0);
    let mut draw_wins = 0usize;
    let mut batch_wins = 0usize;
    let draws = 5usize;
    let batches_per_draw = 32usize;
    for draw in 0..draws {
        let params = ModelParams::init(dims, 100 + draw as u64);
        let mut forced_sum = 0.0;
        let mut standard_sum = 0.0;
        for _ in 0..batches_per_draw {
            let batch: Vec<&TrainExample> = (0..8)
                .map(|_| &pairs[rng.gen_range(0..pairs.len())])
                .collect();
            let moment = |mode: TrainMode| -> f64 {
                let grads: Vec<_> = par::map(&batch, |ex| {
                    params.example_gradient(ex, mode, &grammar, 0).unwrap().0
                });
                grad_second_moment(&grads).unwrap()
            };
            let f = moment(TrainMode::GrammarForced);
            let s = moment(TrainMode::Standard);
            forced_sum += f;
            standard_sum += s;
            if f <= s {
                batch_wins += 1;
            }
        }
        if forced_sum <= standard_sum {
            draw_wins += 1;
        }
    }
    CheckOutcome::verdict(
        draw_wins == draws,
        format!(
            "forced <= standard in {draw_wins}/{draws} parameter draws ({batch_wins}/{} individual batches)",
            draws * batches_per_draw
        ),
    )
}

// -------------------------------------------------------------------------
// 6. In-domain training comparison: exact step-0 ordering and held-out
//    exact match across seeds.
// -------------------------------------------------------------------------

/// The comparison runs in a deliberately small model: with capacity to
/// spare, both regimes saturate and the held-out gap closes; squeezed, the
/// standard regime spends parameters modeling well-formedness that the
/// forced regime gets from the engine. The tight shared gradient clip is
/// part of the comparison: forced batch gradients carry systematically
/// smaller norms, so one identical cap slows the standard regime more.
pub fn comparison_base_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.25,
        epochs: 32,
        batch_size: 16,
        seed: 0,
        mode: TrainMode::Standard,
        d_emb: 16,
        d_hidden: 32,
        max_len: 64,
        clip_norm: 1.0,
    }
}

fn check_training_comparison() -> CheckOutcome {
    let started = Instant::now();
    let grammar = Grammar::new(Vocab::new(5));
    let cfg = GenConfig { seed: 77, count: 500, max_depth: 4, ..GenConfig::default() };
    let corpus = gen_corpus(&cfg).unwrap();
    let seeds = [1u64, 2, 3];
    let runs = match run_training_comparison(&corpus, &seeds, &comparison_base_config(), &grammar) {
        Ok(r) => r,
        Err(e) => return CheckOutcome::fail(format!("comparison failed: {}", e.message())),
    };
    let by = |seed: u64, mode: TrainMode| {
        runs.iter()
            .find(|r| r.seed == seed && r.mode == mode)
            .expect("run present")
    };
    let mut step0_ok = true;
    let mut em_wins = 0usize;
    let mut lines = Vec::new();
    for &seed in &seeds {
        let forced = by(seed, TrainMode::GrammarForced);
        let standard = by(seed, TrainMode::Standard);
        // A NaN step-0 loss must fail the ordering, so test the positive.
        let ordered = forced.step0_loss <= standard.step0_loss;
        if !ordered {
            step0_ok = false;
        }
        if forced.heldout_exact_match >= standard.heldout_exact_match {
            em_wins += 1;
        }
        lines.push(format!(
            "seed {seed}: em {:.3} vs {:.3}",
            forced.heldout_exact_match, standard.heldout_exact_match
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    CheckOutcome::verdict(
        step0_ok && em_wins >= 2 && secs < 600.0,
        format!(
            "step-0 forced<=standard: {step0_ok}; held-out wins {em_wins}/3 [{}] in {secs:.0}s (budget 600s)",
            lines.join("; ")
        ),
    )
}

// -------------------------------------------------------------------------
// 7. Held-one-domain-out transfer grid.
// -------------------------------------------------------------------------

/// Transfer is measured data-scarce (100 examples per domain) under a
/// tight, shared gradient clip. Forced batch gradients carry systematically
/// smaller norms, so the same cap slows the standard regime more — which is
/// the conditioning advantage under test, applied as one rule to both.
pub fn ood_base_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.25,
        epochs: 48,
        batch_size: 16,
        seed: 0,
        mode: TrainMode::Standard,
        d_emb: 16,
        d_hidden: 32,
        max_len: 64,
        clip_norm: 1.0,
    }
}

fn check_ood_transfer() -> CheckOutcome {
    let started = Instant::now();
    let grammar = Grammar::new(Vocab::new(5));
    let corpora = match per_domain_corpora(11, 100, 3) {
        Ok(c) => c,
        Err(e) => return CheckOutcome::fail(format!("corpora failed: {}", e.message())),
    };
    let seeds = [1u64, 2, 3];
    let grid = match run_ood_grid(&corpora, &seeds, &ood_base_config(), &grammar) {
        Ok(g) => g,
        Err(e) => return CheckOutcome::fail(format!("grid failed: {}", e.message())),
    };
    let wins = crate::metrics::forced_wins(&grid);
    let mut all_ok = true;
    let mut parts = Vec::new();
    for (domain, (won, total)) in &wins {
        if *won * 3 < *total * 2 {
            all_ok = false;
        }
        parts.push(format!("{domain} {won}/{total}"));
    }
    let secs = started.elapsed().as_secs_f64();
    CheckOutcome::verdict(
        all_ok && wins.len() == 3,
        format!("forced>=standard per held-out domain: {} in {secs:.0}s", parts.join(", ")),
    )
}

// -------------------------------------------------------------------------
// 8. Lift -> unlift round trip on singles, co-reference, and long
//    concatenated commands.
// -------------------------------------------------------------------------

fn check_lifting_round_trip() -> CheckOutcome {
    let singles = gen_corpus(&GenConfig { seed: 31, count: 700, ..GenConfig::default() }).unwrap();
    let concats = match gen_concat_corpus(32, 300, 6, 15) {
        Ok(c) => c,
        Err(e) => return CheckOutcome::fail(format!("concat generation failed: {e}")),
    };
    let mut failures = 0usize;
    let mut coref = 0usize;
    let mut min_aps = usize::MAX;
    let mut max_aps = 0usize;
    for (i, ex) in singles.iter().chain(concats.iter()).enumerate() {
        if validate_example(ex, i + 1).is_err() {
            failures += 1;
        }
        let mut mentions = 0usize;
        for (i, &cur) in ex.labels.iter().enumerate() {
            let next = ex.labels.get(i + 1).copied().unwrap_or(0);
            if cur != 0 && cur != next {
                mentions += 1;
            }
        }
        if mentions > ex.ap_map.len() {
            coref += 1;
        }
    }
    for ex in &concats {
        min_aps = min_aps.min(ex.ap_map.len());
        max_aps = max_aps.max(ex.ap_map.len());
    }
    let total = singles.len() + concats.len();
    CheckOutcome::verdict(
        failures == 0 && coref > 0 && min_aps == 6 && max_aps == 15,
        format!(
            "{total} examples round-trip with {failures} failures; {coref} with co-reference; concat propositions span {min_aps}..={max_aps}"
        ),
    )
}

// -------------------------------------------------------------------------
// 9. Tagger held-out per-sequence accuracy.
// -------------------------------------------------------------------------

fn check_tagger_heldout() -> CheckOutcome {
    let corpus = gen_corpus(&GenConfig { seed: 41, count: 400, ..GenConfig::default() }).unwrap();
    let mut train_set = Vec::new();
    let mut held = Vec::new();
    for (i, ex) in corpus.into_iter().enumerate() {
        let item = (ex.tokens, ex.labels);
        if i % 5 == 0 {
            held.push(item);
        } else {
            train_set.push(item);
        }
    }
    let tagger = train_tagger(&train_set, 8, 3);
    let correct = held
        .iter()
        .filter(|(toks, gold)| &tagger.predict_labels(toks) == gold)
        .count();
    let rate = correct as f64 / held.len() as f64;
    CheckOutcome::verdict(
        rate >= 0.95,
        format!("held-out per-sequence accuracy {correct}/{} = {rate:.4} (floor 0.95)", held.len()),
    )
}

// -------------------------------------------------------------------------
// 10. Engine acceptance and parser success agree on every sequence of
//     length <= 8.
// -------------------------------------------------------------------------

/// A sequence is parser-accepted when it is a formula followed by exactly
/// one terminating EOS.
fn parser_accepts(seq: &[SurfaceToken]) -> bool {
    let Some((last, body)) = seq.split_last() else {
        return false;
    };
    *last == SurfaceToken::Eos
        && !body.contains(&SurfaceToken::Eos)
        && parse_tokens(body).is_ok()
}

/// Appending tokens cannot repair these: an embedded EOS, a token the
/// parser rejected strictly inside the prefix, or trailing tokens after a
/// complete formula.
fn parser_dead_for_all_extensions(seq: &[SurfaceToken]) -> bool {
    if seq.contains(&SurfaceToken::Eos) {
        return true;
    }
    match parse_tokens(seq) {
        Ok(_) => false,
        Err(ParseError::TrailingTokens { .. }) => true,
        Err(ParseError::UnexpectedToken { pos }) => pos < seq.len(),
        Err(ParseError::UnknownToken { .. }) => true,
        Err(ParseError::UnbalancedParen { .. }) => false, // end-of-input: extendable
    }
}

struct Sweep<'a> {
    grammar: &'a Grammar,
    vocab: &'a Vocab,
    tokens: Vec<SurfaceToken>,
    max_len: usize,
    accepted: u64,
    visited: u64,
    pruned: u64,
    unsafe_prunes: u64,
    disagreements: u64,
    first_disagreement: Option<String>,
    spot_checks: u64,
    spot_failures: u64,
    rng: ChaCha8Rng,
}

impl<'a> Sweep<'a> {
    /// Randomly extend a dead prefix a few times and confirm both sides
    /// still reject — an empirical guard on the pruning argument.
    fn spot_check(&mut self) {
        let prefix = self.tokens.clone();
        for _ in 0..2 {
            let mut ext = prefix.clone();
            let extra = self.rng.gen_range(1..=self.max_len - prefix.len());
            for _ in 0..extra {
                let id = self.rng.gen_range(0..self.vocab.size());
                ext.push(self.vocab.token(id));
            }
            self.spot_checks += 1;
            if parser_accepts(&ext) || self.grammar.accepts(&ext) {
                self.spot_failures += 1;
            }
        }
    }

    fn walk(&mut self, state: Option<&GrammarState>) {
        for id in 0..self.vocab.size() {
            let tok = self.vocab.token(id);
            self.tokens.push(tok);
            let next = state.and_then(|s| self.grammar.update(s, tok).ok());
            let engine_accepting =
                next.as_ref().is_some_and(|s| self.grammar.is_accepting(s));
            // Cheap short-circuit: only EOS-terminated sequences can be
            // accepted by either side.
            let parser_accepting =
                tok == SurfaceToken::Eos && parser_accepts(&self.tokens);
            self.visited += 1;
            if engine_accepting {
                self.accepted += 1;
            }
            if engine_accepting != parser_accepting {
                self.disagreements += 1;
                if self.first_disagreement.is_none() {
                    let spelled: Vec<String> = self
                        .tokens
                        .iter()
                        .map(|t| t.spelling(tlforce_core::ltl::Notation::Ascii))
                        .collect();
                    self.first_disagreement = Some(format!(
                        "{spelled:?} engine={engine_accepting} parser={parser_accepting}"
                    ));
                }
            }
            if self.tokens.len() < self.max_len {
                match next.as_ref() {
                    Some(s) => self.walk(Some(s)),
                    None => {
                        if parser_dead_for_all_extensions(&self.tokens) {
                            self.pruned += 1;
                            if self.pruned % 50_000 == 1 {
                                self.spot_check();
                            }
                        } else {
                            // The analysis says this cannot happen; stay
                            // sound anyway and walk the whole subtree.
                            self.unsafe_prunes += 1;
                            self.walk(None);
                        }
                    }
                }
            }
            self.tokens.pop();
        }
    }
}

/// Independent count of distinct formulas with surface length <= budget,
/// straight from the grammar's shape: a formula is a proposition, a unary
/// operator before a formula, or a parenthesized binary combination.
fn formula_count_by_recurrence(budget: usize, props: u64) -> u64 {
    let mut n = vec![0u64; budget + 1];
    for len in 1..=budget {
        let mut total = if len == 1 { props } else { 0 };
        if len >= 2 {
            total += 4 * n[len - 1];
        }
        if len >= 5 {
            // "( f B g )": three structural tokens plus the two operands.
            for a in 1..=len - 4 {
                total += n[a] * 4 * n[len - 3 - a];
            }
        }
        n[len] = total;
    }
    n.iter().sum()
}

fn check_grammar_parser_equivalence() -> CheckOutcome {
    let started = Instant::now();
    let vocab = Vocab::new(5);
    let grammar = Grammar::new(vocab);
    let mut sweep = Sweep {
        grammar: &grammar,
        vocab: &vocab,
        tokens: Vec::new(),
        max_len: 8,
        accepted: 0,
        visited: 0,
        pruned: 0,
        unsafe_prunes: 0,
        disagreements: 0,
        first_disagreement: None,
        spot_checks: 0,
        spot_failures: 0,
        rng: ChaCha8Rng::seed_from_u64(0x59EE9),
    };
    let init = grammar.init_state();
    sweep.walk(Some(&init));
    // Formulas of length <= 7 each accept exactly once (plus EOS).
    let expected = formula_count_by_recurrence(7, 5);
    let secs = started.elapsed().as_secs_f64();
    let pass = sweep.disagreements == 0
        && sweep.accepted == expected
        && sweep.spot_failures == 0
        && secs < 60.0;
    CheckOutcome::verdict(
        pass,
        format!(
            "{} prefixes visited, {} accepted (recurrence says {expected}), {} disagreements{}, {} pruned subtrees, {} spot checks ({} failed), {secs:.1}s",
            sweep.visited,
            sweep.accepted,
            sweep.disagreements,
            sweep
                .first_disagreement
                .as_ref()
                .map(|d| format!(" (first: {d})"))
                .unwrap_or_default(),
            sweep.pruned,
            sweep.spot_checks,
            sweep.spot_failures
        ),
    )
}
