//! Synthetic corpus generation: random formulas verbalized into templated
//! English over small object domains, with gold span labels so every
//! example carries its own lifting supervision.
//!
//! Three disjoint domains share their operator wording ("eventually",
//! "until", "if ... then", ...) but draw proposition phrases and verb
//! frames from disjoint word sets, which is what makes held-one-out domain
//! transfer a meaningful test. Repeated proposition ids verbalize through
//! "again"-style frames, giving the corpus genuine co-reference, and
//! examples can be concatenated into long multi-proposition commands.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lifting::{lift, unlift, LiftError, LiftedExample, MAX_AP_ID};
use crate::ltl::{parse_formula, BinaryOp, Formula, Notation, UnaryOp, Vocab, BINARY_OPS, UNARY_OPS};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("max_aps must be between 1 and {MAX_AP_ID}, got {requested}")]
    TooManyProps { requested: u32 },
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("cannot concatenate: both sides ground the phrase {phrase:?}")]
    SharedAP { phrase: String },
    #[error("line {line}: {message}")]
    Contract { line: usize, message: String },
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// A proposition-phrase inventory plus the verb frames that realize a
/// single proposition mention. `{}` in a frame marks the phrase slot.
#[derive(Debug, Clone)]
pub struct DomainLexicon {
    pub name: &'static str,
    pub phrases: Vec<String>,
    frames: Vec<&'static str>,
    again_frames: Vec<&'static str>,
    /// Idiomatic rendering of "eventually (a and eventually b)":
    /// pre-words, `{a}`, mid-words, `{b}`.
    idiom: (&'static str, &'static str),
}

fn cross(adjs: &[&str], nouns: &[&str]) -> Vec<String> {
    let mut out = Vec::with_capacity(adjs.len() * nouns.len());
    for a in adjs {
        for n in nouns {
            out.push(format!("{a} {n}"));
        }
    }
    out
}

/// The three built-in domains. Proposition word sets are pairwise disjoint;
/// operator keywords are produced by the shared verbalizer.
pub fn builtin_domains() -> Vec<DomainLexicon> {
    vec![
        DomainLexicon {
            name: "blocks",
            phrases: cross(
                &["red", "green", "blue", "yellow", "purple", "orange", "white", "black", "gray"],
                &["block", "cube", "pyramid", "ball"],
            ),
            frames: vec![
                "pick up the {}",
                "put down the {}",
                "touch the {}",
                "grasp the {}",
            ],
            again_frames: vec!["pick up the {} again", "touch the {} once more"],
            idiom: ("stack the {} onto", "the {}"),
        },
        DomainLexicon {
            name: "grid",
            phrases: cross(
                &["north", "south", "east", "west", "northeast", "northwest", "southeast", "southwest"],
                &["corner", "gate", "marker", "tile", "bridge"],
            ),
            frames: vec!["move to the {}", "reach the {}", "walk toward the {}"],
            again_frames: vec!["return to the {}", "head back to the {}"],
            idiom: ("pass the {} on the way to", "the {}"),
        },
        DomainLexicon {
            name: "robot",
            phrases: cross(
                &["upper", "lower", "inner", "outer", "front", "rear", "left", "right"],
                &["bay", "dock", "hall", "closet", "deck"],
            ),
            frames: vec![
                "enter the {}",
                "inspect the {}",
                "clean the {}",
                "secure the {}",
            ],
            again_frames: vec!["revisit the {}", "go back to the {}"],
            idiom: ("carry the crate from the {} to", "the {}"),
        },
    ]
}

pub fn domain_by_name(name: &str) -> Result<DomainLexicon, GenError> {
    builtin_domains()
        .into_iter()
        .find(|d| d.name == name)
        .ok_or_else(|| GenError::UnknownDomain(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub count: usize,
    pub max_depth: u32,
    pub max_aps: u32,
    /// One of the built-in domain names, or "all" to interleave them.
    pub domain: String,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            seed: 7,
            count: 500,
            max_depth: 3,
            max_aps: 5,
            domain: "all".to_string(),
        }
    }
}

/// Draw a random formula. Deeper nodes recurse with geometrically shrinking
/// probability; leaf ids are uniform over `1..=max_aps`, so repeats (and
/// hence co-reference) appear naturally.
pub fn sample_formula(rng: &mut ChaCha8Rng, max_depth: u32, max_aps: u32) -> Formula {
    fn go(rng: &mut ChaCha8Rng, depth: u32, max_depth: u32, max_aps: u32) -> Formula {
        let p_rec = 0.6f64.powi(depth as i32);
        if depth >= max_depth || rng.gen::<f64>() >= p_rec {
            return Formula::Prop(rng.gen_range(1..=max_aps));
        }
        if rng.gen_bool(0.5) {
            let op = UNARY_OPS[rng.gen_range(0..UNARY_OPS.len())];
            Formula::Unary(op, Box::new(go(rng, depth + 1, max_depth, max_aps)))
        } else {
            let op = BINARY_OPS[rng.gen_range(0..BINARY_OPS.len())];
            Formula::Binary(
                op,
                Box::new(go(rng, depth + 1, max_depth, max_aps)),
                Box::new(go(rng, depth + 1, max_depth, max_aps)),
            )
        }
    }
    go(rng, 0, max_depth, max_aps)
}

/// Append one frame instantiation: frame words get label 0, the phrase's
/// words get the proposition's label.
fn mention(frame: &str, phrase: &str, label: u32, tokens: &mut Vec<String>, labels: &mut Vec<u32>) {
    for w in frame.split_whitespace() {
        if w == "{}" {
            for pw in phrase.split_whitespace() {
                tokens.push(pw.to_string());
                labels.push(label);
            }
        } else {
            tokens.push(w.to_string());
            labels.push(0);
        }
    }
}

fn keywords(tokens: &mut Vec<String>, labels: &mut Vec<u32>, words: &[&str]) {
    for w in words {
        tokens.push((*w).to_string());
        labels.push(0);
    }
}

fn verbalize(
    f: &Formula,
    domain: &DomainLexicon,
    assign: &BTreeMap<u32, String>,
    seen: &mut HashSet<u32>,
    rng: &mut ChaCha8Rng,
    tokens: &mut Vec<String>,
    labels: &mut Vec<u32>,
) {
    match f {
        Formula::Prop(n) => {
            let phrase = &assign[n];
            let frame = if seen.contains(n) && rng.gen_bool(0.7) {
                domain.again_frames[rng.gen_range(0..domain.again_frames.len())]
            } else {
                domain.frames[rng.gen_range(0..domain.frames.len())]
            };
            mention(frame, phrase, *n, tokens, labels);
            seen.insert(*n);
        }
        Formula::Unary(op, sub) => {
            match op {
                UnaryOp::Not => keywords(tokens, labels, &["do", "not"]),
                UnaryOp::Next => keywords(tokens, labels, &["in", "the", "next", "step"]),
                UnaryOp::Eventually => keywords(tokens, labels, &["eventually"]),
                UnaryOp::Always => keywords(tokens, labels, &["always"]),
            }
            verbalize(sub, domain, assign, seen, rng, tokens, labels);
        }
        Formula::Binary(op, lhs, rhs) => {
            if *op == BinaryOp::Implies {
                keywords(tokens, labels, &["if"]);
            }
            verbalize(lhs, domain, assign, seen, rng, tokens, labels);
            match op {
                BinaryOp::And => keywords(tokens, labels, &["and"]),
                BinaryOp::Or => keywords(tokens, labels, &["or"]),
                BinaryOp::Implies => keywords(tokens, labels, &["then"]),
                BinaryOp::Until => keywords(tokens, labels, &["until"]),
            }
            verbalize(rhs, domain, assign, seen, rng, tokens, labels);
        }
    }
}

/// Match "eventually (prop_a and eventually prop_b)" with distinct leaves —
/// the shape that gets an idiomatic, operator-free surface form.
fn idiom_leaves(f: &Formula) -> Option<(u32, u32)> {
    if let Formula::Unary(UnaryOp::Eventually, inner) = f {
        if let Formula::Binary(BinaryOp::And, a, b) = inner.as_ref() {
            if let (Formula::Prop(x), Formula::Unary(UnaryOp::Eventually, c)) =
                (a.as_ref(), b.as_ref())
            {
                if let Formula::Prop(y) = c.as_ref() {
                    if x != y {
                        return Some((*x, *y));
                    }
                }
            }
        }
    }
    None
}

/// Turn one formula into a full corpus record over the given domain.
pub fn render_example(
    formula: &Formula,
    domain: &DomainLexicon,
    rng: &mut ChaCha8Rng,
) -> Result<LiftedExample, GenError> {
    // First-mention order equals surface order, so renumbering here makes
    // the span labels come out contiguous.
    let formula = formula.renumbered();
    let ids = formula.props_in_order();
    let distinct: BTreeSet<u32> = ids.iter().copied().collect();

    // Distinct phrases per id, sampled without replacement.
    let mut pool: Vec<usize> = (0..domain.phrases.len()).collect();
    let mut assign: BTreeMap<u32, String> = BTreeMap::new();
    for &id in &distinct {
        let at = rng.gen_range(0..pool.len());
        assign.insert(id, domain.phrases[pool.swap_remove(at)].clone());
    }

    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    if let Some((a, b)) = idiom_leaves(&formula) {
        if rng.gen_bool(0.5) {
            mention(domain.idiom.0, &assign[&a], a, &mut tokens, &mut labels);
            mention(domain.idiom.1, &assign[&b], b, &mut tokens, &mut labels);
        }
    }
    if tokens.is_empty() {
        let mut seen = HashSet::new();
        verbalize(
            &formula,
            domain,
            &assign,
            &mut seen,
            rng,
            &mut tokens,
            &mut labels,
        );
    }
    tokens.push(".".to_string());
    labels.push(0);

    let (lifted_nl, ap_map) = lift(&tokens, &labels)?;
    let lifted_tl = formula.render(Notation::Ascii);
    let grounded_tl = unlift(&formula, &ap_map, Notation::Ascii)?;
    Ok(LiftedExample {
        nl: tokens.join(" "),
        tokens,
        labels,
        lifted_nl,
        ap_map,
        lifted_tl,
        grounded_tl,
        domain: domain.name.to_string(),
    })
}

/// Generate a corpus. With domain "all" the built-in domains interleave
/// round-robin; everything is a pure function of the config.
pub fn gen_corpus(cfg: &GenConfig) -> Result<Vec<LiftedExample>, GenError> {
    if cfg.max_aps == 0 || cfg.max_aps > MAX_AP_ID {
        return Err(GenError::TooManyProps {
            requested: cfg.max_aps,
        });
    }
    let domains = if cfg.domain == "all" {
        builtin_domains()
    } else {
        vec![domain_by_name(&cfg.domain)?]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    while out.len() < cfg.count {
        let formula = sample_formula(&mut rng, cfg.max_depth, cfg.max_aps);
        // Keep targets comfortably inside the decoder budget.
        if formula.surface_len() + 1 > 60 {
            continue;
        }
        let domain = &domains[out.len() % domains.len()];
        out.push(render_example(&formula, domain, &mut rng)?);
    }
    Ok(out)
}

/// The connective inserted between two concatenated commands, and the
/// operator joining their formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connective {
    AndThen,
    Until,
}

/// Concatenate two records into one longer command: `a`'s proposition ids
/// stay, `b`'s shift up by `a`'s count, and the formulas join under the
/// connective's operator. Fails if the two sides ground a common phrase,
/// since the merged map could no longer tell them apart.
pub fn concat_examples(
    a: &LiftedExample,
    b: &LiftedExample,
    connective: Connective,
) -> Result<LiftedExample, GenError> {
    for phrase in b.ap_map.values() {
        if a.ap_map.values().any(|p| p == phrase) {
            return Err(GenError::SharedAP {
                phrase: phrase.clone(),
            });
        }
    }
    let shift = a.ap_map.len() as u32;
    let vocab = Vocab::new(MAX_AP_ID);
    let parse = |tl: &str, line: usize| {
        parse_formula(&vocab, tl).map_err(|e| GenError::Contract {
            line,
            message: format!("stored formula does not parse: {e}"),
        })
    };
    let fa = parse(&a.lifted_tl, 0)?;
    let fb = parse(&b.lifted_tl, 1)?.map_props(&|n| n + shift);
    let (op, words): (BinaryOp, &[&str]) = match connective {
        Connective::AndThen => (BinaryOp::And, &["and", "then"]),
        Connective::Until => (BinaryOp::Until, &["until"]),
    };
    let formula = Formula::Binary(op, Box::new(fa), Box::new(fb));

    let mut tokens = a.tokens.clone();
    let mut labels = a.labels.clone();
    if tokens.last().map(String::as_str) == Some(".") {
        tokens.pop();
        labels.pop();
    }
    for w in words {
        tokens.push((*w).to_string());
        labels.push(0);
    }
    for (t, &l) in b.tokens.iter().zip(&b.labels) {
        tokens.push(t.clone());
        labels.push(if l == 0 { 0 } else { l + shift });
    }

    let (lifted_nl, ap_map) = lift(&tokens, &labels)?;
    let lifted_tl = formula.render(Notation::Ascii);
    let grounded_tl = unlift(&formula, &ap_map, Notation::Ascii)?;
    let domain = if a.domain == b.domain {
        a.domain.clone()
    } else {
        "mixed".to_string()
    };
    Ok(LiftedExample {
        nl: tokens.join(" "),
        tokens,
        labels,
        lifted_nl,
        ap_map,
        lifted_tl,
        grounded_tl,
        domain,
    })
}

/// Build long commands whose total distinct-proposition count lands in
/// `min_aps..=max_aps` by concatenating fresh single commands.
pub fn gen_concat_corpus(
    seed: u64,
    count: usize,
    min_aps: u32,
    max_aps: u32,
) -> Result<Vec<LiftedExample>, GenError> {
    assert!(min_aps >= 1 && min_aps <= max_aps && max_aps <= MAX_AP_ID);
    let domains = builtin_domains();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    'outer: while out.len() < count {
        // Aim each example at a uniformly drawn proposition count, so the
        // corpus covers the whole requested range instead of stopping at
        // the first count past the minimum.
        let target = rng.gen_range(min_aps..=max_aps);
        let domain = &domains[rng.gen_range(0..domains.len())];
        let formula = sample_formula(&mut rng, 2, 3);
        let mut acc = render_example(&formula, domain, &mut rng)?;
        for _ in 0..32 {
            let k = acc.ap_map.len() as u32;
            if k >= target && k <= max_aps {
                out.push(acc);
                continue 'outer;
            }
            if k > max_aps {
                continue 'outer; // overshoot; start over
            }
            let domain = &domains[rng.gen_range(0..domains.len())];
            let formula = sample_formula(&mut rng, 2, 3);
            let next = render_example(&formula, domain, &mut rng)?;
            // Disjoint segments add their proposition counts; a merge past
            // the cap would push labels over the id limit, so reject it
            // before relabeling.
            if (acc.ap_map.len() + next.ap_map.len()) as u32 > max_aps {
                continue 'outer; // overshoot; start over
            }
            let conn = if rng.gen_bool(0.5) {
                Connective::AndThen
            } else {
                Connective::Until
            };
            match concat_examples(&acc, &next, conn) {
                Ok(merged) => acc = merged,
                Err(GenError::SharedAP { .. }) => continue, // redraw the next piece
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Quick corpus summary used by the command-line reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub unique_nl: usize,
    pub unique_tl: usize,
    pub word_vocab: usize,
}

impl CorpusStats {
    pub fn measure(corpus: &[LiftedExample]) -> CorpusStats {
        let nl: BTreeSet<&str> = corpus.iter().map(|e| e.nl.as_str()).collect();
        let tl: BTreeSet<&str> = corpus.iter().map(|e| e.lifted_tl.as_str()).collect();
        let words: BTreeSet<String> = corpus
            .iter()
            .flat_map(|e| e.tokens.iter().map(|t| t.to_lowercase()))
            .collect();
        CorpusStats {
            count: corpus.len(),
            unique_nl: nl.len(),
            unique_tl: tl.len(),
            word_vocab: words.len(),
        }
    }
}

pub fn write_jsonl(path: &Path, corpus: &[LiftedExample]) -> Result<(), GenError> {
    let mut file = std::fs::File::create(path)?;
    for ex in corpus {
        let line = serde_json::to_string(ex).map_err(|e| GenError::Json { line: 0, source: e })?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<LiftedExample>, GenError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line).map_err(|e| GenError::Json {
            line: i + 1,
            source: e,
        })?;
        out.push(ex);
    }
    Ok(out)
}

/// Check one record's internal consistency: the labels must lift to exactly
/// the stored lifted sentence and map, the stored formula must parse, and
/// grounding it must reproduce the stored grounded formula.
pub fn validate_example(ex: &LiftedExample, line: usize) -> Result<(), GenError> {
    let fail = |message: String| GenError::Contract { line, message };
    let (lifted_nl, ap_map) = lift(&ex.tokens, &ex.labels)?;
    if lifted_nl != ex.lifted_nl {
        return Err(fail(format!(
            "lifting the tokens gives {lifted_nl:?}, record says {:?}",
            ex.lifted_nl
        )));
    }
    if ap_map != ex.ap_map {
        return Err(fail("recomputed proposition map differs".to_string()));
    }
    if ex.nl != ex.tokens.join(" ") {
        return Err(fail("nl is not the token join".to_string()));
    }
    let vocab = Vocab::new(MAX_AP_ID);
    let formula = parse_formula(&vocab, &ex.lifted_tl)
        .map_err(|e| fail(format!("lifted_tl does not parse: {e}")))?;
    let grounded = unlift(&formula, &ex.ap_map, Notation::Ascii)?;
    if grounded != ex.grounded_tl {
        return Err(fail(format!(
            "grounding gives {grounded:?}, record says {:?}",
            ex.grounded_tl
        )));
    }
    Ok(())
}
