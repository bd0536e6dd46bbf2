//! Atomic-proposition lifting: turning labeled natural-language spans into
//! placeholder propositions and back.
//!
//! A sentence arrives as tokens plus per-token integer labels; label 0 means
//! "not part of any proposition", label n > 0 assigns the token to atomic
//! proposition n. [`lift`] replaces each maximal nonzero span with `prop_n`
//! and records the span text, [`unlift`] substitutes canonical phrase names
//! back into a formula's rendering. A small averaged-perceptron [`Tagger`]
//! predicts the labels from raw tokens so the pipeline also runs on
//! unlabeled input.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ltl::{Formula, Notation, SurfaceToken};

/// Highest proposition id a label may carry; matches the formula
/// vocabulary's proposition limit.
pub const MAX_AP_ID: u32 = 15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LiftError {
    #[error("tokens and labels differ in length ({tokens} vs {labels})")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("label {label} at token {pos} is above the proposition limit")]
    LabelOutOfRange { pos: usize, label: u32 },
    #[error("proposition ids must first appear as 1, 2, ...; saw {label} before {expected}")]
    NonContiguousIds { label: u32, expected: u32 },
    #[error("formula mentions prop_{0} but the phrase map has no entry for it")]
    MissingAP(u32),
}

/// One corpus record, as stored in JSONL files. Formulas are kept in ASCII
/// notation on disk; `ap_map` is ordered so serialization is byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedExample {
    pub nl: String,
    pub tokens: Vec<String>,
    pub labels: Vec<u32>,
    pub lifted_nl: String,
    pub ap_map: BTreeMap<u32, String>,
    pub lifted_tl: String,
    pub grounded_tl: String,
    pub domain: String,
}

/// Replace maximal nonzero-labeled spans with `prop_n` placeholders and
/// collect each id's first span text.
pub fn lift(
    tokens: &[String],
    labels: &[u32],
) -> Result<(String, BTreeMap<u32, String>), LiftError> {
    if tokens.len() != labels.len() {
        return Err(LiftError::LengthMismatch {
            tokens: tokens.len(),
            labels: labels.len(),
        });
    }
    let mut ap_map: BTreeMap<u32, String> = BTreeMap::new();
    let mut seen = 0u32; // ids encountered so far; next new id must be seen+1
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let label = labels[i];
        if label == 0 {
            out.push(tokens[i].clone());
            i += 1;
            continue;
        }
        if label > MAX_AP_ID {
            return Err(LiftError::LabelOutOfRange { pos: i, label });
        }
        let start = i;
        while i < tokens.len() && labels[i] == label {
            i += 1;
        }
        let phrase = tokens[start..i].join(" ");
        if let std::collections::btree_map::Entry::Vacant(slot) = ap_map.entry(label) {
            if label != seen + 1 {
                return Err(LiftError::NonContiguousIds {
                    label,
                    expected: seen + 1,
                });
            }
            seen = label;
            slot.insert(phrase);
        }
        out.push(format!("prop_{label}"));
    }
    Ok((out.join(" "), ap_map))
}

/// Canonical grounded name for a phrase: lowercase, spaces to underscores.
pub fn canonical_ap(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join("_")
}

/// Render a formula with every `prop_n` replaced by its canonical phrase
/// name. The operators keep the requested notation.
pub fn unlift(
    formula: &Formula,
    ap_map: &BTreeMap<u32, String>,
    notation: Notation,
) -> Result<String, LiftError> {
    let mut out = String::new();
    for tok in formula.surface_tokens() {
        if !out.is_empty() {
            out.push(' ');
        }
        match tok {
            SurfaceToken::Prop(n) => {
                let phrase = ap_map.get(&n).ok_or(LiftError::MissingAP(n))?;
                out.push_str(&canonical_ap(phrase));
            }
            other => {
                let _ = write!(out, "{}", other.spelling(notation));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Averaged-perceptron span tagger.
//
// The learner predicts a three-way structural tag per token — outside a
// span, beginning one, or continuing one. Numeric proposition ids are then
// derived deterministically: spans are numbered in order of first
// appearance, and two spans with the same text share an id. Predicting
// structure instead of raw ids matters because an id like "2" carries no
// lexical signal (the same phrase is 1 in one sentence and 3 in another,
// depending only on mention order), while span boundaries are a local,
// word-driven decision a perceptron handles well.
// ---------------------------------------------------------------------------

const BOUNDARY_LEFT: &str = "<s>";
const BOUNDARY_RIGHT: &str = "</s>";

const TAG_OUT: u32 = 0;
const TAG_BEGIN: u32 = 1;
const TAG_INSIDE: u32 = 2;

/// Context features for position `i`; `prev` holds the tags already
/// assigned to positions `0..i` (the tagger's own greedy predictions).
fn features(words: &[String], i: usize, prev: &[u32]) -> Vec<String> {
    let at = |k: isize| -> &str {
        if k < 0 {
            BOUNDARY_LEFT
        } else if k as usize >= words.len() {
            BOUNDARY_RIGHT
        } else {
            &words[k as usize]
        }
    };
    let i_ = i as isize;
    let p1 = if i >= 1 { prev[i - 1].to_string() } else { "-".into() };
    let p2 = if i >= 2 { prev[i - 2].to_string() } else { "-".into() };
    vec![
        "bias".to_string(),
        format!("w0={}", at(i_)),
        format!("w-1={}", at(i_ - 1)),
        format!("w+1={}", at(i_ + 1)),
        format!("w-2={}", at(i_ - 2)),
        format!("w+2={}", at(i_ + 2)),
        format!("w-1,w0={} {}", at(i_ - 1), at(i_)),
        format!("w0,w+1={} {}", at(i_), at(i_ + 1)),
        format!("p-1={p1}"),
        format!("p-2,p-1={p2} {p1}"),
        format!("p-1,w0={p1} {}", at(i_)),
    ]
}

/// Gold ids -> structural tags. A span is a maximal run of one nonzero id,
/// so a change of id (or a zero) marks a boundary.
fn span_tags(labels: &[u32]) -> Vec<u32> {
    let mut tags = vec![TAG_OUT; labels.len()];
    for i in 0..labels.len() {
        if labels[i] == 0 {
            continue;
        }
        tags[i] = if i > 0 && labels[i - 1] == labels[i] {
            TAG_INSIDE
        } else {
            TAG_BEGIN
        };
    }
    tags
}

/// Structural tags -> proposition ids: number spans by first appearance,
/// giving identical phrases the same id (that is the whole co-reference
/// story: a repeated mention of "the red room" is the same proposition).
/// A stray continuation tag after a gap opens a span, keeping the output
/// well-formed whatever the tagger emits.
fn tags_to_ids(words: &[String], tags: &[u32]) -> Vec<u32> {
    let mut ids = vec![0u32; tags.len()];
    let mut by_text: HashMap<String, u32> = HashMap::new();
    let mut i = 0;
    while i < tags.len() {
        if tags[i] == TAG_OUT {
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < tags.len() && tags[i] == TAG_INSIDE {
            i += 1;
        }
        let next = by_text.len() as u32 + 1;
        let id = *by_text.entry(words[start..i].join(" ")).or_insert(next);
        for slot in &mut ids[start..i] {
            *slot = id;
        }
    }
    ids
}

/// Greedy left-to-right sequence labeler with averaged-perceptron weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    labels: Vec<u32>,
    weights: HashMap<(u32, String), f64>,
}

impl Tagger {
    fn score(&self, label: u32, feats: &[String]) -> f64 {
        feats
            .iter()
            .map(|f| {
                self.weights
                    .get(&(label, f.clone()))
                    .copied()
                    .unwrap_or(0.0)
            })
            .sum()
    }

    fn score_best(&self, feats: &[String]) -> u32 {
        let mut best = self.labels[0];
        let mut best_score = f64::NEG_INFINITY;
        for &label in &self.labels {
            let s = self.score(label, feats);
            // Strict improvement only: ties resolve to the earliest label
            // in the inventory, so an untrained tagger says 0 everywhere.
            if s > best_score {
                best = label;
                best_score = s;
            }
        }
        best
    }

    /// Label a token sequence. Tags are predicted greedily left to right,
    /// then decoded into ids numbered by first appearance, so downstream
    /// lifting always sees 1, 2, ...
    pub fn predict_labels(&self, tokens: &[String]) -> Vec<u32> {
        let words: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut tags = Vec::with_capacity(words.len());
        for i in 0..words.len() {
            let feats = features(&words, i, &tags);
            tags.push(self.score_best(&feats));
        }
        tags_to_ids(&words, &tags)
    }

    /// Serialize as sorted `label<TAB>feature<TAB>weight` lines. Tabs,
    /// newlines and backslashes inside feature strings are escaped so the
    /// format stays line-oriented.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut entries: Vec<(&(u32, String), &f64)> = self.weights.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        let mut labels = self.labels.clone();
        labels.sort_unstable();
        let _ = writeln!(
            out,
            "labels\t{}",
            labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",")
        );
        for ((label, feat), w) in entries {
            let escaped: String = feat
                .chars()
                .flat_map(|c| match c {
                    '\\' => vec!['\\', '\\'],
                    '\t' => vec!['\\', 't'],
                    '\n' => vec!['\\', 'n'],
                    c => vec![c],
                })
                .collect();
            let _ = writeln!(out, "{label}\t{escaped}\t{w}");
        }
        std::fs::write(path, out)
    }

    pub fn load(path: &Path) -> std::io::Result<Tagger> {
        let raw = std::fs::read_to_string(path)?;
        let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
        let mut lines = raw.lines();
        let header = lines.next().ok_or_else(|| bad("empty tagger file"))?;
        let labels: Vec<u32> = header
            .strip_prefix("labels\t")
            .ok_or_else(|| bad("missing labels header"))?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad("bad label id")))
            .collect::<Result<_, _>>()?;
        let mut weights = HashMap::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let label: u32 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad weight line"))?;
            let feat_raw = parts.next().ok_or_else(|| bad("bad weight line"))?;
            let weight: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad weight line"))?;
            let mut feat = String::with_capacity(feat_raw.len());
            let mut chars = feat_raw.chars();
            while let Some(c) = chars.next() {
                if c == '\\' {
                    match chars.next() {
                        Some('t') => feat.push('\t'),
                        Some('n') => feat.push('\n'),
                        Some('\\') => feat.push('\\'),
                        _ => return Err(bad("bad escape")),
                    }
                } else {
                    feat.push(c);
                }
            }
            weights.insert((label, feat), weight);
        }
        Ok(Tagger { labels, weights })
    }
}

/// Train an averaged perceptron on (tokens, labels) sequences. Gold ids
/// are converted to structural tags up front. Updates fire whenever the
/// gold tag fails to strictly outscore its best rival, use the tagger's
/// own left-to-right predictions for history features, and the returned
/// weights are the average over every step, which is what makes held-out
/// behavior stable.
pub fn train_tagger(data: &[(Vec<String>, Vec<u32>)], epochs: usize, seed: u64) -> Tagger {
    let label_set = vec![TAG_OUT, TAG_BEGIN, TAG_INSIDE];
    let golds: Vec<Vec<u32>> = data.iter().map(|(_, ls)| span_tags(ls)).collect();

    let mut weights: HashMap<(u32, String), f64> = HashMap::new();
    let mut totals: HashMap<(u32, String), f64> = HashMap::new();
    let mut stamps: HashMap<(u32, String), u64> = HashMap::new();
    let mut now: u64 = 0;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut live = Tagger {
        labels: label_set.clone(),
        weights: HashMap::new(),
    };
    for _ in 0..epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for &idx in &order {
            let (tokens, _) = &data[idx];
            let gold = &golds[idx];
            let words: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
            let mut prev: Vec<u32> = Vec::with_capacity(words.len());
            for (i, &gold_tag) in gold.iter().enumerate() {
                let feats = features(&words, i, &prev);
                let guess = live.score_best(&feats);
                now += 1;
                // Update until the gold tag strictly outscores every rival.
                // Plain mistake-driven updates stall here: argmax ties
                // resolve to the earliest tag, which can equal gold while
                // the scores are dead even, and the averaged weights then
                // break that tie the other way at prediction time.
                let gold_score = live.score(gold_tag, &feats);
                let mut rival = None;
                let mut rival_score = f64::NEG_INFINITY;
                for &label in &live.labels {
                    if label == gold_tag {
                        continue;
                    }
                    let s = live.score(label, &feats);
                    if s > rival_score {
                        rival = Some(label);
                        rival_score = s;
                    }
                }
                if let Some(rival) = rival {
                    if gold_score <= rival_score {
                        for f in &feats {
                            for (label, delta) in [(gold_tag, 1.0), (rival, -1.0)] {
                                let key = (label, f.clone());
                                let w = live.weights.entry(key.clone()).or_insert(0.0);
                                let t0 = stamps.get(&key).copied().unwrap_or(0);
                                *totals.entry(key.clone()).or_insert(0.0) +=
                                    (now - t0) as f64 * *w;
                                stamps.insert(key.clone(), now);
                                *w += delta;
                            }
                        }
                    }
                }
                prev.push(guess);
            }
        }
    }
    for (key, w) in &live.weights {
        let t0 = stamps.get(key).copied().unwrap_or(0);
        let total = totals.get(key).copied().unwrap_or(0.0) + (now - t0) as f64 * w;
        let avg = total / now.max(1) as f64;
        if avg != 0.0 {
            weights.insert(key.clone(), avg);
        }
    }
    Tagger {
        labels: label_set,
        weights,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltl::{parse_formula, Vocab};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|w| w.to_string()).collect()
    }

    #[test]
    fn lifts_the_two_room_sentence() {
        let tokens = toks("Go to the red room and push the box into the green room .");
        let labels = vec![0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 2, 2, 0];
        let (lifted, ap_map) = lift(&tokens, &labels).unwrap();
        assert_eq!(lifted, "Go to the prop_1 and push the box into the prop_2 .");
        assert_eq!(ap_map[&1], "red room");
        assert_eq!(ap_map[&2], "green room");
        assert_eq!(ap_map.len(), 2);
    }

    #[test]
    fn repeated_ids_reuse_the_first_span() {
        let tokens = toks("go to the red room then return to the red room again");
        let labels = vec![0, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0];
        let (lifted, ap_map) = lift(&tokens, &labels).unwrap();
        assert_eq!(lifted, "go to the prop_1 then return to the prop_1 again");
        assert_eq!(ap_map.len(), 1);
        assert_eq!(ap_map[&1], "red room");
    }

    #[test]
    fn adjacent_distinct_ids_split_into_two_spans() {
        let tokens = toks("a b c");
        let labels = vec![1, 2, 0];
        let (lifted, ap_map) = lift(&tokens, &labels).unwrap();
        assert_eq!(lifted, "prop_1 prop_2 c");
        assert_eq!(ap_map[&1], "a");
        assert_eq!(ap_map[&2], "b");
    }

    #[test]
    fn rejects_malformed_labelings() {
        let tokens = toks("a b");
        assert_eq!(
            lift(&tokens, &[0]).unwrap_err(),
            LiftError::LengthMismatch { tokens: 2, labels: 1 }
        );
        assert_eq!(
            lift(&tokens, &[2, 0]).unwrap_err(),
            LiftError::NonContiguousIds { label: 2, expected: 1 }
        );
        assert_eq!(
            lift(&tokens, &[16, 0]).unwrap_err(),
            LiftError::LabelOutOfRange { pos: 0, label: 16 }
        );
        // 1 then 3 skips 2.
        assert_eq!(
            lift(&toks("a b c"), &[1, 0, 3]).unwrap_err(),
            LiftError::NonContiguousIds { label: 3, expected: 2 }
        );
    }

    #[test]
    fn unlift_substitutes_canonical_names() {
        let vocab = Vocab::new(5);
        let f = parse_formula(&vocab, "◇ ( prop_1 ∧ ◇ prop_2 )").unwrap();
        let mut ap_map = BTreeMap::new();
        ap_map.insert(1, "red room".to_string());
        ap_map.insert(2, "green room".to_string());
        assert_eq!(
            unlift(&f, &ap_map, Notation::Unicode).unwrap(),
            "◇ ( red_room ∧ ◇ green_room )"
        );
        assert_eq!(
            unlift(&f, &ap_map, Notation::Ascii).unwrap(),
            "F ( red_room AND F green_room )"
        );
        ap_map.remove(&2);
        assert_eq!(
            unlift(&f, &ap_map, Notation::Unicode).unwrap_err(),
            LiftError::MissingAP(2)
        );
    }

    #[test]
    fn canonicalization_lowercases_and_joins() {
        assert_eq!(canonical_ap("Red Room"), "red_room");
        assert_eq!(canonical_ap("  blue   door "), "blue_door");
    }

    fn tiny_training_set() -> Vec<(Vec<String>, Vec<u32>)> {
        let colors = ["red", "green", "blue", "yellow"];
        let mut data = Vec::new();
        for (i, a) in colors.iter().enumerate() {
            for (j, b) in colors.iter().enumerate() {
                if i == j {
                    continue;
                }
                let tokens = toks(&format!(
                    "go to the {a} room and push the box into the {b} room ."
                ));
                data.push((tokens, vec![0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 2, 2, 0]));
                let tokens = toks(&format!("visit the {a} room then return to the {a} room ."));
                data.push((tokens, vec![0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0]));
            }
        }
        data
    }

    #[test]
    fn tagger_memorizes_its_training_sentences() {
        let data = tiny_training_set();
        let tagger = train_tagger(&data, 8, 3);
        let correct = data
            .iter()
            .filter(|(toks, gold)| &tagger.predict_labels(toks) == gold)
            .count();
        assert!(
            correct as f64 >= 0.99 * data.len() as f64,
            "memorized {correct}/{}",
            data.len()
        );
    }

    #[test]
    fn tagger_generalizes_to_held_out_sentences() {
        // Hold out whole sentences; their color pairs are new but every
        // color still shows up in both slots across the training rest.
        let data = tiny_training_set();
        let mut held = Vec::new();
        let mut train_set = Vec::new();
        for (i, pair) in data.into_iter().enumerate() {
            if i % 5 == 0 {
                held.push(pair);
            } else {
                train_set.push(pair);
            }
        }
        assert!(held.len() >= 4);
        let tagger = train_tagger(&train_set, 8, 3);
        let correct = held
            .iter()
            .filter(|(toks, gold)| &tagger.predict_labels(toks) == gold)
            .count();
        assert!(
            correct as f64 >= 0.95 * held.len() as f64,
            "held-out {correct}/{}",
            held.len()
        );
    }

    #[test]
    fn predicted_spans_decode_to_first_appearance_ids() {
        let mut weights = HashMap::new();
        weights.insert((TAG_BEGIN, "w0=red".to_string()), 5.0);
        weights.insert((TAG_BEGIN, "w0=blue".to_string()), 5.0);
        weights.insert((TAG_INSIDE, "w0=box".to_string()), 5.0);
        let tagger = Tagger { labels: vec![0, 1, 2], weights };
        // Distinct phrases get fresh ids in order of appearance.
        assert_eq!(
            tagger.predict_labels(&toks("take blue box to red box")),
            vec![0, 1, 1, 0, 2, 2]
        );
        // A repeated phrase reuses the id of its first mention.
        assert_eq!(
            tagger.predict_labels(&toks("take red box to red box")),
            vec![0, 1, 1, 0, 1, 1]
        );
    }

    #[test]
    fn gold_ids_convert_to_span_tags_and_back() {
        let words = toks("go red room then red room now blue room");
        let labels = vec![0, 1, 1, 0, 1, 1, 0, 2, 2];
        let tags = span_tags(&labels);
        assert_eq!(tags, vec![0, 1, 2, 0, 1, 2, 0, 1, 2]);
        assert_eq!(tags_to_ids(&words, &tags), labels);
        // Adjacent distinct ids still get separate begin tags.
        assert_eq!(span_tags(&[1, 2, 2]), vec![1, 1, 2]);
    }

    #[test]
    fn tagger_round_trips_through_its_text_format() {
        let data = tiny_training_set();
        let tagger = train_tagger(&data, 4, 9);
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("tagger.tsv");
        tagger.save(&path).unwrap();
        let loaded = Tagger::load(&path).unwrap();
        assert_eq!(loaded, tagger);
    }

    #[test]
    fn tagger_escaping_survives_hostile_feature_text() {
        let mut weights = HashMap::new();
        weights.insert((1u32, "w0=a\tb\\c\nd".to_string()), 1.5);
        let tagger = Tagger { labels: vec![0, 1], weights };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("tagger.tsv");
        tagger.save(&path).unwrap();
        assert_eq!(Tagger::load(&path).unwrap(), tagger);
    }
}
