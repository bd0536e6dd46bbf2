//! Serializable result records: evaluation summaries, training-comparison
//! runs, and the domain-transfer grid. Everything that reaches disk carries
//! a schema version.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tlforce_core::datagen::CorpusStats;
use tlforce_core::model::TrainMode;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Exact-match / well-formedness counts, total and per domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub count: usize,
    pub exact: usize,
    pub well_formed: usize,
    pub per_domain: BTreeMap<String, DomainCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DomainCounts {
    pub count: usize,
    pub exact: usize,
}

impl EvalOutcome {
    pub fn exact_match_rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.exact as f64 / self.count as f64
        }
    }

    pub fn well_formed_rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.well_formed as f64 / self.count as f64
        }
    }
}

/// One (mode, seed) training run in the two-regime comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRun {
    pub mode: TrainMode,
    pub seed: u64,
    pub step0_loss: f64,
    pub final_loss: f64,
    pub heldout_exact_match: f64,
    pub grad_second_moment_at_init: f64,
    pub loss_curve: Vec<f64>,
}

/// One cell of the held-one-domain-out grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub heldout_domain: String,
    pub mode: TrainMode,
    pub seed: u64,
    pub heldout_exact_match: f64,
    pub train_domains: Vec<String>,
}

/// Full experiment report written by the transfer experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub corpus_stats: BTreeMap<String, CorpusStats>,
    pub grid: Vec<OodRow>,
    /// Per held-out domain: seeds where forced >= standard, out of total.
    pub forced_wins: BTreeMap<String, (usize, usize)>,
    pub wall_clock_secs: f64,
}
