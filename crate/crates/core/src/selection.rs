//! Candidate bake-off: train each configuration on the same subsample,
//! score it on the same test set and rank by F1, then runtime.
//!
//! Candidates whose F1 lies within `epsilon` of the best form a tie-set and
//! the fastest of them is selected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Report;
use crate::error::{Error, Result};
use crate::evaluation::{classwise_report, F1Average};
use crate::labels::ClassId;
use crate::model::{train, TrainConfig};
use crate::tokenizer::{load_vocab, train_wordpiece, Vocabulary, DEFAULT_VOCAB_SIZE};

pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_SELECTION_EPOCHS: usize = 3;
pub const DEFAULT_SUBSAMPLE_FRACTION: f64 = 0.10;

fn default_epochs() -> usize {
    DEFAULT_SELECTION_EPOCHS
}

fn default_vocab_size() -> usize {
    DEFAULT_VOCAB_SIZE
}

fn default_min_frequency() -> u64 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TokenizerSource {
    /// A vocabulary file trained elsewhere.
    File { path: PathBuf },
    /// Train a vocabulary on the candidate's training texts.
    DomainTrained {
        #[serde(default = "default_vocab_size")]
        vocab_size: usize,
        #[serde(default = "default_min_frequency")]
        min_frequency: u64,
    },
}

/// Fields that replace the harness's base training configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_sequence_length: Option<usize>,
    pub tfidf: Option<bool>,
    pub class_weights: Option<bool>,
}

impl TrainOverrides {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.max_sequence_length {
            c.max_sequence_length = v;
        }
        if let Some(v) = self.tfidf {
            c.tfidf = v;
        }
        if let Some(v) = self.class_weights {
            c.class_weights = v;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CandidateKind {
    Train {
        tokenizer: TokenizerSource,
        #[serde(default)]
        overrides: TrainOverrides,
        #[serde(default = "default_epochs")]
        epochs: usize,
    },
    /// Scores measured elsewhere, ranked alongside trained candidates.
    Precomputed {
        precision: f64,
        recall: f64,
        f1: f64,
        runtime_secs: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub name: String,
    #[serde(flatten)]
    pub kind: CandidateKind,
}

impl CandidateConfig {
    pub fn trained(name: impl Into<String>, tokenizer: TokenizerSource) -> Self {
        CandidateConfig {
            name: name.into(),
            kind: CandidateKind::Train {
                tokenizer,
                overrides: TrainOverrides::default(),
                epochs: DEFAULT_SELECTION_EPOCHS,
            },
        }
    }

    pub fn precomputed(name: impl Into<String>, precision: f64, recall: f64, f1: f64, runtime_secs: f64) -> Self {
        CandidateConfig {
            name: name.into(),
            kind: CandidateKind::Precomputed {
                precision,
                recall,
                f1,
                runtime_secs,
            },
        }
    }
}

/// Precision and recall are macro averages; F1 uses the configured
/// selection average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub runtime_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ComparisonRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn failed(name: &str, runtime_secs: f64, err: Error) -> Self {
        ComparisonRow {
            name: name.to_string(),
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            runtime_secs,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOptions {
    /// Run candidates one at a time so wall-clock runtimes are comparable.
    pub rank_by_runtime: bool,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        ComparisonOptions { rank_by_runtime: true }
    }
}

fn run_candidate(
    candidate: &CandidateConfig,
    train_set: &[Report],
    test_set: &[Report],
    base: &TrainConfig,
) -> ComparisonRow {
    let (tokenizer, overrides, epochs) = match &candidate.kind {
        CandidateKind::Precomputed {
            precision,
            recall,
            f1,
            runtime_secs,
        } => {
            return ComparisonRow {
                name: candidate.name.clone(),
                precision: *precision,
                recall: *recall,
                f1: *f1,
                runtime_secs: *runtime_secs,
                error: None,
            }
        }
        CandidateKind::Train {
            tokenizer,
            overrides,
            epochs,
        } => (tokenizer, overrides, *epochs),
    };
    let started = Instant::now();
    let run = || -> Result<ComparisonRow> {
        let vocab: Vocabulary = match tokenizer {
            TokenizerSource::File { path } => load_vocab(path)?,
            TokenizerSource::DomainTrained {
                vocab_size,
                min_frequency,
            } => {
                let texts: Vec<&str> = train_set.iter().map(|r| r.text.as_str()).collect();
                train_wordpiece(&texts, *vocab_size, *min_frequency)?
            }
        };
        let config = TrainConfig {
            epochs,
            ..overrides.apply(base)
        };
        let outcome = train(train_set, test_set, &vocab, &config)?;
        let texts: Vec<&str> = test_set.iter().map(|r| r.text.as_str()).collect();
        let preds = outcome.best.classifier.predict_all(&vocab, &texts)?;
        let golds: Vec<ClassId> = test_set.iter().map(Report::label).collect();
        let m = classwise_report(&preds, &golds)?;
        Ok(ComparisonRow {
            name: candidate.name.clone(),
            precision: m.macro_avg.precision,
            recall: m.macro_avg.recall,
            f1: m.f1(config.selection_average),
            runtime_secs: 0.0,
            error: None,
        })
    };
    let result = run();
    let runtime_secs = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    match result {
        Ok(row) => ComparisonRow { runtime_secs, ..row },
        Err(e) => ComparisonRow::failed(&candidate.name, runtime_secs, e),
    }
}

/// F1 descending, then runtime ascending; failed rows last.
pub fn rank_rows(rows: &mut [ComparisonRow]) {
    rows.sort_by(|a, b| {
        b.is_ok()
            .cmp(&a.is_ok())
            .then(b.f1.total_cmp(&a.f1))
            .then(a.runtime_secs.total_cmp(&b.runtime_secs))
    });
}

/// Train and score each candidate on identical data under `base.seed`.
pub fn run_comparison(
    candidates: &[CandidateConfig],
    train_subsample: &[Report],
    test_set: &[Report],
    base: &TrainConfig,
    options: ComparisonOptions,
) -> Result<Vec<ComparisonRow>> {
    if candidates.is_empty() {
        return Err(Error::Selection("no candidates given".into()));
    }
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Selection(format!("duplicate candidate name '{}'", c.name)));
        }
    }
    let mut rows: Vec<ComparisonRow> = if options.rank_by_runtime {
        candidates
            .iter()
            .map(|c| run_candidate(c, train_subsample, test_set, base))
            .collect()
    } else {
        candidates
            .par_iter()
            .map(|c| run_candidate(c, train_subsample, test_set, base))
            .collect()
    };
    rank_rows(&mut rows);
    Ok(rows)
}

/// Rows whose F1 is within `epsilon` of the best successful F1.
pub fn tie_set(rows: &[ComparisonRow], epsilon: f64) -> Vec<&ComparisonRow> {
    let ok = rows.iter().filter(|r| r.is_ok());
    let Some(top) = ok.clone().map(|r| r.f1).max_by(f64::total_cmp) else {
        return Vec::new();
    };
    ok.filter(|r| r.f1 >= top - epsilon).collect()
}

/// The fastest member of the tie-set; higher F1 and then name break exact
/// runtime ties.
pub fn select_best(rows: &[ComparisonRow], epsilon: f64) -> Result<&ComparisonRow> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Selection(format!("epsilon must be non-negative, got {epsilon}")));
    }
    tie_set(rows, epsilon)
        .into_iter()
        .min_by(|a, b| {
            a.runtime_secs
                .total_cmp(&b.runtime_secs)
                .then(b.f1.total_cmp(&a.f1))
                .then(a.name.cmp(&b.name))
        })
        .ok_or_else(|| Error::Selection("no successful candidate to select from".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub fraction: f64,
    pub epsilon: f64,
    pub f1_average: F1Average,
    pub rank_by_runtime: bool,
    pub train_records: usize,
    pub test_records: usize,
    pub rows: Vec<ComparisonRow>,
    pub selected: Option<String>,
}

/// Plain-text table: Model, Precision, Recall, F1, Runtime (s).
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>12}",
        "Model", "Precision", "Recall", "F1", "Runtime (s)"
    );
    for r in rows {
        match &r.error {
            None => {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>12.2}",
                    r.name, r.precision, r.recall, r.f1, r.runtime_secs
                );
            }
            Some(e) => {
                let _ = writeln!(out, "{:<width$}  failed: {e}", r.name);
            }
        }
    }
    out
}
