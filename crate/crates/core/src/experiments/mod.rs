//! Cross-validated experiments: chord categories (exp1) and cadence terminal
//! chords (exp2).

mod exp1;
mod exp2;
mod folds;
mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{train, EmbeddingError, EmbeddingModel, TrainConfig};
use crate::stats::StatsError;
use crate::tension::{TensionConfig, TensionError, TensionScorer};
use crate::vocab::{Corpus, PieceSequence};

pub use exp1::{run_experiment1, Exp1Result};
pub use exp2::{run_experiment2, Exp2Result};
pub use folds::{make_folds, FoldPlan};
pub use output::{
    ArtifactHeader, HypothesisOutcome, OmnibusOutcome, TableRow, TestReport, TABLE_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{pieces} pieces cannot fill {k} folds")]
    TooFewPieces { pieces: usize, k: usize },
    #[error("annotation line {line}: unknown piece `{piece_id}`")]
    UnknownPiece { line: usize, piece_id: String },
    #[error("annotation line {line}: unit {index} of `{piece_id}` outside 1..{len}")]
    IndexOutOfRange {
        line: usize,
        piece_id: String,
        index: usize,
        len: usize,
    },
    #[error("annotation line {line}: {reason}")]
    Annotation { line: usize, reason: String },
    #[error("no annotations supplied")]
    NoAnnotations,
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Tension(#[from] TensionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub per_condition: usize,
    /// Size of the random non-cadential baseline in exp2.
    pub baseline: usize,
    /// Seeds fold assignment and sampling. Fold `f` trains with
    /// `train.seed + f`.
    pub seed: u64,
    /// Family-wise alpha before Bonferroni correction.
    pub alpha: f64,
    /// Folds trained concurrently.
    pub workers: usize,
    /// Train once on everything and evaluate every piece. Leaks; smoke
    /// tests only.
    pub single_model: bool,
    pub train: TrainConfig,
    pub tension: TensionConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            per_condition: 1200,
            baseline: 1200,
            seed: 1,
            alpha: 0.05,
            workers: 1,
            single_model: false,
            train: TrainConfig::default(),
            tension: TensionConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.into()));
        if self.folds < 2 && !self.single_model {
            return bad("folds must be at least 2");
        }
        if self.per_condition == 0 || self.baseline == 0 {
            return bad("sample sizes must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.tension.n == 0 {
            return bad("tension memory n must be at least 1");
        }
        self.train.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CadenceCategory {
    #[serde(rename = "PAC")]
    Pac,
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "DC")]
    Dc,
}

impl CadenceCategory {
    pub fn name(self) -> &'static str {
        match self {
            CadenceCategory::Pac => "PAC",
            CadenceCategory::Hc => "HC",
            CadenceCategory::Dc => "DC",
        }
    }
}

impl fmt::Display for CadenceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CadenceCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PAC" => Ok(CadenceCategory::Pac),
            "HC" => Ok(CadenceCategory::Hc),
            "DC" => Ok(CadenceCategory::Dc),
            other => Err(format!("unknown cadence category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CadenceAnnotation {
    pub piece_id: String,
    /// Index into the untransposed sequence.
    pub terminal_unit_index: usize,
    pub category: CadenceCategory,
}

/// Parses `piece_id,terminal_unit_index,category` rows. A header row and
/// `#` comments are skipped. Indices are checked against the untransposed
/// sequences of `corpus`; index 0 has no preceding context and is rejected.
pub fn parse_annotations(
    text: &str,
    corpus: &Corpus,
) -> Result<Vec<CadenceAnnotation>, ExperimentError> {
    let lengths: BTreeMap<&str, usize> = corpus
        .untransposed()
        .map(|s| (s.piece_id.as_str(), s.len()))
        .collect();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') || row.starts_with("piece_id,") {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        let [piece_id, index, category] = fields[..] else {
            return Err(ExperimentError::Annotation {
                line,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        let index: usize = index.parse().map_err(|_| ExperimentError::Annotation {
            line,
            reason: format!("bad unit index `{index}`"),
        })?;
        let category = category
            .parse()
            .map_err(|reason| ExperimentError::Annotation { line, reason })?;
        let len = *lengths
            .get(piece_id)
            .ok_or_else(|| ExperimentError::UnknownPiece {
                line,
                piece_id: piece_id.to_owned(),
            })?;
        if index == 0 || index >= len {
            return Err(ExperimentError::IndexOutOfRange {
                line,
                piece_id: piece_id.to_owned(),
                index,
                len,
            });
        }
        out.push(CadenceAnnotation {
            piece_id: piece_id.to_owned(),
            terminal_unit_index: index,
            category,
        });
    }
    if out.is_empty() {
        return Err(ExperimentError::NoAnnotations);
    }
    Ok(out)
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&json))
}

/// SHA-256 over the vocabulary and sequence files.
pub fn corpus_digest(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(corpus.vocab.to_tsv().as_bytes());
    h.update(corpus.sequences_to_text().as_bytes());
    hex::encode(h.finalize())
}

/// Pieces evaluated by each model: the fold members, or everything at once
/// in single-model mode.
pub(crate) fn held_out_sets(
    pieces: &[String],
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<String>>, ExperimentError> {
    if cfg.single_model {
        let mut all = pieces.to_vec();
        all.sort();
        return Ok(vec![all]);
    }
    Ok(make_folds(pieces, cfg.folds, cfg.seed)?.members())
}

/// Every transposition of every piece not in `excluded`.
pub(crate) fn training_sequences(corpus: &Corpus, excluded: &[String]) -> Vec<PieceSequence> {
    corpus
        .sequences
        .iter()
        .filter(|s| !excluded.contains(&s.piece_id))
        .cloned()
        .collect()
}

/// One trained fold: its model scorer and the pieces it must not have seen.
pub(crate) struct FoldModel {
    pub fold: usize,
    pub scorer: TensionScorer,
    pub held_out: Vec<String>,
}

/// Trains one model per fold on every transposition of the pieces outside
/// it. `held_out(f)` lists fold `f`'s pieces; pieces never held out always
/// train. Results come back in fold order regardless of `workers`.
pub(crate) fn train_folds(
    corpus: &Corpus,
    held_out: &[Vec<String>],
    cfg: &ExperimentConfig,
) -> Result<Vec<FoldModel>, ExperimentError> {
    let job = |fold: usize| -> Result<FoldModel, ExperimentError> {
        let excluded = &held_out[fold];
        let training = if cfg.single_model {
            corpus.sequences.clone()
        } else {
            training_sequences(corpus, excluded)
        };
        let train_cfg = TrainConfig {
            seed: cfg.train.seed.wrapping_add(fold as u64),
            ..cfg.train.clone()
        };
        log::info!("fold {fold}: training on {} sequences", training.len());
        let model: EmbeddingModel = train(&training, &corpus.vocab, &train_cfg)?;
        Ok(FoldModel {
            fold,
            scorer: TensionScorer::new(&model, cfg.tension),
            held_out: excluded.clone(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    pool.install(|| (0..held_out.len()).into_par_iter().map(job).collect())
}

pub(crate) fn sampling_rng(cfg: &ExperimentConfig, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    rng
}
