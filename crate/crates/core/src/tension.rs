//! Tension of each harmonic unit relative to its recent past.
//!
//! ```text
//! tension(t) = -(1/Z) Σ_{i=1..m} cos(H[t-i], H[t]) · w(i, n),   m = min(n, t)
//! w(i, n)    = 1 - exp(1 - n/(i-1))   for i > 1,   w(1, n) = 1
//! ```
//!
//! `w(1, n)` is the right limit of the closed form, where the exponent tends
//! to -∞. `Z` is the weight mass actually used (default) or `n` in literal
//! mode. Lower values mean less tension; the estimate reaches -1 when a unit
//! points the same way as its whole context and 0 when it is orthogonal to
//! it. Negative cosines push it above 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingModel, VectorSource};
use crate::vocab::PieceSequence;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensionError {
    #[error("unit 0 has no preceding context")]
    NoPrecedingContext,
    #[error("index {t} out of range for a sequence of {len} units")]
    IndexOutOfRange { t: usize, len: usize },
    #[error("id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("piece `{piece_id}` has {len} units; tension needs at least 2")]
    SequenceTooShort { piece_id: String, len: usize },
    #[error("weight index {i} outside 1..={n}")]
    WeightIndex { i: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TensionConfig {
    /// Memory length: number of preceding units considered.
    pub n: usize,
    /// Divide by the weight mass used instead of by `n`.
    pub normalize_partial: bool,
    pub source: VectorSource,
}

impl Default for TensionConfig {
    fn default() -> Self {
        Self {
            n: 24,
            normalize_partial: true,
            source: VectorSource::Input,
        }
    }
}

/// Memory-decay weight of the `i`-th preceding unit.
pub fn decay_weight(i: usize, n: usize) -> Result<f64, TensionError> {
    if i == 0 || i > n {
        return Err(TensionError::WeightIndex { i, n });
    }
    if i == 1 {
        return Ok(1.0);
    }
    Ok(1.0 - (1.0 - n as f64 / (i - 1) as f64).exp())
}

/// Precomputed unit-normalised vectors and decay weights for one model.
#[derive(Debug, Clone)]
pub struct TensionScorer {
    dim: usize,
    vocab_size: usize,
    unit_vectors: Vec<f64>,
    weights: Vec<f64>,
    cfg: TensionConfig,
}

impl TensionScorer {
    pub fn new(model: &EmbeddingModel, cfg: TensionConfig) -> Self {
        assert!(cfg.n >= 1, "memory length must be at least 1");
        let dim = model.dim();
        let raw = match cfg.source {
            VectorSource::Input => model.input_vectors(),
            VectorSource::Output => model.output_vectors(),
        };
        let mut unit_vectors = Vec::with_capacity(raw.len());
        for row in raw.chunks_exact(dim) {
            let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            // Zero vectors stay zero, which makes their cosine 0.
            let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            unit_vectors.extend(row.iter().map(|&x| f64::from(x) * scale));
        }
        let weights = (1..=cfg.n)
            .map(|i| decay_weight(i, cfg.n).expect("index within 1..=n"))
            .collect();
        Self {
            dim,
            vocab_size: model.vocab_size(),
            unit_vectors,
            weights,
            cfg,
        }
    }

    pub fn config(&self) -> &TensionConfig {
        &self.cfg
    }

    fn check_id(&self, id: u32) -> Result<(), TensionError> {
        if id as usize >= self.vocab_size {
            return Err(TensionError::IdOutOfRange {
                id,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }

    fn cosine(&self, a: u32, b: u32) -> f64 {
        let (a, b) = (a as usize * self.dim, b as usize * self.dim);
        let dot: f64 = self.unit_vectors[a..a + self.dim]
            .iter()
            .zip(&self.unit_vectors[b..b + self.dim])
            .map(|(x, y)| x * y)
            .sum();
        dot.clamp(-1.0, 1.0)
    }

    /// Tension of `ids[t]` given up to `n` preceding units.
    pub fn at(&self, ids: &[u32], t: usize) -> Result<f64, TensionError> {
        if t == 0 {
            return Err(TensionError::NoPrecedingContext);
        }
        if t >= ids.len() {
            return Err(TensionError::IndexOutOfRange { t, len: ids.len() });
        }
        let m = self.cfg.n.min(t);
        self.check_id(ids[t])?;
        let mut sum = 0.0;
        let mut mass = 0.0;
        for (i, &w) in self.weights[..m].iter().enumerate() {
            let prev = ids[t - 1 - i];
            self.check_id(prev)?;
            sum += self.cosine(prev, ids[t]) * w;
            mass += w;
        }
        let z = if self.cfg.normalize_partial {
            mass
        } else {
            self.cfg.n as f64
        };
        // Adding 0.0 turns -0.0 into 0.0.
        Ok(-sum / z + 0.0)
    }

    pub fn series(&self, seq: &PieceSequence) -> Result<TensionSeries, TensionError> {
        if seq.len() < 2 {
            return Err(TensionError::SequenceTooShort {
                piece_id: seq.piece_id.clone(),
                len: seq.len(),
            });
        }
        let mut values = Vec::with_capacity(seq.len());
        values.push(None);
        for t in 1..seq.len() {
            values.push(Some(self.at(&seq.ids, t)?));
        }
        Ok(TensionSeries {
            piece_id: seq.piece_id.clone(),
            transposition: seq.transposition,
            values,
            config: self.cfg,
        })
    }
}

/// Tension estimates for one sequence; index 0 is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct TensionSeries {
    pub piece_id: String,
    pub transposition: i32,
    pub values: Vec<Option<f64>>,
    pub config: TensionConfig,
}

impl TensionSeries {
    pub fn defined(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }
}

pub fn tension_at(
    model: &EmbeddingModel,
    ids: &[u32],
    t: usize,
    cfg: TensionConfig,
) -> Result<f64, TensionError> {
    TensionScorer::new(model, cfg).at(ids, t)
}

pub fn tension_series(
    model: &EmbeddingModel,
    seq: &PieceSequence,
    cfg: TensionConfig,
) -> Result<TensionSeries, TensionError> {
    TensionScorer::new(model, cfg).series(seq)
}

pub const TENSION_CSV_HEADER: &str = "piece_id,transposition,unit_index,onset,tension";

/// CSV rows (no header) for every defined value of `series`.
pub fn tension_csv_rows(seq: &PieceSequence, series: &TensionSeries, out: &mut String) {
    for (i, v) in series.defined() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            seq.piece_id, seq.transposition, i, seq.onsets[i], v
        );
    }
}
