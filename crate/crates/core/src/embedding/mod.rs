//! CBOW word2vec over harmonic-unit sequences.
//!
//! Training follows the reference word2vec conventions where nothing more
//! specific is required: negative sampling from `count^0.75`, input vectors
//! initialised uniformly in `[-0.5/D, 0.5/D]`, output vectors at zero, and a
//! learning rate decaying linearly to `1e-4 × initial_lr`. Context windows
//! never cross piece boundaries.
//!
//! `threads = 1` is the deterministic reference. With more threads, workers
//! update shared parameters without locks and the result depends on
//! scheduling.

mod io;
pub mod kernel;
pub mod sampler;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{PieceSequence, Vocabulary};
use kernel::{AtomicF32, CbowExample, Scratch};
use sampler::NegativeSampler;

pub use io::MODEL_MAGIC;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("no training examples: every sequence is empty")]
    EmptyTrainingData,
    #[error("id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training produced non-finite parameters")]
    NonFinite,
    #[error("model file: {0}")]
    Format(String),
    #[error("model was trained against a different vocabulary")]
    VocabMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    /// Context units on each side of the target.
    pub window: usize,
    pub min_count: u64,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub seed: u64,
    /// Frequent-word subsampling threshold; 0 disables.
    pub subsample: f64,
    /// Draw a random effective window in `1..=window` per target.
    pub shrink_window: bool,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 120,
            window: 6,
            min_count: 1,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            seed: 1,
            subsample: 0.0,
            shrink_window: false,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |msg: &str| Err(EmbeddingError::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1");
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.subsample >= 0.0 && self.subsample.is_finite()) {
            return bad("subsample must be non-negative");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

/// Which matrix supplies the vectors used for similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorSource {
    #[default]
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    vocab_size: usize,
    dim: usize,
    input: Vec<f32>,
    output: Vec<f32>,
    config: TrainConfig,
    vocab_digest: [u8; 32],
}

impl EmbeddingModel {
    /// Untrained parameters for `vocab` under `cfg.seed`.
    pub fn initial(vocab: &Vocabulary, cfg: &TrainConfig) -> Result<Self, EmbeddingError> {
        cfg.validate()?;
        let (v, d) = (vocab.len(), cfg.dim);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let half = 0.5 / d as f32;
        let input = (0..v * d).map(|_| rng.gen_range(-half..half)).collect();
        Ok(Self {
            vocab_size: v,
            dim: d,
            input,
            output: vec![0.0; v * d],
            config: cfg.clone(),
            vocab_digest: vocab.digest(),
        })
    }

    pub fn from_parts(
        input: Vec<f32>,
        output: Vec<f32>,
        config: TrainConfig,
        vocab_digest: [u8; 32],
    ) -> Result<Self, EmbeddingError> {
        let dim = config.dim;
        if dim == 0 || input.len() != output.len() || !input.len().is_multiple_of(dim) {
            return Err(EmbeddingError::Format("matrix shape mismatch".into()));
        }
        if !input.iter().chain(&output).all(|x| x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self {
            vocab_size: input.len() / dim,
            dim,
            input,
            output,
            config,
            vocab_digest,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn vocab_digest(&self) -> &[u8; 32] {
        &self.vocab_digest
    }

    pub fn input_vectors(&self) -> &[f32] {
        &self.input
    }

    pub fn output_vectors(&self) -> &[f32] {
        &self.output
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), EmbeddingError> {
        if vocab.digest() != self.vocab_digest || vocab.len() != self.vocab_size {
            return Err(EmbeddingError::VocabMismatch);
        }
        Ok(())
    }

    pub fn vector(&self, id: u32, source: VectorSource) -> Result<&[f32], EmbeddingError> {
        let i = id as usize;
        if i >= self.vocab_size {
            return Err(EmbeddingError::IdOutOfRange {
                id,
                vocab_size: self.vocab_size,
            });
        }
        let m = match source {
            VectorSource::Input => &self.input,
            VectorSource::Output => &self.output,
        };
        Ok(&m[i * self.dim..(i + 1) * self.dim])
    }

    /// Cosine similarity of two input vectors; 0 when either has zero norm.
    pub fn cosine(&self, a: u32, b: u32) -> Result<f64, EmbeddingError> {
        self.cosine_from(a, b, VectorSource::Input)
    }

    pub fn cosine_from(&self, a: u32, b: u32, source: VectorSource) -> Result<f64, EmbeddingError> {
        Ok(cosine_similarity(self.vector(a, source)?, self.vector(b, source)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        io::encode(self)
    }

    /// Decodes a model file, checking it against `vocab` when given.
    pub fn from_bytes(bytes: &[u8], vocab: Option<&Vocabulary>) -> Result<Self, EmbeddingError> {
        let model = io::decode(bytes)?;
        if let Some(vocab) = vocab {
            model.check_vocab(vocab)?;
        }
        Ok(model)
    }
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// Occurrence count of every id across `sequences`.
pub fn count_ids(sequences: &[PieceSequence], vocab_size: usize) -> Result<Vec<u64>, EmbeddingError> {
    let mut counts = vec![0u64; vocab_size];
    for &id in sequences.iter().flat_map(|s| &s.ids) {
        let slot = counts
            .get_mut(id as usize)
            .ok_or(EmbeddingError::IdOutOfRange { id, vocab_size })?;
        *slot += 1;
    }
    Ok(counts)
}

/// Sequences with ids below `min_count` removed, as word2vec does.
fn training_sentences(sequences: &[PieceSequence], counts: &[u64], min_count: u64) -> Vec<Vec<u32>> {
    sequences
        .iter()
        .map(|s| {
            s.ids
                .iter()
                .copied()
                .filter(|&id| counts[id as usize] >= min_count)
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Context ids around `pos`, at most `reach` on each side, within one sentence.
fn context_into(sentence: &[u32], pos: usize, reach: usize, out: &mut Vec<u32>) {
    out.clear();
    let lo = pos.saturating_sub(reach);
    let hi = (pos + reach).min(sentence.len() - 1);
    out.extend(
        (lo..=hi)
            .filter(|&j| j != pos)
            .map(|j| sentence[j]),
    );
}

/// Trains a CBOW model on `sequences`. Ids are checked against `vocab`; ids
/// that never occur keep their initial vectors.
pub fn train(
    sequences: &[PieceSequence],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<EmbeddingModel, EmbeddingError> {
    cfg.validate()?;
    let v = vocab.len();
    let counts = count_ids(sequences, v)?;
    let sentences = training_sentences(sequences, &counts, cfg.min_count);
    let total: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    if total == 0 {
        return Err(EmbeddingError::EmptyTrainingData);
    }
    let kept_counts: Vec<u64> = counts
        .iter()
        .map(|&c| if c >= cfg.min_count { c } else { 0 })
        .collect();
    let sampler = NegativeSampler::new(&kept_counts).ok_or(EmbeddingError::EmptyTrainingData)?;

    let init = EmbeddingModel::initial(vocab, cfg)?;
    if cfg.epochs == 0 {
        return Ok(init);
    }

    let input: Vec<AtomicF32> = init.input.iter().map(|&x| AtomicF32::new(x)).collect();
    let output: Vec<AtomicF32> = init.output.iter().map(|&x| AtomicF32::new(x)).collect();
    let progress = AtomicU64::new(0);
    let job = TrainJob {
        cfg,
        sampler: &sampler,
        counts: &kept_counts,
        total_words: total,
        input: &input,
        output: &output,
        progress: &progress,
    };

    let threads = cfg.threads.min(sentences.len());
    if threads <= 1 {
        let all: Vec<&[u32]> = sentences.iter().map(Vec::as_slice).collect();
        job.run(&all, 0);
    } else {
        let mut shards: Vec<Vec<&[u32]>> = vec![Vec::new(); threads];
        for (i, s) in sentences.iter().enumerate() {
            shards[i % threads].push(s);
        }
        std::thread::scope(|scope| {
            for (worker, shard) in shards.iter().enumerate() {
                let job = &job;
                scope.spawn(move || job.run(shard, worker as u64));
            }
        });
    }

    let input: Vec<f32> = input.into_iter().map(AtomicF32::into_inner).collect();
    let output: Vec<f32> = output.into_iter().map(AtomicF32::into_inner).collect();
    EmbeddingModel::from_parts(input, output, cfg.clone(), init.vocab_digest)
}

struct TrainJob<'a> {
    cfg: &'a TrainConfig,
    sampler: &'a NegativeSampler,
    counts: &'a [u64],
    total_words: u64,
    input: &'a [AtomicF32],
    output: &'a [AtomicF32],
    progress: &'a AtomicU64,
}

impl TrainJob<'_> {
    fn run(&self, sentences: &[&[u32]], worker: u64) {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(worker + 1);
        let mut scratch = Scratch::new(cfg.dim);
        let mut context = Vec::with_capacity(2 * cfg.window);
        let mut negatives = Vec::with_capacity(cfg.negatives);
        let mut kept = Vec::new();
        let budget = (cfg.epochs as u64 * self.total_words + 1) as f64;
        let min_lr = cfg.initial_lr * 1e-4;

        for _ in 0..cfg.epochs {
            for sentence in sentences {
                let words = if cfg.subsample > 0.0 {
                    self.subsample(sentence, &mut rng, &mut kept);
                    kept.as_slice()
                } else {
                    sentence
                };
                for pos in 0..words.len() {
                    let done = self.progress.fetch_add(1, Ordering::Relaxed) as f64;
                    let lr = (cfg.initial_lr * (1.0 - done / budget)).max(min_lr) as f32;
                    let reach = if cfg.shrink_window {
                        cfg.window - rng.gen_range(0..cfg.window)
                    } else {
                        cfg.window
                    };
                    context_into(words, pos, reach, &mut context);
                    if context.is_empty() {
                        continue;
                    }
                    let target = words[pos];
                    self.sampler
                        .fill_negatives(&mut rng, target, cfg.negatives, &mut negatives);
                    let ex = CbowExample {
                        context: &context,
                        target,
                        negatives: &negatives,
                    };
                    kernel::cbow_step_with(self.input, self.output, cfg.dim, ex, lr, &mut scratch);
                }
            }
        }
    }

    /// word2vec's frequent-word downsampling.
    fn subsample(&self, sentence: &[u32], rng: &mut ChaCha8Rng, out: &mut Vec<u32>) {
        out.clear();
        let threshold = self.cfg.subsample * self.total_words as f64;
        for &id in sentence {
            let f = self.counts[id as usize] as f64;
            let keep = ((f / threshold).sqrt() + 1.0) * threshold / f;
            if keep >= 1.0 || rng.gen::<f64>() < keep {
                out.push(id);
            }
        }
    }
}

/// A fixed set of CBOW examples for measuring loss before and after training.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBatch {
    examples: Vec<(Vec<u32>, u32, Vec<u32>)>,
}

impl ProbeBatch {
    /// Draws `size` examples (positions and negatives) with their own seed.
    pub fn sample(
        sequences: &[PieceSequence],
        vocab_size: usize,
        cfg: &TrainConfig,
        size: usize,
        seed: u64,
    ) -> Result<Self, EmbeddingError> {
        let counts = count_ids(sequences, vocab_size)?;
        let sampler = NegativeSampler::new(&counts).ok_or(EmbeddingError::EmptyTrainingData)?;
        let positions: Vec<(usize, usize)> = sequences
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() > 1)
            .flat_map(|(i, s)| (0..s.len()).map(move |p| (i, p)))
            .collect();
        if positions.is_empty() {
            return Err(EmbeddingError::EmptyTrainingData);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut examples = Vec::with_capacity(size);
        for _ in 0..size {
            let (si, pos) = positions[rng.gen_range(0..positions.len())];
            let ids = &sequences[si].ids;
            let mut context = Vec::new();
            context_into(ids, pos, cfg.window, &mut context);
            let mut negatives = Vec::new();
            sampler.fill_negatives(&mut rng, ids[pos], cfg.negatives, &mut negatives);
            examples.push((context, ids[pos], negatives));
        }
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Mean negative-sampling loss of `model` on the batch, in f64.
    pub fn mean_loss(&self, model: &EmbeddingModel) -> f64 {
        let mut input: Vec<f64> = model.input.iter().map(|&x| f64::from(x)).collect();
        let mut output: Vec<f64> = model.output.iter().map(|&x| f64::from(x)).collect();
        let input = std::cell::Cell::from_mut(input.as_mut_slice()).as_slice_of_cells();
        let output = std::cell::Cell::from_mut(output.as_mut_slice()).as_slice_of_cells();
        let total: f64 = self
            .examples
            .iter()
            .map(|(context, target, negatives)| {
                let ex = CbowExample {
                    context,
                    target: *target,
                    negatives,
                };
                kernel::cbow_loss(input, output, model.dim, ex)
            })
            .sum();
        total / self.examples.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::Time;
    use crate::vocab::{HarmonicUnit, UnitMode};

    /// Vocabulary of `n` distinct units with ids 0..n.
    fn vocab_of(n: usize) -> Vocabulary {
        let mut v = Vocabulary::new(UnitMode::BassTagged);
        for i in 0..n {
            let unit = HarmonicUnit::with_bass((i % 12) as u8, (0..(i / 12) as u8).map(|x| x + 1));
            v.observe(unit);
        }
        assert_eq!(v.len(), n);
        v
    }

    fn seq(ids: Vec<u32>) -> PieceSequence {
        let onsets = (0..ids.len() as i64).map(Time::from_integer).collect();
        PieceSequence {
            piece_id: "p".into(),
            transposition: 0,
            ids,
            onsets,
        }
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            dim: 16,
            window: 2,
            epochs: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn defaults_follow_the_reference_setup() {
        let cfg = TrainConfig::default();
        assert_eq!((cfg.dim, cfg.window, cfg.min_count), (120, 6, 1));
        assert_eq!((cfg.negatives, cfg.epochs), (5, 5));
        assert_eq!(cfg.initial_lr, 0.025);
        assert!(!cfg.shrink_window);
        assert_eq!(cfg.subsample, 0.0);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            TrainConfig { dim: 0, ..small_cfg() },
            TrainConfig { window: 0, ..small_cfg() },
            TrainConfig { min_count: 0, ..small_cfg() },
            TrainConfig { negatives: 0, ..small_cfg() },
            TrainConfig { initial_lr: 0.0, ..small_cfg() },
            TrainConfig { threads: 0, ..small_cfg() },
        ] {
            assert!(matches!(cfg.validate(), Err(EmbeddingError::InvalidConfig(_))));
        }
    }

    #[test]
    fn initialisation_ranges() {
        let vocab = vocab_of(7);
        let m = EmbeddingModel::initial(&vocab, &small_cfg()).unwrap();
        let half = 0.5 / 16.0;
        assert!(m.input_vectors().iter().all(|x| x.abs() <= half));
        assert!(m.output_vectors().iter().all(|&x| x == 0.0));
        assert_eq!(m.input_vectors().len(), 7 * 16);
    }

    #[test]
    fn zero_epochs_returns_the_initialisation() {
        let vocab = vocab_of(4);
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        let seqs = vec![seq(vec![0, 1, 2, 3, 2, 1])];
        let m = train(&seqs, &vocab, &cfg).unwrap();
        assert_eq!(m, EmbeddingModel::initial(&vocab, &cfg).unwrap());
        let probe = ProbeBatch::sample(&seqs, 4, &cfg, 50, 9).unwrap();
        let initial_loss = (1 + cfg.negatives) as f64 * std::f64::consts::LN_2;
        // Output vectors start at zero, so every score is 0 regardless of
        // input; negatives equal to the target are dropped from the batch.
        assert!(probe.mean_loss(&m) <= initial_loss + 1e-12);
    }

    #[test]
    fn errors_for_bad_training_data() {
        let vocab = vocab_of(3);
        assert_eq!(
            train(&[], &vocab, &small_cfg()),
            Err(EmbeddingError::EmptyTrainingData)
        );
        assert_eq!(
            train(&[seq(vec![0, 5])], &vocab, &small_cfg()),
            Err(EmbeddingError::IdOutOfRange { id: 5, vocab_size: 3 })
        );
    }

    #[test]
    fn single_token_corpus_trains() {
        let vocab = vocab_of(1);
        let cfg = small_cfg();
        let lone = train(&[seq(vec![0])], &vocab, &cfg).unwrap();
        assert_eq!(lone, EmbeddingModel::initial(&vocab, &cfg).unwrap());
        let repeated = train(&[seq(vec![0; 20])], &vocab, &cfg).unwrap();
        assert!(repeated.input_vectors().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn seeded_single_thread_training_is_bitwise_reproducible() {
        let vocab = vocab_of(6);
        let seqs: Vec<PieceSequence> = (0..5)
            .map(|k| seq((0..40).map(|i| ((i * 7 + k) % 6) as u32).collect()))
            .collect();
        let a = train(&seqs, &vocab, &small_cfg()).unwrap();
        let b = train(&seqs, &vocab, &small_cfg()).unwrap();
        assert_eq!(a.input_vectors(), b.input_vectors());
        assert_eq!(a.output_vectors(), b.output_vectors());
        let c = train(&seqs, &vocab, &TrainConfig { seed: 2, ..small_cfg() }).unwrap();
        assert_ne!(a.input_vectors(), c.input_vectors());
    }

    #[test]
    fn multi_threaded_training_stays_finite_and_learns() {
        let vocab = vocab_of(8);
        let seqs: Vec<PieceSequence> = (0..16)
            .map(|k| seq((0..200).map(|i| ((i + k) % 4 * 2) as u32).collect()))
            .collect();
        let cfg = TrainConfig { threads: 4, ..small_cfg() };
        let probe = ProbeBatch::sample(&seqs, 8, &cfg, 200, 1).unwrap();
        let before = probe.mean_loss(&EmbeddingModel::initial(&vocab, &cfg).unwrap());
        let m = train(&seqs, &vocab, &cfg).unwrap();
        assert!(probe.mean_loss(&m) < 0.9 * before);
    }

    #[test]
    fn min_count_and_subsampling_paths() {
        let vocab = vocab_of(5);
        let mut ids: Vec<u32> = (0..300).map(|i| (i % 3) as u32).collect();
        ids.push(4);
        let seqs = vec![seq(ids)];
        let cfg = TrainConfig { min_count: 2, subsample: 1e-2, shrink_window: true, ..small_cfg() };
        let m = train(&seqs, &vocab, &cfg).unwrap();
        let init = EmbeddingModel::initial(&vocab, &cfg).unwrap();
        // Id 4 occurs once, below min_count: its vectors never move.
        assert_eq!(m.vector(4, VectorSource::Input).unwrap(), init.vector(4, VectorSource::Input).unwrap());
        assert!(m.vector(4, VectorSource::Output).unwrap().iter().all(|&x| x == 0.0));
        assert_ne!(m.vector(0, VectorSource::Input).unwrap(), init.vector(0, VectorSource::Input).unwrap());
    }

    #[test]
    fn cosine_conventions() {
        assert!((cosine_similarity(&[1.0, 2.0, -3.0], &[1.0, 2.0, -3.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert!((cosine_similarity(&[0.3, -0.2], &[-0.3, 0.2]) + 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);

        let vocab = vocab_of(3);
        let m = EmbeddingModel::initial(&vocab, &small_cfg()).unwrap();
        assert!((m.cosine(1, 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            m.cosine(0, 3),
            Err(EmbeddingError::IdOutOfRange { id: 3, vocab_size: 3 })
        );
        assert_eq!(m.cosine_from(0, 1, VectorSource::Output).unwrap(), 0.0);
    }

    #[test]
    fn context_windows_truncate_at_sentence_edges() {
        let s = [10, 11, 12, 13, 14];
        let mut out = Vec::new();
        context_into(&s, 0, 2, &mut out);
        assert_eq!(out, vec![11, 12]);
        context_into(&s, 2, 6, &mut out);
        assert_eq!(out, vec![10, 11, 13, 14]);
        context_into(&s, 4, 1, &mut out);
        assert_eq!(out, vec![13]);
        context_into(&[7], 0, 3, &mut out);
        assert!(out.is_empty());
    }
}
