//! Binary model file.
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic       8 bytes  "CHORDW2V"
//! version     u32      1
//! vocab_size  u32
//! dim         u32
//! window      u32
//! min_count   u64
//! negatives   u32
//! epochs      u32
//! initial_lr  f64
//! seed        u64
//! subsample   f64
//! shrink      u8       0 or 1
//! threads     u32
//! digest      32 bytes SHA-256 of the vocabulary file
//! input       vocab_size × dim f32, row-major
//! output      vocab_size × dim f32, row-major
//! ```

use super::{EmbeddingError, EmbeddingModel, TrainConfig};

pub const MODEL_MAGIC: &[u8; 8] = b"CHORDW2V";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 4 + 8 + 4 + 4 + 8 + 8 + 8 + 1 + 4 + 32;

pub(super) fn encode(model: &EmbeddingModel) -> Vec<u8> {
    let cfg = &model.config;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.input.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.vocab_size as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.window as u32).to_le_bytes());
    out.extend_from_slice(&cfg.min_count.to_le_bytes());
    out.extend_from_slice(&(cfg.negatives as u32).to_le_bytes());
    out.extend_from_slice(&(cfg.epochs as u32).to_le_bytes());
    out.extend_from_slice(&cfg.initial_lr.to_le_bytes());
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    out.extend_from_slice(&cfg.subsample.to_le_bytes());
    out.push(u8::from(cfg.shrink_window));
    out.extend_from_slice(&(cfg.threads as u32).to_le_bytes());
    out.extend_from_slice(&model.vocab_digest);
    for x in model.input.iter().chain(&model.output) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], EmbeddingError> {
        if self.bytes.len() < N {
            return Err(EmbeddingError::Format("truncated header".into()));
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("split length"))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, EmbeddingError> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, EmbeddingError> {
        self.take().map(f64::from_le_bytes)
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<EmbeddingModel, EmbeddingError> {
    let mut r = Reader { bytes };
    if &r.take::<8>()? != MODEL_MAGIC {
        return Err(EmbeddingError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(EmbeddingError::Format(format!("unsupported version {version}")));
    }
    let vocab_size = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let window = r.u32()? as usize;
    let min_count = r.u64()?;
    let negatives = r.u32()? as usize;
    let epochs = r.u32()? as usize;
    let initial_lr = r.f64()?;
    let seed = r.u64()?;
    let subsample = r.f64()?;
    let shrink_window = match r.take::<1>()?[0] {
        0 => false,
        1 => true,
        b => return Err(EmbeddingError::Format(format!("bad shrink flag {b}"))),
    };
    let threads = r.u32()? as usize;
    let digest = r.take::<32>()?;

    let cells = vocab_size
        .checked_mul(dim)
        .ok_or_else(|| EmbeddingError::Format("shape overflow".into()))?;
    if r.bytes.len() != 2 * 4 * cells {
        return Err(EmbeddingError::Format(format!(
            "expected {} matrix bytes for {vocab_size}×{dim}, found {}",
            8 * cells,
            r.bytes.len()
        )));
    }
    let floats: Vec<f32> = r
        .bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    let (input, output) = floats.split_at(cells);
    let config = TrainConfig {
        dim,
        window,
        min_count,
        negatives,
        epochs,
        initial_lr,
        seed,
        subsample,
        shrink_window,
        threads,
    };
    config.validate()?;
    EmbeddingModel::from_parts(input.to_vec(), output.to_vec(), config, digest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{HarmonicUnit, UnitMode, Vocabulary};

    fn model() -> (Vocabulary, EmbeddingModel) {
        let mut vocab = Vocabulary::new(UnitMode::BassTagged);
        for b in 0..5 {
            vocab.observe(HarmonicUnit::with_bass(b, [b + 4, b + 7]));
        }
        let cfg = TrainConfig {
            dim: 8,
            seed: 42,
            subsample: 1e-3,
            ..TrainConfig::default()
        };
        let m = EmbeddingModel::initial(&vocab, &cfg).unwrap();
        (vocab, m)
    }

    #[test]
    fn round_trip() {
        let (vocab, m) = model();
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * 4 * 5 * 8);
        assert_eq!(&bytes[..8], MODEL_MAGIC);
        let back = EmbeddingModel::from_bytes(&bytes, Some(&vocab)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn header_records_training_parameters() {
        let (_, m) = model();
        let bytes = m.to_bytes();
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 6);
    }

    #[test]
    fn mismatched_vocabulary_is_rejected() {
        let (mut vocab, m) = model();
        vocab.observe(HarmonicUnit::with_bass(0, []));
        assert_eq!(
            EmbeddingModel::from_bytes(&m.to_bytes(), Some(&vocab)),
            Err(EmbeddingError::VocabMismatch)
        );
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (_, m) = model();
        let bytes = m.to_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(EmbeddingModel::from_bytes(&bad_magic, None).is_err());
        assert!(EmbeddingModel::from_bytes(&bytes[..bytes.len() - 1], None).is_err());
        assert!(EmbeddingModel::from_bytes(&bytes[..20], None).is_err());
        let mut nan = bytes.clone();
        let at = HEADER_LEN;
        nan[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(
            EmbeddingModel::from_bytes(&nan, None),
            Err(EmbeddingError::NonFinite)
        );
    }
}
