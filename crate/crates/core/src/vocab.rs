//! Harmonic units, transposition augmentation and the chord vocabulary.
//!
//! A slice is reduced to its bass pitch class plus the set of remaining pitch
//! classes. Keeping the bass separate lets inversions stay distinct tokens
//! (C/E and C/G are not the same word as C). [`UnitMode::PitchClassSet`]
//! drops the bass and keeps only the pitch-class set, for ablations.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::score::{Slice, Time};

/// Transpositions applied to every piece: -5..=+6 semitones, 0 included.
pub const TRANSPOSITIONS: std::ops::RangeInclusive<i32> = -5..=6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("corpus has no pieces")]
    EmptyCorpus,
    #[error("piece `{0}` has no slices")]
    EmptyPiece(String),
    #[error("piece id `{0}` is empty or contains whitespace")]
    InvalidPieceId(String),
    #[error("duplicate piece id `{0}`")]
    DuplicatePiece(String),
    #[error("transposition {0} outside -5..=6")]
    TranspositionOutOfRange(i32),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// A set of pitch classes stored as a 12-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PcSet(u16);

impl PcSet {
    pub const EMPTY: PcSet = PcSet(0);

    pub fn from_pcs(pcs: impl IntoIterator<Item = u8>) -> Self {
        let mut set = Self::EMPTY;
        for pc in pcs {
            set.insert(pc);
        }
        set
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn insert(&mut self, pc: u8) {
        self.0 |= 1 << (pc % 12);
    }

    pub fn remove(&mut self, pc: u8) {
        self.0 &= !(1 << (pc % 12));
    }

    pub fn contains(self, pc: u8) -> bool {
        pc < 12 && self.0 & (1 << pc) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Pitch classes in ascending order.
    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0u8..12).filter(move |&pc| self.contains(pc))
    }

    /// Adds `k` semitones (mod 12) to every member.
    pub fn rotate(self, k: i32) -> Self {
        let k = k.rem_euclid(12) as u32;
        let bits = u32::from(self.0);
        let rotated = ((bits << k) | (bits >> (12 - k))) & 0xfff;
        PcSet(rotated as u16)
    }

    pub fn union(self, other: PcSet) -> Self {
        PcSet(self.0 | other.0)
    }
}

impl fmt::Display for PcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, pc) in self.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            write!(f, "{pc}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UnitMode {
    /// Bass pitch class plus the set of the other pitch classes.
    #[default]
    BassTagged,
    /// Plain pitch-class set; inversions collapse.
    PitchClassSet,
}

/// The vocabulary token: one reduced slice.
///
/// In bass-tagged mode `bass` is set and never appears in `upper`. In
/// pitch-class-set mode `bass` is `None` and `upper` holds every pitch class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HarmonicUnit {
    bass: Option<u8>,
    upper: PcSet,
}

impl HarmonicUnit {
    pub fn with_bass(bass_pc: u8, upper: impl IntoIterator<Item = u8>) -> Self {
        let bass_pc = bass_pc % 12;
        let mut upper = PcSet::from_pcs(upper);
        upper.remove(bass_pc);
        Self {
            bass: Some(bass_pc),
            upper,
        }
    }

    pub fn pitch_class_set(pcs: impl IntoIterator<Item = u8>) -> Self {
        Self {
            bass: None,
            upper: PcSet::from_pcs(pcs),
        }
    }

    pub fn reduce(slice: &Slice, mode: UnitMode) -> Self {
        let pcs = slice.pitches().iter().map(|p| p % 12);
        match mode {
            UnitMode::BassTagged => Self::with_bass(slice.bass() % 12, pcs),
            UnitMode::PitchClassSet => Self::pitch_class_set(pcs),
        }
    }

    pub fn bass_pc(&self) -> Option<u8> {
        self.bass
    }

    pub fn upper(&self) -> PcSet {
        self.upper
    }

    /// Every pitch class in the unit, bass included.
    pub fn pitch_classes(&self) -> PcSet {
        match self.bass {
            Some(b) => {
                let mut all = self.upper;
                all.insert(b);
                all
            }
            None => self.upper,
        }
    }

    /// Shifts by `k` semitones modulo 12, for any `k`.
    pub fn shifted(&self, k: i32) -> Self {
        Self {
            bass: self.bass.map(|b| (i32::from(b) + k).rem_euclid(12) as u8),
            upper: self.upper.rotate(k),
        }
    }

    /// Transposition used for corpus augmentation; `k` must lie in -5..=6.
    pub fn transpose(&self, k: i32) -> Result<Self, VocabError> {
        if !TRANSPOSITIONS.contains(&k) {
            return Err(VocabError::TranspositionOutOfRange(k));
        }
        Ok(self.shifted(k))
    }
}

impl fmt::Display for HarmonicUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bass {
            Some(b) => write!(f, "{b}|{}", self.upper),
            None => write!(f, "-|{}", self.upper),
        }
    }
}

/// Dense bijection between harmonic units and integer ids, with counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    mode: UnitMode,
    units: Vec<HarmonicUnit>,
    counts: Vec<u64>,
    index: HashMap<HarmonicUnit, u32>,
}

impl Vocabulary {
    pub fn new(mode: UnitMode) -> Self {
        Self {
            mode,
            units: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn mode(&self) -> UnitMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn id(&self, unit: &HarmonicUnit) -> Option<u32> {
        self.index.get(unit).copied()
    }

    pub fn unit(&self, id: u32) -> Option<&HarmonicUnit> {
        self.units.get(id as usize)
    }

    pub fn units(&self) -> &[HarmonicUnit] {
        &self.units
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Returns the unit's id, assigning the next free id on first sight, and
    /// bumps its count.
    pub fn observe(&mut self, unit: HarmonicUnit) -> u32 {
        let id = *self.index.entry(unit).or_insert_with(|| {
            self.units.push(unit);
            self.counts.push(0);
            (self.units.len() - 1) as u32
        });
        self.counts[id as usize] += 1;
        id
    }

    /// `id<TAB>bass_pc<TAB>pc,pc,...<TAB>count` per line; the bass column is
    /// `-` in pitch-class-set mode.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, (unit, count)) in self.units.iter().zip(&self.counts).enumerate() {
            let bass = unit.bass.map_or_else(|| "-".to_string(), |b| b.to_string());
            let _ = writeln!(out, "{id}\t{bass}\t{}\t{count}", unit.upper);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, VocabError> {
        let mut vocab: Option<Vocabulary> = None;
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| VocabError::Parse {
                line: lineno,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err("expected 4 tab-separated fields"));
            }
            let id: usize = fields[0].parse().map_err(|_| err("bad id"))?;
            let pcs = parse_pcs(fields[2]).ok_or_else(|| err("bad pitch-class list"))?;
            let count: u64 = fields[3].parse().map_err(|_| err("bad count"))?;
            let (unit, mode) = if fields[1] == "-" {
                (HarmonicUnit::pitch_class_set(pcs), UnitMode::PitchClassSet)
            } else {
                let bass: u8 = fields[1]
                    .parse()
                    .ok()
                    .filter(|b| *b < 12)
                    .ok_or_else(|| err("bad bass pitch class"))?;
                if pcs.contains(&bass) {
                    return Err(err("bass repeated among upper pitch classes"));
                }
                (HarmonicUnit::with_bass(bass, pcs), UnitMode::BassTagged)
            };
            let vocab = vocab.get_or_insert_with(|| Vocabulary::new(mode));
            if vocab.mode != mode {
                return Err(err("mixed unit modes"));
            }
            if id != vocab.len() {
                return Err(err("ids must be dense and ascending"));
            }
            if vocab.index.contains_key(&unit) {
                return Err(err("duplicate unit"));
            }
            vocab.index.insert(unit, id as u32);
            vocab.units.push(unit);
            vocab.counts.push(count);
        }
        Ok(vocab.unwrap_or_else(|| Vocabulary::new(UnitMode::BassTagged)))
    }

    /// SHA-256 over the canonical TSV form; binds models to a vocabulary.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_tsv().as_bytes()).into()
    }
}

fn parse_pcs(field: &str) -> Option<Vec<u8>> {
    if field.is_empty() {
        return Some(Vec::new());
    }
    field
        .split(',')
        .map(|p| p.parse::<u8>().ok().filter(|pc| *pc < 12))
        .collect()
}

/// One piece under one transposition, as vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PieceSequence {
    pub piece_id: String,
    pub transposition: i32,
    pub ids: Vec<u32>,
    /// Onset of each unit, parallel to `ids`.
    pub onsets: Vec<Time>,
}

impl PieceSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Vocabulary plus every transposed sequence, piece-major and ordered by
/// transposition within a piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub sequences: Vec<PieceSequence>,
}

impl Corpus {
    /// Piece ids in corpus order.
    pub fn piece_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for s in &self.sequences {
            if ids.last() != Some(&s.piece_id.as_str()) {
                ids.push(&s.piece_id);
            }
        }
        ids
    }

    pub fn sequence(&self, piece_id: &str, transposition: i32) -> Option<&PieceSequence> {
        self.sequences
            .iter()
            .find(|s| s.piece_id == piece_id && s.transposition == transposition)
    }

    pub fn untransposed(&self) -> impl Iterator<Item = &PieceSequence> {
        self.sequences.iter().filter(|s| s.transposition == 0)
    }

    /// `piece_id<TAB>transposition<TAB>id id id ...` per line.
    pub fn sequences_to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sequences {
            let _ = write!(out, "{}\t{}\t", s.piece_id, s.transposition);
            for (i, id) in s.ids.iter().enumerate() {
                let sep = if i == 0 { "" } else { " " };
                let _ = write!(out, "{sep}{id}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a sequence file. Onsets are not part of that format; callers attach
/// them from the slice table.
pub fn parse_sequences(text: &str) -> Result<Vec<(String, i32, Vec<u32>)>, VocabError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let err = |reason: &str| VocabError::Parse {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let mut fields = line.splitn(3, '\t');
        let piece = fields.next().ok_or_else(|| err("missing piece id"))?;
        let k: i32 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("bad transposition"))?;
        let ids = fields
            .next()
            .ok_or_else(|| err("missing ids"))?
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u32>().map_err(|_| err("bad id")))
            .collect::<Result<Vec<_>, _>>()?;
        out.push((piece.to_string(), k, ids));
    }
    Ok(out)
}

pub fn validate_piece_id(id: &str) -> Result<(), VocabError> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == ',') {
        return Err(VocabError::InvalidPieceId(id.to_string()));
    }
    Ok(())
}

/// Reduces every slice, applies the twelve transpositions and assigns ids in
/// first-occurrence order (pieces in input order, transpositions ascending).
pub fn build_corpus(pieces: &[(String, Vec<Slice>)], mode: UnitMode) -> Result<Corpus, VocabError> {
    if pieces.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut seen = std::collections::HashSet::new();
    for (id, slices) in pieces {
        validate_piece_id(id)?;
        if !seen.insert(id.as_str()) {
            return Err(VocabError::DuplicatePiece(id.clone()));
        }
        if slices.is_empty() {
            return Err(VocabError::EmptyPiece(id.clone()));
        }
    }

    let mut vocab = Vocabulary::new(mode);
    let mut sequences = Vec::with_capacity(pieces.len() * 12);
    for (piece_id, slices) in pieces {
        let units: Vec<HarmonicUnit> = slices
            .iter()
            .map(|s| HarmonicUnit::reduce(s, mode))
            .collect();
        let onsets: Vec<Time> = slices.iter().map(|s| s.onset).collect();
        for k in TRANSPOSITIONS {
            let ids = units.iter().map(|u| vocab.observe(u.shifted(k))).collect();
            sequences.push(PieceSequence {
                piece_id: piece_id.clone(),
                transposition: k,
                ids,
                onsets: onsets.clone(),
            });
        }
    }
    Ok(Corpus { vocab, sequences })
}
