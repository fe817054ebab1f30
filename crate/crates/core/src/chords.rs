//! Template classification of harmonic units into type, quality and
//! inversion, plus seeded per-condition sampling.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::vocab::{HarmonicUnit, PcSet, PieceSequence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordType {
    Triad,
    Seventh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Major,
    Minor,
    Diminished,
    Augmented,
    Dominant7,
    Major7,
    Minor7,
    Halfdim7,
    Dim7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inversion {
    Root,
    First,
    Second,
    Third,
}

impl Quality {
    pub const ALL: [Quality; 9] = [
        Quality::Major,
        Quality::Minor,
        Quality::Diminished,
        Quality::Augmented,
        Quality::Dominant7,
        Quality::Major7,
        Quality::Minor7,
        Quality::Halfdim7,
        Quality::Dim7,
    ];

    /// Intervals above the root.
    pub fn template(self) -> &'static [u8] {
        match self {
            Quality::Major => &[0, 4, 7],
            Quality::Minor => &[0, 3, 7],
            Quality::Diminished => &[0, 3, 6],
            Quality::Augmented => &[0, 4, 8],
            Quality::Dominant7 => &[0, 4, 7, 10],
            Quality::Major7 => &[0, 4, 7, 11],
            Quality::Minor7 => &[0, 3, 7, 10],
            Quality::Halfdim7 => &[0, 3, 6, 10],
            Quality::Dim7 => &[0, 3, 6, 9],
        }
    }

    pub fn chord_type(self) -> ChordType {
        if self.template().len() == 3 {
            ChordType::Triad
        } else {
            ChordType::Seventh
        }
    }

    /// Augmented triads and diminished sevenths map onto themselves under
    /// transposition by a chord member, so their root is ambiguous.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Quality::Augmented | Quality::Dim7)
    }

    fn set(self) -> PcSet {
        PcSet::from_pcs(self.template().iter().copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            Quality::Major => "major",
            Quality::Minor => "minor",
            Quality::Diminished => "diminished",
            Quality::Augmented => "augmented",
            Quality::Dominant7 => "dominant7",
            Quality::Major7 => "major7",
            Quality::Minor7 => "minor7",
            Quality::Halfdim7 => "halfdim7",
            Quality::Dim7 => "dim7",
        }
    }
}

impl ChordType {
    pub fn name(self) -> &'static str {
        match self {
            ChordType::Triad => "triad",
            ChordType::Seventh => "seventh",
        }
    }
}

impl Inversion {
    pub fn name(self) -> &'static str {
        match self {
            Inversion::Root => "root",
            Inversion::First => "first",
            Inversion::Second => "second",
            Inversion::Third => "third",
        }
    }

    fn from_interval(semitones: u8) -> Inversion {
        match semitones {
            0 => Inversion::Root,
            3 | 4 => Inversion::First,
            6..=8 => Inversion::Second,
            _ => Inversion::Third,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChordClass {
    pub chord_type: ChordType,
    pub quality: Quality,
    pub inversion: Inversion,
}

impl ChordClass {
    pub fn new(quality: Quality, inversion: Inversion) -> Option<Self> {
        if inversion == Inversion::Third && quality.chord_type() == ChordType::Triad {
            return None;
        }
        Some(Self {
            chord_type: quality.chord_type(),
            quality,
            inversion,
        })
    }
}

impl fmt::Display for ChordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.chord_type.name(),
            self.quality.name(),
            self.inversion.name()
        )
    }
}

/// Template match on the full pitch-class content of `unit`.
///
/// `None` means unclassified. Symmetric chords take the bass as root. Units
/// without a bass (pitch-class-set mode) are reported in root position.
pub fn classify(unit: &HarmonicUnit) -> Option<ChordClass> {
    let pcs = unit.pitch_classes();
    if !(3..=4).contains(&pcs.len()) {
        return None;
    }
    let bass = unit.bass_pc();
    for quality in Quality::ALL {
        if quality.template().len() != pcs.len() {
            continue;
        }
        let template = quality.set();
        for root in 0..12u8 {
            if pcs.rotate(-i32::from(root)) != template {
                continue;
            }
            let inversion = match bass {
                _ if quality.is_symmetric() => Inversion::Root,
                Some(b) => Inversion::from_interval((b + 12 - root) % 12),
                None => Inversion::Root,
            };
            return ChordClass::new(quality, inversion);
        }
    }
    None
}

/// Classification of every id in `vocab`, indexed by id.
pub fn classify_vocabulary(vocab: &Vocabulary) -> Vec<Option<ChordClass>> {
    vocab.units().iter().map(classify).collect()
}

pub const CLASSIFY_CSV_HEADER: &str = "piece_id,unit_index,type,quality,inversion";

/// Rows of the classification dump for one sequence. Unclassified units get
/// `unclassified` in the type column and empty quality and inversion.
pub fn classification_rows(seq: &PieceSequence, by_id: &[Option<ChordClass>], out: &mut String) {
    use std::fmt::Write as _;
    for (i, &id) in seq.ids.iter().enumerate() {
        let _ = match by_id.get(id as usize).copied().flatten() {
            Some(c) => writeln!(
                out,
                "{},{},{},{},{}",
                seq.piece_id,
                i,
                c.chord_type.name(),
                c.quality.name(),
                c.inversion.name()
            ),
            None => writeln!(out, "{},{},unclassified,,", seq.piece_id, i),
        };
    }
}

/// Sampled members per condition, plus the conditions that came up short.
pub type Sampled<K, T> = (BTreeMap<K, Vec<T>>, Vec<(K, usize)>);

/// Uniform sample without replacement of up to `per_condition` members of
/// each condition. Members keep their original relative order. The second
/// value lists conditions that had fewer members than requested.
pub fn sample_conditions<K, T, R>(
    members: &BTreeMap<K, Vec<T>>,
    per_condition: usize,
    rng: &mut R,
) -> Sampled<K, T>
where
    K: Ord + Clone + fmt::Display,
    T: Clone,
    R: Rng + ?Sized,
{
    assert!(per_condition >= 1, "per_condition must be at least 1");
    let mut picked = BTreeMap::new();
    let mut short = Vec::new();
    for (key, items) in members {
        if items.len() <= per_condition {
            if items.len() < per_condition {
                log::warn!(
                    "condition {key} has {} members, fewer than {per_condition}",
                    items.len()
                );
                short.push((key.clone(), items.len()));
            }
            picked.insert(key.clone(), items.clone());
            continue;
        }
        let mut idx = rand::seq::index::sample(rng, items.len(), per_condition).into_vec();
        idx.sort_unstable();
        picked.insert(key.clone(), idx.into_iter().map(|i| items[i].clone()).collect());
    }
    (picked, short)
}
