//! Synthetic corpora with known structure.
//!
//! [`tonal_corpus`] writes block-chord pieces in random keys. Chord qualities
//! come in planted tiers: major, minor, diminished and augmented are each
//! rarer and more often placed on a root unrelated to the key. Every phrase ends in an
//! annotated cadence. Authentic cadences resolve to the tonic; deceptive ones
//! land on the chromatic flat-sixth triad.
//!
//! [`context_pair_corpus`] is a bare token grammar: two tokens share one set of
//! contexts and a third lives in a disjoint set.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chords::{Inversion, Quality};
use crate::experiments::CadenceCategory;
use crate::score::{Slice, Time};
use crate::vocab::{HarmonicUnit, PieceSequence, UnitMode, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub pieces: usize,
    pub phrases_per_piece: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pieces: 150,
            phrases_per_piece: 8,
            seed: 7,
        }
    }
}

/// A chord relative to the key: root offset, quality and inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChordSpec {
    pub root: u8,
    pub quality: Quality,
    pub inversion: Inversion,
}

impl ChordSpec {
    const fn new(root: u8, quality: Quality, inversion: Inversion) -> Self {
        Self {
            root,
            quality,
            inversion,
        }
    }

    /// Bass in the octave below middle C, remaining tones above it.
    pub fn voicing(&self, key: u8) -> Vec<u8> {
        let root = (key + self.root) % 12;
        let tpl = self.quality.template();
        let bass_pc = (root + tpl[self.inversion as usize]) % 12;
        let mut notes = vec![48 + bass_pc];
        notes.extend(tpl.iter().map(|iv| 60 + (root + iv) % 12));
        notes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPiece {
    pub id: String,
    pub key: u8,
    pub chords: Vec<ChordSpec>,
    pub cadences: Vec<(usize, CadenceCategory)>,
}

impl SynthPiece {
    pub fn slices(&self) -> Vec<Slice> {
        self.chords
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Slice::new(Time::new(i as i64, 4), c.voicing(self.key)).expect("non-empty chord")
            })
            .collect()
    }

    /// Single-spine kern: one quarter-note chord per record, a barline every
    /// four beats.
    pub fn to_kern(&self) -> String {
        let mut out = format!("!!!OTL: {}\n**kern\n*M4/4\n", self.id);
        for (i, c) in self.chords.iter().enumerate() {
            if i > 0 && i % 4 == 0 {
                let _ = writeln!(out, "={}", i / 4 + 1);
            }
            let tokens: Vec<String> = c
                .voicing(self.key)
                .into_iter()
                .map(|p| format!("4{}", kern_pitch(p)))
                .collect();
            let _ = writeln!(out, "{}", tokens.join(" "));
        }
        out.push_str("==\n*-\n");
        out
    }
}

fn kern_pitch(midi: u8) -> String {
    const NAMES: [(&str, &str); 12] = [
        ("c", ""),
        ("c", "#"),
        ("d", ""),
        ("d", "#"),
        ("e", ""),
        ("f", ""),
        ("f", "#"),
        ("g", ""),
        ("g", "#"),
        ("a", ""),
        ("a", "#"),
        ("b", ""),
    ];
    let (letter, acc) = NAMES[usize::from(midi % 12)];
    let octave = i32::from(midi / 12) - 1;
    let name = if octave >= 4 {
        letter.repeat((octave - 3) as usize)
    } else {
        letter.to_uppercase().repeat((4 - octave) as usize)
    };
    format!("{name}{acc}")
}

const TONIC: ChordSpec = ChordSpec::new(0, Quality::Major, Inversion::Root);
const DOMINANT: ChordSpec = ChordSpec::new(7, Quality::Major, Inversion::Root);
const FLAT_SIX: ChordSpec = ChordSpec::new(8, Quality::Major, Inversion::Root);

/// Phrase-body vocabulary with relative weights.
const BODY: [(u8, Quality, f64); 10] = [
    (0, Quality::Major, 30.0),
    (5, Quality::Major, 16.0),
    (7, Quality::Major, 20.0),
    (9, Quality::Minor, 7.0),
    (2, Quality::Minor, 6.0),
    (4, Quality::Minor, 3.0),
    (11, Quality::Diminished, 6.0),
    (7, Quality::Dominant7, 6.0),
    (2, Quality::Minor7, 2.0),
    (0, Quality::Augmented, 0.5),
];

/// Chance that a chord of this quality is placed on a random root instead of
/// its scale degree. Rarer qualities are also looser in context.
pub fn stray_probability(q: Quality) -> f64 {
    match q {
        Quality::Major => 0.0,
        Quality::Minor => 0.2,
        Quality::Diminished => 0.5,
        Quality::Augmented => 1.0,
        _ => 0.1,
    }
}

fn inversion_for(q: Quality, rng: &mut impl Rng) -> Inversion {
    let weights: &[f64] = match q {
        Quality::Major | Quality::Minor => &[0.8, 0.15, 0.05],
        Quality::Diminished => &[0.4, 0.6],
        Quality::Augmented | Quality::Dim7 => &[1.0],
        _ => &[0.7, 0.1, 0.1, 0.1],
    };
    let pick = WeightedIndex::new(weights).expect("static weights").sample(rng);
    [Inversion::Root, Inversion::First, Inversion::Second, Inversion::Third][pick]
}

pub fn tonal_corpus(cfg: &SynthConfig) -> Vec<SynthPiece> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let body = WeightedIndex::new(BODY.iter().map(|b| b.2)).expect("static weights");
    let cadence = WeightedIndex::new([0.5, 0.35, 0.15]).expect("static weights");
    (0..cfg.pieces)
        .map(|p| {
            let key = rng.gen_range(0..12u8);
            let mut chords = vec![TONIC];
            let mut cadences = Vec::new();
            for _ in 0..cfg.phrases_per_piece {
                for _ in 0..rng.gen_range(5..=9) {
                    let (mut root, q, _) = BODY[body.sample(&mut rng)];
                    if rng.gen_bool(stray_probability(q)) {
                        root = rng.gen_range(0..12);
                    }
                    chords.push(ChordSpec::new(root, q, inversion_for(q, &mut rng)));
                }
                let category = [CadenceCategory::Pac, CadenceCategory::Hc, CadenceCategory::Dc]
                    [cadence.sample(&mut rng)];
                match category {
                    CadenceCategory::Pac => chords.extend([DOMINANT, TONIC]),
                    CadenceCategory::Hc => chords.extend([
                        ChordSpec::new(5, Quality::Major, Inversion::Root),
                        DOMINANT,
                    ]),
                    CadenceCategory::Dc => chords.extend([DOMINANT, FLAT_SIX]),
                }
                cadences.push((chords.len() - 1, category));
            }
            SynthPiece {
                id: format!("synth{p:03}"),
                key,
                chords,
                cadences,
            }
        })
        .collect()
}

/// `piece_id,terminal_unit_index,category` rows for every planted cadence.
pub fn annotations_csv(pieces: &[SynthPiece]) -> String {
    let mut out = String::from("piece_id,terminal_unit_index,category\n");
    for p in pieces {
        for (i, c) in &p.cadences {
            let _ = writeln!(out, "{},{},{}", p.id, i, c.name());
        }
    }
    out
}

/// Token grammar with a shared-context pair and a disjoint-context token.
#[derive(Debug, Clone)]
pub struct ContextPairCorpus {
    pub vocab: Vocabulary,
    pub sequences: Vec<PieceSequence>,
    /// Two tokens seen in the same contexts.
    pub pair: (u32, u32),
    /// Token seen only in the other contexts.
    pub outsider: u32,
}

/// Roughly `tokens` tokens in sentences of 50. Each sentence draws filler from
/// one of two disjoint context groups; a fifth of the positions hold a
/// special token. Group one gets either pair token, group two the outsider.
pub fn context_pair_corpus(tokens: usize, seed: u64) -> ContextPairCorpus {
    const GROUP: u32 = 8;
    const LEN: usize = 50;
    let mut vocab = Vocabulary::new(UnitMode::BassTagged);
    let unit = |i: u32| HarmonicUnit::with_bass((i % 12) as u8, [((i % 12) + 1 + i / 12) as u8 % 12]);
    let total_ids = 3 + 2 * GROUP;
    for i in 0..total_ids {
        vocab.observe(unit(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences = Vec::new();
    for s in 0..tokens.div_ceil(LEN) {
        let second = rng.gen_bool(0.5);
        let base = if second { 3 + GROUP } else { 3 };
        let ids: Vec<u32> = (0..LEN)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    if second {
                        2
                    } else {
                        rng.gen_range(0..2)
                    }
                } else {
                    base + rng.gen_range(0..GROUP)
                }
            })
            .collect();
        for &id in &ids {
            vocab.observe(unit(id));
        }
        sequences.push(PieceSequence {
            piece_id: format!("g{s}"),
            transposition: 0,
            onsets: (0..LEN as i64).map(|i| Time::new(i, 4)).collect(),
            ids,
        });
    }
    ContextPairCorpus {
        vocab,
        sequences,
        pair: (0, 1),
        outsider: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chords::classify;
    use crate::score::{full_expansion, parse_kern};
    use crate::vocab::build_corpus;

    #[test]
    fn kern_pitch_spelling() {
        assert_eq!(kern_pitch(60), "c");
        assert_eq!(kern_pitch(61), "c#");
        assert_eq!(kern_pitch(72), "cc");
        assert_eq!(kern_pitch(48), "C");
        assert_eq!(kern_pitch(47), "BB");
    }

    #[test]
    fn kern_round_trips_through_the_parser() {
        let cfg = SynthConfig {
            pieces: 3,
            ..SynthConfig::default()
        };
        for piece in tonal_corpus(&cfg) {
            let events = parse_kern(&piece.to_kern()).unwrap();
            assert_eq!(full_expansion(&events).unwrap(), piece.slices());
        }
    }

    #[test]
    fn cadences_end_where_annotated() {
        let pieces = tonal_corpus(&SynthConfig::default());
        for p in &pieces {
            assert_eq!(p.cadences.last().unwrap().0, p.chords.len() - 1);
            for &(i, c) in &p.cadences {
                let want = match c {
                    CadenceCategory::Pac => TONIC,
                    CadenceCategory::Hc => DOMINANT,
                    CadenceCategory::Dc => FLAT_SIX,
                };
                assert_eq!(p.chords[i], want);
            }
        }
        let csv = annotations_csv(&pieces[..1]);
        assert_eq!(csv.lines().count(), 1 + pieces[0].cadences.len());
    }

    #[test]
    fn root_position_major_count_matches_construction() {
        let pieces = tonal_corpus(&SynthConfig::default());
        let planted = pieces
            .iter()
            .flat_map(|p| &p.chords)
            .filter(|c| c.quality == Quality::Major && c.inversion == Inversion::Root)
            .count();
        let input: Vec<(String, Vec<Slice>)> =
            pieces.iter().map(|p| (p.id.clone(), p.slices())).collect();
        let corpus = build_corpus(&input, UnitMode::BassTagged).unwrap();
        let found = corpus
            .untransposed()
            .flat_map(|s| &s.ids)
            .filter(|&&id| {
                let c = classify(corpus.vocab.unit(id).unwrap());
                matches!(c, Some(c) if c.quality == Quality::Major && c.inversion == Inversion::Root)
            })
            .count();
        assert_eq!(found, planted);
    }

    #[test]
    fn quality_tiers_are_ordered_by_frequency() {
        let pieces = tonal_corpus(&SynthConfig::default());
        let count = |q: Quality| pieces.iter().flat_map(|p| &p.chords).filter(|c| c.quality == q).count();
        let tiers = [Quality::Major, Quality::Minor, Quality::Diminished, Quality::Augmented].map(count);
        assert!(tiers.windows(2).all(|w| w[0] > w[1]), "{tiers:?}");
    }

    #[test]
    fn context_pair_corpus_shape() {
        let c = context_pair_corpus(50_000, 1);
        let n: usize = c.sequences.iter().map(|s| s.len()).sum();
        assert!((50_000..50_050).contains(&n));
        assert_eq!(c.vocab.len(), 19);
        for s in &c.sequences {
            let has_pair = s.ids.iter().any(|&i| i < 2);
            let has_out = s.ids.contains(&2);
            assert!(!(has_pair && has_out));
        }
    }
}
