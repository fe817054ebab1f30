use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::output::{omnibus, planned, summarize, table_csv, TestReport, METHOD_NOTE};
use super::{
    corpus_digest, held_out_sets, sampling_rng, train_folds, ArtifactHeader, ExperimentConfig,
    ExperimentError, HypothesisOutcome, TableRow,
};
use crate::chords::{classify_vocabulary, sample_conditions, ChordClass, ChordType, Inversion, Quality};
use crate::stats::bonferroni;
use crate::vocab::Corpus;

/// Planned comparisons in the chord-category family.
pub const EXP1_FAMILY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ChordObservation {
    pub piece_id: String,
    pub unit_index: usize,
    pub class: ChordClass,
    pub fold: usize,
    pub tension: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Result {
    pub header: ArtifactHeader,
    /// Sampled observations, by condition then piece and unit.
    pub observations: Vec<ChordObservation>,
    /// `(file stem, rows)` for each figure table.
    pub tables: Vec<(String, Vec<TableRow>)>,
    pub report: TestReport,
    /// Conditions with fewer members than the sampling cap.
    pub short_conditions: Vec<(ChordClass, usize)>,
}

impl Exp1Result {
    pub fn table(&self, stem: &str) -> Option<&[TableRow]> {
        self.tables
            .iter()
            .find(|(s, _)| s == stem)
            .map(|(_, r)| r.as_slice())
    }

    pub fn chords_csv(&self) -> String {
        let mut out = self.header.comment_lines();
        out.push_str("piece_id,unit_index,type,quality,inversion,fold,tension\n");
        for o in &self.observations {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                o.piece_id,
                o.unit_index,
                o.class.chord_type.name(),
                o.class.quality.name(),
                o.class.inversion.name(),
                o.fold,
                o.tension
            );
        }
        out
    }

    /// Every output file as `(name, contents)`.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut files: Vec<(String, String)> = self
            .tables
            .iter()
            .map(|(stem, rows)| (format!("{stem}.csv"), table_csv(&self.header, rows)))
            .collect();
        files.push(("exp1_chords.csv".into(), self.chords_csv()));
        files.push(("exp1_tests.json".into(), self.report.to_json()));
        files
    }
}

type Groups = [(&'static str, Vec<f64>)];

fn pick<'a>(groups: &'a Groups, i: usize, label: &'static str) -> (&'static str, &'a [f64]) {
    (label, groups[i].1.as_slice())
}

fn slices(groups: &Groups) -> Vec<(&'static str, &[f64])> {
    groups.iter().map(|(g, v)| (*g, v.as_slice())).collect()
}

const TRIAD_QUALITIES: [Quality; 4] = [
    Quality::Major,
    Quality::Minor,
    Quality::Diminished,
    Quality::Augmented,
];
const TRIAD_INVERSIONS: [Inversion; 3] = [Inversion::Root, Inversion::First, Inversion::Second];

pub fn run_experiment1(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<Exp1Result, ExperimentError> {
    cfg.validate()?;
    let pieces: Vec<String> = corpus.piece_ids().into_iter().map(str::to_owned).collect();
    let held = held_out_sets(&pieces, cfg)?;
    let models = train_folds(corpus, &held, cfg)?;
    let classes = classify_vocabulary(&corpus.vocab);

    let mut by_class: BTreeMap<ChordClass, Vec<ChordObservation>> = BTreeMap::new();
    for m in &models {
        for piece in &m.held_out {
            let Some(seq) = corpus.sequence(piece, 0) else {
                continue;
            };
            if seq.len() < 2 {
                log::warn!("piece {piece} has fewer than 2 units; skipped");
                continue;
            }
            let series = m.scorer.series(seq)?;
            for (t, v) in series.defined() {
                if let Some(class) = classes[seq.ids[t] as usize] {
                    by_class.entry(class).or_default().push(ChordObservation {
                        piece_id: piece.clone(),
                        unit_index: t,
                        class,
                        fold: m.fold,
                        tension: v,
                    });
                }
            }
        }
    }
    for obs in by_class.values_mut() {
        obs.sort_by(|a, b| (&a.piece_id, a.unit_index).cmp(&(&b.piece_id, b.unit_index)));
    }
    let mut rng = sampling_rng(cfg, 1);
    let (sampled, short_conditions) = sample_conditions(&by_class, cfg.per_condition, &mut rng);

    let values = |pred: &dyn Fn(&ChordClass) -> bool| -> Vec<f64> {
        sampled
            .iter()
            .filter(|(c, _)| pred(c))
            .flat_map(|(_, o)| o.iter().map(|o| o.tension))
            .collect()
    };
    let inversion_groups = |q: Quality| -> Vec<(&'static str, Vec<f64>)> {
        TRIAD_INVERSIONS
            .iter()
            .map(|&inv| (inv.name(), values(&|c| c.quality == q && c.inversion == inv)))
            .collect()
    };
    let major = inversion_groups(Quality::Major);
    let minor = inversion_groups(Quality::Minor);
    let qualities: Vec<(&'static str, Vec<f64>)> = TRIAD_QUALITIES
        .iter()
        .map(|&q| (q.name(), values(&|c| c.quality == q)))
        .collect();
    let types: Vec<(&'static str, Vec<f64>)> = [ChordType::Triad, ChordType::Seventh]
        .iter()
        .map(|&t| (t.name(), values(&|c| c.chord_type == t)))
        .collect();

    let rows = |groups: &[(&str, Vec<f64>)]| -> Vec<TableRow> {
        groups.iter().filter_map(|(g, v)| summarize(g, v)).collect()
    };
    let tables = vec![
        ("exp1_fig2a_major_inversions".to_owned(), rows(&major)),
        ("exp1_fig2b_minor_inversions".to_owned(), rows(&minor)),
        ("exp1_fig3a_triad_qualities".to_owned(), rows(&qualities)),
        ("exp1_fig3b_triads_sevenths".to_owned(), rows(&types)),
    ];

    let alpha = bonferroni(cfg.alpha, EXP1_FAMILY)?;
    let maj = |i, label| pick(&major, i, label);
    let min = |i, label| pick(&minor, i, label);
    let mut hypotheses: Vec<Option<HypothesisOutcome>> = vec![
        planned("H1", maj(0, "major_root"), maj(1, "major_first"), alpha),
        planned("H1", maj(2, "major_second"), maj(1, "major_first"), alpha),
        planned("H2", min(0, "minor_root"), min(1, "minor_first"), alpha),
        planned("H2", min(0, "minor_root"), min(2, "minor_second"), alpha),
    ];
    for i in 0..qualities.len() - 1 {
        hypotheses.push(planned(
            "H3",
            pick(&qualities, i, qualities[i].0),
            pick(&qualities, i + 1, qualities[i + 1].0),
            alpha,
        ));
    }
    hypotheses.push(planned("H4", pick(&types, 0, "triad"), pick(&types, 1, "seventh"), alpha));

    let omnibus_results = [
        omnibus("major_inversion", &slices(&major), cfg.alpha),
        omnibus("minor_inversion", &slices(&minor), cfg.alpha),
        omnibus("triad_quality", &slices(&qualities), cfg.alpha),
    ]
    .into_iter()
    .flatten()
    .collect();

    let header = ArtifactHeader::new(cfg.digest(), corpus_digest(corpus), cfg.seed);
    let report = TestReport {
        experiment: "exp1".into(),
        header: header.clone(),
        family_alpha: cfg.alpha,
        family_size: EXP1_FAMILY,
        alpha_effective: alpha,
        method: METHOD_NOTE.into(),
        hypotheses: hypotheses.into_iter().flatten().collect(),
        omnibus: omnibus_results,
    };
    Ok(Exp1Result {
        header,
        observations: sampled.into_values().flatten().collect(),
        tables,
        report,
        short_conditions,
    })
}
