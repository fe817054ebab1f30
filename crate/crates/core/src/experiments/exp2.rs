use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::output::{omnibus, planned, summarize, table_csv, TestReport, METHOD_NOTE};
use super::{
    corpus_digest, held_out_sets, sampling_rng, train_folds, ArtifactHeader, CadenceAnnotation,
    CadenceCategory, ExperimentConfig, ExperimentError, TableRow,
};
use crate::chords::sample_conditions;
use crate::stats::bonferroni;
use crate::vocab::Corpus;

/// Planned comparisons in the cadence family.
pub const EXP2_FAMILY: usize = 5;
pub const BASELINE_GROUP: &str = "non-cadential";

#[derive(Debug, Clone, PartialEq)]
pub struct CadenceObservation {
    pub piece_id: String,
    pub unit_index: usize,
    /// Cadence category name or [`BASELINE_GROUP`].
    pub group: String,
    pub fold: usize,
    pub tension: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Result {
    pub header: ArtifactHeader,
    pub observations: Vec<CadenceObservation>,
    pub table: Vec<TableRow>,
    pub report: TestReport,
}

impl Exp2Result {
    pub fn chords_csv(&self) -> String {
        let mut out = self.header.comment_lines();
        out.push_str("piece_id,unit_index,group,fold,tension\n");
        for o in &self.observations {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                o.piece_id, o.unit_index, o.group, o.fold, o.tension
            );
        }
        out
    }

    pub fn files(&self) -> Vec<(String, String)> {
        vec![
            ("exp2_fig4_cadences.csv".into(), table_csv(&self.header, &self.table)),
            ("exp2_chords.csv".into(), self.chords_csv()),
            ("exp2_tests.json".into(), self.report.to_json()),
        ]
    }

    pub fn group(&self, name: &str) -> Vec<f64> {
        self.observations
            .iter()
            .filter(|o| o.group == name)
            .map(|o| o.tension)
            .collect()
    }
}

/// Folds partition the annotated pieces only; the rest always train. The
/// baseline is drawn from non-terminal units of held-out pieces.
pub fn run_experiment2(
    corpus: &Corpus,
    annotations: &[CadenceAnnotation],
    cfg: &ExperimentConfig,
) -> Result<Exp2Result, ExperimentError> {
    cfg.validate()?;
    if annotations.is_empty() {
        return Err(ExperimentError::NoAnnotations);
    }
    let mut terminals: BTreeMap<&str, BTreeMap<usize, CadenceCategory>> = BTreeMap::new();
    for (line, a) in annotations.iter().enumerate() {
        let Some(seq) = corpus.sequence(&a.piece_id, 0) else {
            return Err(ExperimentError::UnknownPiece {
                line: line + 1,
                piece_id: a.piece_id.clone(),
            });
        };
        if a.terminal_unit_index == 0 || a.terminal_unit_index >= seq.len() {
            return Err(ExperimentError::IndexOutOfRange {
                line: line + 1,
                piece_id: a.piece_id.clone(),
                index: a.terminal_unit_index,
                len: seq.len(),
            });
        }
        terminals
            .entry(&a.piece_id)
            .or_default()
            .insert(a.terminal_unit_index, a.category);
    }
    let annotated: Vec<String> = terminals.keys().map(|s| (*s).to_owned()).collect();
    let held = held_out_sets(&annotated, cfg)?;
    let models = train_folds(corpus, &held, cfg)?;

    let mut cadential = Vec::new();
    let mut candidates = Vec::new();
    for m in &models {
        for piece in &m.held_out {
            let seq = corpus.sequence(piece, 0).expect("annotated piece present");
            let series = m.scorer.series(seq)?;
            let marks = &terminals[piece.as_str()];
            for (t, v) in series.defined() {
                let (group, sink) = match marks.get(&t) {
                    Some(c) => (c.name(), &mut cadential),
                    None => (BASELINE_GROUP, &mut candidates),
                };
                sink.push(CadenceObservation {
                    piece_id: piece.clone(),
                    unit_index: t,
                    group: group.to_owned(),
                    fold: m.fold,
                    tension: v,
                });
            }
        }
    }
    let by_position = |a: &CadenceObservation, b: &CadenceObservation| {
        (&a.piece_id, a.unit_index).cmp(&(&b.piece_id, b.unit_index))
    };
    cadential.sort_by(by_position);
    candidates.sort_by(by_position);
    let pool = BTreeMap::from([(BASELINE_GROUP.to_owned(), candidates)]);
    let mut rng = sampling_rng(cfg, 2);
    let (mut sampled, _) = sample_conditions(&pool, cfg.baseline, &mut rng);
    let baseline = sampled.remove(BASELINE_GROUP).unwrap_or_default();

    let values = |group: &str| -> Vec<f64> {
        cadential
            .iter()
            .chain(&baseline)
            .filter(|o| o.group == group)
            .map(|o| o.tension)
            .collect()
    };
    let pac = values("PAC");
    let hc = values("HC");
    let dc = values("DC");
    let base = values(BASELINE_GROUP);
    let groups: [(&str, &[f64]); 4] = [("PAC", &pac), ("HC", &hc), ("DC", &dc), (BASELINE_GROUP, &base)];
    let table = groups.iter().filter_map(|(g, v)| summarize(g, v)).collect();

    let alpha = bonferroni(cfg.alpha, EXP2_FAMILY)?;
    let hypotheses = [
        planned("H1", groups[0], groups[3], alpha),
        planned("H2", groups[0], groups[1], alpha),
        planned("H3", groups[0], groups[2], alpha),
        planned("H4", groups[0], groups[1], alpha),
        planned("H4", groups[1], groups[2], alpha),
    ]
    .into_iter()
    .flatten()
    .collect();
    let omnibus_results = omnibus("cadence_category", &groups[..3], cfg.alpha)
        .into_iter()
        .collect();

    let header = ArtifactHeader::new(cfg.digest(), corpus_digest(corpus), cfg.seed);
    let report = TestReport {
        experiment: "exp2".into(),
        header: header.clone(),
        family_alpha: cfg.alpha,
        family_size: EXP2_FAMILY,
        alpha_effective: alpha,
        method: METHOD_NOTE.into(),
        hypotheses,
        omnibus: omnibus_results,
    };
    let mut observations = cadential;
    observations.extend(baseline);
    Ok(Exp2Result {
        header,
        observations,
        table,
        report,
    })
}
