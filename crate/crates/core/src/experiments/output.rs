use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::stats::{mean_se, oneway_anova, welch_t, ReportEntry};

pub const TABLE_CSV_HEADER: &str = "group,mean,se,count";

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub tool: String,
    pub version: String,
    pub config_digest: String,
    pub corpus_digest: String,
    pub seed: u64,
}

impl ArtifactHeader {
    pub fn new(config_digest: String, corpus_digest: String, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_digest,
            corpus_digest,
            seed,
        }
    }

    /// `# key: value` lines for CSV outputs.
    pub fn comment_lines(&self) -> String {
        format!(
            "# tool: {} {}\n# config_digest: {}\n# corpus_digest: {}\n# seed: {}\n",
            self.tool, self.version, self.config_digest, self.corpus_digest, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub group: String,
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

/// Mean and SE of one group; groups with fewer than two values are dropped
/// with a warning.
pub(crate) fn summarize(group: &str, values: &[f64]) -> Option<TableRow> {
    match mean_se(values) {
        Ok((mean, se)) => Some(TableRow {
            group: group.to_owned(),
            mean,
            se,
            count: values.len(),
        }),
        Err(_) => {
            log::warn!("group {group} has {} values; omitted from table", values.len());
            None
        }
    }
}

pub(crate) fn table_csv(header: &ArtifactHeader, rows: &[TableRow]) -> String {
    let mut out = header.comment_lines();
    out.push_str(TABLE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.group, r.mean, r.se, r.count);
    }
    out
}

/// A directional planned comparison: `lower` is predicted to have the lower
/// mean tension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisOutcome {
    #[serde(flatten)]
    pub entry: ReportEntry,
    pub prediction: String,
    /// Significant and in the predicted direction.
    pub supported: bool,
}

pub(crate) fn planned(
    hypothesis: &str,
    (lower_name, lower): (&str, &[f64]),
    (higher_name, higher): (&str, &[f64]),
    alpha: f64,
) -> Option<HypothesisOutcome> {
    match welch_t(lower, higher) {
        Ok(r) => {
            let r = r.at_alpha(alpha);
            Some(HypothesisOutcome {
                entry: ReportEntry::new(hypothesis, "welch_t", &[lower_name, higher_name], &r),
                prediction: format!("{lower_name} < {higher_name}"),
                supported: r.significant && r.statistic < 0.0,
            })
        }
        Err(e) => {
            log::warn!("{hypothesis} ({lower_name} < {higher_name}) skipped: {e}");
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmnibusOutcome {
    #[serde(flatten)]
    pub entry: ReportEntry,
    pub partial_eta_sq: f64,
}

pub(crate) fn omnibus(
    name: &str,
    groups: &[(&str, &[f64])],
    alpha: f64,
) -> Option<OmnibusOutcome> {
    let usable: Vec<&(&str, &[f64])> = groups.iter().filter(|g| g.1.len() >= 2).collect();
    let values: Vec<&[f64]> = usable.iter().map(|g| g.1).collect();
    let names: Vec<&str> = usable.iter().map(|g| g.0).collect();
    match oneway_anova(&values) {
        Ok(a) => Some(OmnibusOutcome {
            entry: ReportEntry::new(name, "oneway_anova", &names, &a.test.at_alpha(alpha)),
            partial_eta_sq: a.partial_eta_sq,
        }),
        Err(e) => {
            log::warn!("omnibus {name} skipped: {e}");
            None
        }
    }
}

pub const METHOD_NOTE: &str = "Omnibus tests are classical one-way ANOVAs; directional decisions \
use Welch t tests with Bonferroni correction in place of heteroscedasticity-corrected ANOVA. \
Trends are tested as successive Welch comparisons.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub experiment: String,
    #[serde(flatten)]
    pub header: ArtifactHeader,
    pub family_alpha: f64,
    pub family_size: usize,
    pub alpha_effective: f64,
    pub method: String,
    pub hypotheses: Vec<HypothesisOutcome>,
    pub omnibus: Vec<OmnibusOutcome>,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_table_layout() {
        let h = ArtifactHeader::new("ab".into(), "cd".into(), 9);
        let rows = vec![summarize("x", &[0.0, 2.0]).unwrap()];
        let csv = table_csv(&h, &rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# tool: harmonic-tension "));
        assert_eq!(lines[1], "# config_digest: ab");
        assert_eq!(lines[3], "# seed: 9");
        assert_eq!(lines[4], TABLE_CSV_HEADER);
        assert_eq!(lines[5], "x,1,1,2");
        assert!(summarize("y", &[1.0]).is_none());
    }

    #[test]
    fn planned_comparison_direction() {
        let lo = [1.0, 1.1, 0.9, 1.05];
        let hi = [5.0, 5.2, 4.9, 5.1];
        let h = planned("H", ("lo", &lo), ("hi", &hi), 0.01).unwrap();
        assert!(h.supported && h.entry.statistic < 0.0);
        let h = planned("H", ("hi", &hi), ("lo", &lo), 0.01).unwrap();
        assert!(h.entry.significant && !h.supported);
        assert!(planned("H", ("a", &[1.0]), ("b", &hi), 0.01).is_none());
    }

    #[test]
    fn omnibus_drops_small_groups() {
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 3.0, 4.0];
        let o = omnibus("o", &[("a", &a), ("b", &b), ("c", &[9.0])], 0.05).unwrap();
        assert_eq!(o.entry.groups, ["a", "b"]);
        assert!(omnibus("o", &[("a", &a)], 0.05).is_none());
    }
}
