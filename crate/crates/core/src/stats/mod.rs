//! Descriptive statistics and the hypothesis tests used by the experiments.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::{f_sf, student_t_two_sided};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("need at least 2 groups, found {found}")]
    TooFewGroups { found: usize },
    #[error("samples contain a non-finite value")]
    NonFinite,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

pub const DEFAULT_ALPHA: f64 = 0.05;

fn check(samples: &[f64], needed: usize) -> Result<(), StatsError> {
    if samples.len() < needed {
        return Err(StatsError::TooFewSamples {
            needed,
            found: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn variance(samples: &[f64]) -> f64 {
    let m = mean(samples);
    samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
}

/// Mean and standard error `sd / √n`.
pub fn mean_se(samples: &[f64]) -> Result<(f64, f64), StatsError> {
    check(samples, 2)?;
    let n = samples.len() as f64;
    Ok((mean(samples), (variance(samples) / n).sqrt()))
}

/// Degrees of freedom: one value for t tests, a pair for F tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    One(f64),
    Two(f64, f64),
}

impl std::fmt::Display for Df {
    /// Whole numbers print without decimals, fractional Welch dfs with two.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let one = |f: &mut std::fmt::Formatter<'_>, x: f64| {
            if x.fract() == 0.0 {
                write!(f, "{x}")
            } else {
                write!(f, "{x:.2}")
            }
        };
        match *self {
            Df::One(a) => one(f, a),
            Df::Two(a, b) => {
                one(f, a)?;
                f.write_str(", ")?;
                one(f, b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: Df,
    pub p_value: f64,
    pub alpha_effective: f64,
    pub significant: bool,
}

impl TestResult {
    fn new(statistic: f64, df: Df, p_value: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            df,
            p_value,
            alpha_effective: DEFAULT_ALPHA,
            significant: p_value < DEFAULT_ALPHA,
        }
    }

    /// Same test judged against another threshold.
    pub fn at_alpha(self, alpha: f64) -> Self {
        Self {
            alpha_effective: alpha,
            significant: self.p_value < alpha,
            ..self
        }
    }
}

/// Per-comparison threshold for a family of `m` tests.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    Ok(alpha / m.max(1) as f64)
}

fn t_from_parts(diff: f64, se2: f64, df: f64) -> TestResult {
    if se2 == 0.0 {
        // Both groups constant: equal means are indistinguishable, unequal
        // ones are separated with certainty.
        return if diff == 0.0 {
            TestResult::new(0.0, Df::One(df), 1.0)
        } else {
            TestResult::new(diff.signum() * f64::INFINITY, Df::One(df), 0.0)
        };
    }
    let t = diff / se2.sqrt();
    TestResult::new(t, Df::One(df), student_t_two_sided(t, df))
}

/// Welch's unequal-variance t test of `mean(a) - mean(b)`, two-sided.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    check(a, 2)?;
    check(b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let se2 = va + vb;
    let df = if se2 == 0.0 {
        na + nb - 2.0
    } else {
        se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
    };
    Ok(t_from_parts(mean(a) - mean(b), se2, df))
}

/// Student's pooled-variance t test, two-sided.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    check(a, 2)?;
    check(b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp2 = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / df;
    Ok(t_from_parts(mean(a) - mean(b), sp2 * (1.0 / na + 1.0 / nb), df))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub test: TestResult,
    pub partial_eta_sq: f64,
    pub ss_between: f64,
    pub ss_within: f64,
}

/// Classical one-way ANOVA.
pub fn oneway_anova(groups: &[&[f64]]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            found: groups.len(),
        });
    }
    for g in groups {
        check(g, 2)?;
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let d1 = (groups.len() - 1) as f64;
    let d2 = (n - groups.len()) as f64;
    let df = Df::Two(d1, d2);
    let test = if ss_within == 0.0 {
        if ss_between == 0.0 {
            TestResult::new(0.0, df, 1.0)
        } else {
            TestResult::new(f64::INFINITY, df, 0.0)
        }
    } else {
        let f = (ss_between / d1) / (ss_within / d2);
        TestResult::new(f, df, f_sf(f, d1, d2))
    };
    let total = ss_between + ss_within;
    Ok(AnovaResult {
        test,
        partial_eta_sq: if total > 0.0 { ss_between / total } else { 0.0 },
        ss_between,
        ss_within,
    })
}

/// Welch comparisons of each group against its successor, `groups[i]` minus
/// `groups[i + 1]`. An ascending trend shows up as negative statistics.
pub fn trend_contrast(
    groups: &[&[f64]],
    alpha_effective: f64,
) -> Result<Vec<TestResult>, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            found: groups.len(),
        });
    }
    groups
        .windows(2)
        .map(|w| welch_t(w[0], w[1]).map(|r| r.at_alpha(alpha_effective)))
        .collect()
}

/// One line of the JSON test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub hypothesis: String,
    pub test: String,
    pub groups: Vec<String>,
    pub statistic: f64,
    pub df: Df,
    pub p: f64,
    pub alpha_effective: f64,
    pub significant: bool,
}

impl ReportEntry {
    pub fn new(hypothesis: &str, test: &str, groups: &[&str], r: &TestResult) -> Self {
        Self {
            hypothesis: hypothesis.to_owned(),
            test: test.to_owned(),
            groups: groups.iter().map(|g| (*g).to_owned()).collect(),
            statistic: r.statistic,
            df: r.df,
            p: r.p_value,
            alpha_effective: r.alpha_effective,
            significant: r.significant,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normals(rng: &mut impl Rng, n: usize, mu: f64, sd: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
                mu + sd * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect()
    }

    #[test]
    fn df_display() {
        assert_eq!(Df::One(8.0).to_string(), "8");
        assert_eq!(Df::One(7.456).to_string(), "7.46");
        assert_eq!(Df::Two(2.0, 27.0).to_string(), "2, 27");
    }

    #[test]
    fn mean_se_examples() {
        assert_eq!(mean_se(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        let (m, se) = mean_se(&[0.0, 2.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-15 && (se - 1.0).abs() < 1e-15);
        assert_eq!(
            mean_se(&[3.0]),
            Err(StatsError::TooFewSamples { needed: 2, found: 1 })
        );
        assert_eq!(mean_se(&[1.0, f64::NAN]), Err(StatsError::NonFinite));
    }

    #[test]
    fn standard_error_of_a_thousand_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, se) = mean_se(&normals(&mut rng, 1000, 0.0, 1.0)).unwrap();
        assert!((se / 0.031_622_776 - 1.0).abs() < 0.2, "se {se}");
    }

    #[test]
    fn welch_reference_values() {
        let r = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.statistic + 1.0).abs() < 1e-12);
        assert!(matches!(r.df, Df::One(d) if (d - 8.0).abs() < 1e-12));
        assert!((r.p_value - 0.346_593_507_087_334_16).abs() < 1e-10);

        let r = welch_t(&[1.0, 2.5, 3.1, 4.7], &[2.2, 3.9, 5.0, 6.1, 7.3]).unwrap();
        assert!((r.statistic + 1.778_889_115_709_547_4).abs() < 1e-10);
        assert!(matches!(r.df, Df::One(d) if (d - 6.999_903_503_844_337).abs() < 1e-9));
        assert!((r.p_value - 0.118_487_780_766_036_94).abs() < 1e-10);
    }

    #[test]
    fn welch_degenerate_groups() {
        let r = welch_t(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = welch_t(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!((r.statistic, r.p_value), (f64::NEG_INFINITY, 0.0));
        let same = [0.3, 1.2, -0.4, 2.2];
        let r = welch_t(&same, &same).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn separated_groups_are_overwhelmingly_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = normals(&mut rng, 30, 0.0, 1.0);
        let b = normals(&mut rng, 30, 100.0, 1.0);
        assert!(welch_t(&a, &b).unwrap().p_value < 1e-10);
    }

    #[test]
    fn anova_reference_values() {
        let g1 = [1.0, 2.5, 3.1, 4.7];
        let g2 = [2.2, 3.9, 5.0, 6.1, 7.3];
        let g3 = [0.5, 0.9, 1.4];
        let r = oneway_anova(&[&g1, &g2, &g3]).unwrap();
        assert!((r.test.statistic - 5.969_314_341_775_370_5).abs() < 1e-10);
        assert_eq!(r.test.df, Df::Two(2.0, 9.0));
        assert!((r.test.p_value - 0.022_378_152_714_276_16).abs() < 1e-10);
        let eta = r.ss_between / (r.ss_between + r.ss_within);
        assert!((r.partial_eta_sq - eta).abs() < 1e-15 && eta > 0.0 && eta < 1.0);
    }

    #[test]
    fn anova_degenerate_and_errors() {
        let c = [4.0, 4.0, 4.0];
        let r = oneway_anova(&[&c, &c]).unwrap();
        assert_eq!((r.test.statistic, r.test.p_value, r.partial_eta_sq), (0.0, 1.0, 0.0));
        assert_eq!(
            oneway_anova(&[&c]).unwrap_err(),
            StatsError::TooFewGroups { found: 1 }
        );
    }

    #[test]
    fn anova_null_and_planted_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut small = 0;
        for _ in 0..200 {
            let g: Vec<Vec<f64>> = (0..3).map(|_| normals(&mut rng, 30, 0.0, 1.0)).collect();
            let r = oneway_anova(&[&g[0], &g[1], &g[2]]).unwrap();
            if r.test.p_value < 0.05 {
                small += 1;
            }
            assert!(r.test.p_value > 1e-4);
        }
        // Null rejection rate near 5 %: binomial(200, 0.05) lies in 2..=20 with
        // overwhelming probability.
        assert!((2..=20).contains(&small), "{small} rejections");
        let g: Vec<Vec<f64>> = (0..3).map(|i| normals(&mut rng, 100, i as f64, 1.0)).collect();
        assert!(oneway_anova(&[&g[0], &g[1], &g[2]]).unwrap().test.p_value < 1e-6);
    }

    #[test]
    fn bonferroni_family_of_eight() {
        assert!((bonferroni(0.05, 8).unwrap() - 0.00625).abs() < 1e-15);
        assert!(bonferroni(0.0, 8).is_err());
    }

    #[test]
    fn trend_on_planted_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let g: Vec<Vec<f64>> = (0..4).map(|i| normals(&mut rng, 200, i as f64, 1.0)).collect();
        let refs: Vec<&[f64]> = g.iter().map(|v| v.as_slice()).collect();
        let alpha = bonferroni(0.05, 3).unwrap();
        let r = trend_contrast(&refs, alpha).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.iter().all(|t| t.significant && t.statistic < 0.0));
        assert!(r.iter().all(|t| t.alpha_effective == alpha));
        let flat = normals(&mut rng, 50, 0.0, 1.0);
        let r = trend_contrast(&[&flat, &flat], alpha).unwrap();
        assert!(!r[0].significant);
    }

    #[test]
    fn report_entry_json_shape() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 5.0]).unwrap().at_alpha(0.01);
        let e = ReportEntry::new("H1", "welch_t", &["a", "b"], &r);
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        for key in ["test", "groups", "statistic", "df", "p", "alpha_effective", "significant"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["df"].is_number());
        let a = oneway_anova(&[&[1.0, 2.0], &[3.0, 5.0]]).unwrap();
        let e = ReportEntry::new("omnibus", "anova", &["a", "b"], &a.test);
        assert_eq!(serde_json::to_value(&e).unwrap()["df"], serde_json::json!([1.0, 2.0]));
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 3..25)
    }

    proptest! {
        #[test]
        fn welch_is_antisymmetric(a in sample(), b in sample()) {
            let ab = welch_t(&a, &b).unwrap();
            let ba = welch_t(&b, &a).unwrap();
            prop_assert_eq!(ab.statistic, -ba.statistic);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-14);
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
            prop_assert_eq!(ab.significant, ab.p_value < ab.alpha_effective);
        }

        #[test]
        fn statistics_are_scale_invariant(a in sample(), b in sample(), c in sample(), k in 0.01f64..100.0) {
            let s = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
            let t1 = welch_t(&a, &b).unwrap().statistic;
            let t2 = welch_t(&s(&a), &s(&b)).unwrap().statistic;
            prop_assert!((t1 - t2).abs() <= 1e-10 * t1.abs().max(1.0));
            let f1 = oneway_anova(&[&a, &b, &c]).unwrap().test.statistic;
            let f2 = oneway_anova(&[&s(&a), &s(&b), &s(&c)]).unwrap().test.statistic;
            prop_assert!((f1 - f2).abs() <= 1e-10 * f1.abs().max(1.0));
        }

        #[test]
        fn two_group_f_is_pooled_t_squared(a in sample(), b in sample()) {
            let t = pooled_t(&a, &b).unwrap();
            let f = oneway_anova(&[&a, &b]).unwrap().test;
            prop_assert!((f.statistic - t.statistic.powi(2)).abs() <= 1e-8 * f.statistic.max(1.0));
            prop_assert!((f.p_value - t.p_value).abs() < 1e-8);
        }
    }
}
