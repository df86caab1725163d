//! Paired Student t-test and the bundled accuracy-pair fixture.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Accuracy pairs without/with the fairness regularizer for six baseline
/// losses, two grouping methods and two datasets, 12 settings each.
pub const ACCURACY_PAIRS_FIXTURE: &str = include_str!("../fixtures/accuracy_pairs.csv");

/// p-values below this are displayed as `<0.0005`.
pub const P_DISPLAY_FLOOR: f64 = 0.0005;

pub const SIGNIFICANCE_LEVEL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub baseline: Vec<f64>,
    pub treated: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
    /// Every difference was exactly zero; statistic 0 and p 1 by convention.
    pub degenerate: bool,
}

/// Two-sided paired t-test on `treated − baseline`.
pub fn paired_t_test(sample: &PairedSample) -> Result<TTestResult> {
    let m = sample.baseline.len();
    if sample.treated.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: sample.treated.len(),
        });
    }
    if m < 2 {
        return Err(Error::InvalidParameter(format!(
            "paired t-test needs at least 2 pairs, got {m}"
        )));
    }
    let d: Vec<f64> = sample
        .treated
        .iter()
        .zip(&sample.baseline)
        .map(|(t, b)| t - b)
        .collect();
    let df = m - 1;
    if d.iter().all(|&x| x == 0.0) {
        return Ok(TTestResult {
            statistic: 0.0,
            p_value: 1.0,
            degrees_of_freedom: df,
            degenerate: true,
        });
    }
    let mean = d.iter().sum::<f64>() / m as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / df as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::ZeroVariance(mean));
    }
    let t = mean / (sd / (m as f64).sqrt());
    Ok(TTestResult {
        statistic: t,
        p_value: two_sided_p(t, df as f64),
        degrees_of_freedom: df,
        degenerate: false,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom, through the
/// regularized incomplete beta function.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// `<0.0005` below the display floor, three decimals otherwise.
pub fn format_p(p: f64) -> String {
    if p < P_DISPLAY_FLOOR {
        "<0.0005".to_owned()
    } else {
        format!("{p:.3}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub method: String,
    pub fr_type: String,
    pub dataset: String,
    pub result: TTestResult,
    /// `p < 0.1` and a positive statistic.
    pub significant: bool,
}

#[derive(Debug, Deserialize)]
struct FixtureRecord {
    method: String,
    fr_type: String,
    dataset: String,
    #[allow(dead_code)]
    noise_type: String,
    #[allow(dead_code)]
    rho: f64,
    #[allow(dead_code)]
    r: f64,
    acc_base: f64,
    acc_fr: f64,
}

/// Groups fixture rows by `(method, fr_type, dataset)`, keeping the order in
/// which each key first appears.
pub fn parse_fixture(text: &str) -> Result<Vec<(String, String, String, PairedSample)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut pairs: BTreeMap<(String, String, String), PairedSample> = BTreeMap::new();
    for (i, rec) in reader.deserialize::<FixtureRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::FixtureMalformed(format!("row {}: {e}", i + 1)))?;
        if !rec.acc_base.is_finite() || !rec.acc_fr.is_finite() {
            return Err(Error::FixtureMalformed(format!(
                "row {}: non-finite accuracy",
                i + 1
            )));
        }
        let key = (rec.method, rec.fr_type, rec.dataset);
        let entry = pairs.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            PairedSample {
                baseline: Vec::new(),
                treated: Vec::new(),
                label: format!("{}/{}/{}", key.0, key.1, key.2),
            }
        });
        entry.baseline.push(rec.acc_base);
        entry.treated.push(rec.acc_fr);
    }
    if order.is_empty() {
        return Err(Error::FixtureMalformed("no data rows".into()));
    }
    Ok(order
        .into_iter()
        .map(|k| {
            let s = pairs.remove(&k).expect("key recorded");
            (k.0, k.1, k.2, s)
        })
        .collect())
}

pub fn ttest_table_from_str(text: &str) -> Result<Vec<TTestRow>> {
    parse_fixture(text)?
        .into_iter()
        .map(|(method, fr_type, dataset, sample)| {
            let result = paired_t_test(&sample)
                .map_err(|e| Error::FixtureMalformed(format!("{}: {e}", sample.label)))?;
            let significant = result.p_value < SIGNIFICANCE_LEVEL && result.statistic > 0.0;
            Ok(TTestRow {
                method,
                fr_type,
                dataset,
                result,
                significant,
            })
        })
        .collect()
}

/// Runs every paired test in a fixture file.
pub fn run_ttest_table(path: &Path) -> Result<Vec<TTestRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ttest_table_from_str(&text)
}

/// `method,fr_type,dataset,statistic,p_value,significant` with the
/// statistic to three decimals and the p-value through [`format_p`].
pub fn ttest_table_csv(rows: &[TTestRow]) -> String {
    let mut out = String::from("method,fr_type,dataset,statistic,p_value,significant\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.3},{},{}",
            r.method,
            r.fr_type,
            r.dataset,
            r.result.statistic,
            format_p(r.result.p_value),
            r.significant
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(b: &[f64], t: &[f64]) -> PairedSample {
        PairedSample {
            baseline: b.to_vec(),
            treated: t.to_vec(),
            label: String::new(),
        }
    }

    #[test]
    fn identical_lists_are_degenerate() {
        let r = paired_t_test(&sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_shift_has_zero_variance() {
        assert!(matches!(
            paired_t_test(&sample(&[1.0, 2.0], &[2.0, 3.0])),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn matches_scipy() {
        // scipy.stats.ttest_rel(treated, baseline)
        let r = paired_t_test(&sample(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[1.5, 2.1, 3.9, 4.2, 5.8],
        ))
        .unwrap();
        assert!(
            (r.statistic - 3.162_277_660_168_380_4).abs() < 1e-12,
            "{}",
            r.statistic
        );
        assert!(
            (r.p_value - 0.034_109_423_167_409_57).abs() < 1e-12,
            "{}",
            r.p_value
        );
        assert_eq!(r.degrees_of_freedom, 4);
    }

    #[test]
    fn p_at_zero_is_one() {
        assert!((two_sided_p(0.0, 11.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.0003), "<0.0005");
        assert_eq!(format_p(0.0131), "0.013");
    }

    #[test]
    fn fixture_has_24_groups_of_12() {
        let groups = parse_fixture(ACCURACY_PAIRS_FIXTURE).unwrap();
        assert_eq!(groups.len(), 24);
        assert!(groups.iter().all(|g| g.3.baseline.len() == 12));
    }

    #[test]
    fn malformed_fixture() {
        let text =
            "method,fr_type,dataset,noise_type,rho,r,acc_base,acc_fr\nCE,KNN,C,imb,0.2,10,abc,1\n";
        assert!(matches!(
            ttest_table_from_str(text),
            Err(Error::FixtureMalformed(_))
        ));
        assert!(matches!(
            ttest_table_from_str("method,fr_type\n"),
            Err(Error::FixtureMalformed(_))
        ));
    }
}
