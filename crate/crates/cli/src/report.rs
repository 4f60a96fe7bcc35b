//! Aggregation of per-trial results into the Model × WEAT table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use scglove::biasmetrics::{AnalogyResult, WeatResult};
use scglove::scglove::ScReport;

use crate::{io_error, CliError, CliResult};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

/// What the debias stage records for one trial and one debiased spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    #[serde(flatten)]
    pub sc: ScReport,
    pub analogy_baseline: Option<AnalogyResult>,
    pub analogy_debiased: Option<AnalogyResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(xs: &[f64]) -> TrialSummary {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    TrialSummary { mean, std: var.sqrt(), n }
}

/// Mean and population standard deviation of the effect size, per spec.
pub fn aggregate_trials(results: &[WeatResult]) -> BTreeMap<String, TrialSummary> {
    let mut by_spec: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        by_spec.entry(r.spec.clone()).or_default().push(r.effect_size);
    }
    by_spec.into_iter().map(|(k, v)| (k, mean_std(&v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub effect_size: BTreeMap<String, TrialSummary>,
    pub p_value: BTreeMap<String, TrialSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyRow {
    pub debiased_spec: String,
    pub baseline: TrialSummary,
    pub debiased: TrialSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub spec: String,
    pub baseline_effect_size: f64,
    pub debiased_effect_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub specs: Vec<String>,
    pub trials: usize,
    pub rows: Vec<ReportRow>,
    pub analogy: Vec<AnalogyRow>,
    pub per_trial: Vec<TrialRecord>,
}

fn find<'a>(results: &'a [WeatResult], spec: &str) -> Option<&'a WeatResult> {
    results.iter().find(|r| r.spec == spec)
}

fn row(model: &str, results: &[WeatResult]) -> ReportRow {
    let mut p: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        p.entry(r.spec.clone()).or_default().push(r.p_value);
    }
    ReportRow {
        model: model.to_owned(),
        effect_size: aggregate_trials(results),
        p_value: p.into_iter().map(|(k, v)| (k, mean_std(&v))).collect(),
    }
}

/// Builds the report from `(trial, report)` pairs. The baseline row uses the
/// spec's own baseline result; the debiased row uses the model debiased for
/// that spec.
pub fn build_report(reports: &[(usize, DebiasReport)]) -> CliResult<RunReport> {
    if reports.is_empty() {
        return Err(CliError::Data("no debiasing reports to aggregate".into()));
    }
    let mut specs: Vec<String> = Vec::new();
    for (_, r) in reports {
        if !specs.contains(&r.sc.debiased_spec) {
            specs.push(r.sc.debiased_spec.clone());
        }
    }
    let mut baseline = Vec::new();
    let mut debiased = Vec::new();
    let mut per_trial = Vec::new();
    let mut analogy: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (t, r) in reports {
        let s = &r.sc.debiased_spec;
        let missing = || CliError::Data(format!("trial {t}: report for {s} lacks its own WEAT result"));
        let b = find(&r.sc.baseline, s).ok_or_else(missing)?;
        let d = find(&r.sc.debiased, s).ok_or_else(missing)?;
        baseline.push(b.clone());
        debiased.push(d.clone());
        per_trial.push(TrialRecord {
            trial: *t,
            spec: s.clone(),
            baseline_effect_size: b.effect_size,
            debiased_effect_size: d.effect_size,
        });
        if let (Some(ab), Some(ad)) = (&r.analogy_baseline, &r.analogy_debiased) {
            let e = analogy.entry(s.clone()).or_default();
            e.0.push(ab.accuracy);
            e.1.push(ad.accuracy);
        }
    }
    let trials = reports.iter().map(|(t, _)| *t).collect::<std::collections::BTreeSet<_>>().len();
    Ok(RunReport {
        specs,
        trials,
        rows: vec![row("GloVe", &baseline), row("SC-GloVe", &debiased)],
        analogy: analogy
            .into_iter()
            .map(|(spec, (b, d))| AnalogyRow {
                debiased_spec: spec,
                baseline: mean_std(&b),
                debiased: mean_std(&d),
            })
            .collect(),
        per_trial,
    })
}

/// Aligned plain-text table, one row per model and one column per spec.
pub fn render_table(report: &RunReport) -> String {
    let cell = |s: Option<&TrialSummary>| s.map_or_else(|| "-".to_owned(), |s| format!("{:.4} ± {:.4}", s.mean, s.std));
    let mut cells: Vec<Vec<String>> = vec![std::iter::once("Model".to_owned()).chain(report.specs.iter().cloned()).collect()];
    for r in &report.rows {
        cells.push(
            std::iter::once(r.model.clone())
                .chain(report.specs.iter().map(|s| cell(r.effect_size.get(s))))
                .collect(),
        );
    }
    let cols = cells[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &cells {
        let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("   ").trim_end());
    }
    let _ = writeln!(out, "\nWEAT effect size, mean ± population std over {} trial(s)", report.trials);
    if !report.analogy.is_empty() {
        let _ = writeln!(out, "\nTOP-1 analogy accuracy");
        for a in &report.analogy {
            let _ = writeln!(
                out,
                "  debiased for {:<8} GloVe {:.4} ± {:.4}   SC-GloVe {:.4} ± {:.4}",
                a.debiased_spec, a.baseline.mean, a.baseline.std, a.debiased.mean, a.debiased.std
            );
        }
    }
    out
}

pub fn write_report(report: &RunReport, dir: &Path) -> CliResult<()> {
    let json = dir.join(REPORT_JSON);
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n").map_err(|e| io_error(&json, e))?;
    let text = dir.join(REPORT_TEXT);
    std::fs::write(&text, render_table(report)).map_err(|e| io_error(&text, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(spec: &str, d: f64) -> WeatResult {
        WeatResult {
            spec: spec.into(),
            effect_size: d,
            p_value: 0.5,
            n_missing: 0,
        }
    }

    #[test]
    fn single_trial_has_zero_spread() {
        let agg = aggregate_trials(&[result("weat1", 0.42)]);
        assert_eq!(agg["weat1"], TrialSummary { mean: 0.42, std: 0.0, n: 1 });
    }

    #[test]
    fn two_trials_hand_example() {
        let agg = aggregate_trials(&[result("weat1", 0.5), result("weat1", 0.7), result("weat2", 1.0)]);
        assert!((agg["weat1"].mean - 0.6).abs() < 1e-15);
        assert!((agg["weat1"].std - 0.1).abs() < 1e-15);
        assert_eq!(agg["weat2"].n, 1);
    }

    #[test]
    fn table_has_model_rows_and_spec_columns() {
        let report = RunReport {
            specs: vec!["weat1".into(), "weat2".into()],
            trials: 2,
            rows: vec![row("GloVe", &[result("weat1", 0.5), result("weat1", 0.7), result("weat2", 1.0)]), row("SC-GloVe", &[result("weat1", 0.4)])],
            analogy: vec![],
            per_trial: vec![],
        };
        let table = render_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("Model") && lines[0].contains("weat1") && lines[0].contains("weat2"));
        assert!(lines[1].starts_with("GloVe") && lines[1].contains("0.6000 ± 0.1000"));
        assert!(lines[2].starts_with("SC-GloVe") && lines[2].ends_with('-'));
        // columns line up
        assert_eq!(lines[0].find("weat1"), lines[1].find("0.6000"));
    }
}
