use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::experiment::{Arm, PrRecord, ReportRow, RunProvenance, RunReport, Scope};
use super::PipelineError;
use crate::metrics::{format_change, relative_change, PrCurve, PrPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PrRow {
    train_set: String,
    test_set: String,
    arm: Arm,
    threshold: String,
    precision: f64,
    recall: f64,
}

fn rows_csv(report: &RunReport) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

fn pr_csv(report: &RunReport) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in &report.pr_curves {
        for p in &rec.curve.points {
            w.serialize(PrRow {
                train_set: rec.train_set.clone(),
                test_set: rec.test_set.clone(),
                arm: rec.arm,
                threshold: format!("{:.2}", p.threshold),
                precision: p.precision,
                recall: p.recall,
            })?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is utf-8"))
}

const METRICS: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1"];

fn table(title: &str, first_col: &str, cells: &[(String, Option<&ReportRow>, Option<&ReportRow>)], average: bool) -> String {
    let mut out = format!("## {title}\n\n| {first_col} |");
    for m in METRICS {
        out.push_str(&format!(" {m} Baseline | {m} Augmented | {m} (%) |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|---|---:|".repeat(METRICS.len()));
    out.push('\n');
    let value = |r: Option<&ReportRow>, i: usize| r.map_or_else(|| "-".to_owned(), |r| format!("{:.3}", r.metrics()[i]));
    for (label, base, aug) in cells {
        out.push_str(&format!("| {label} |"));
        for i in 0..METRICS.len() {
            let change = match (base, aug) {
                (Some(_), Some(a)) => {
                    let c = [a.change_accuracy, a.change_precision, a.change_recall, a.change_f1][i];
                    c.map_or_else(|| "n/a".to_owned(), format_change)
                }
                _ => "-".to_owned(),
            };
            out.push_str(&format!(" {} | {} | {} |", value(*base, i), value(*aug, i), change));
        }
        out.push('\n');
    }
    let paired: Vec<(&ReportRow, &ReportRow)> = cells.iter().filter_map(|(_, b, a)| Some(((*b)?, (*a)?))).collect();
    if average && paired.len() > 1 {
        out.push_str("| Average |");
        let n = paired.len() as f64;
        for i in 0..METRICS.len() {
            let b = paired.iter().map(|(b, _)| b.metrics()[i]).sum::<f64>() / n;
            let a = paired.iter().map(|(_, a)| a.metrics()[i]).sum::<f64>() / n;
            let change = relative_change(b, a).map_or_else(|_| "n/a".to_owned(), format_change);
            out.push_str(&format!(" {b:.3} | {a:.3} | {change} |"));
        }
        out.push('\n');
    }
    out
}

fn markdown(report: &RunReport) -> String {
    let mut sections = Vec::new();
    for (scope, title, first_col) in [
        (Scope::Intra, "Intra-dataset results", "Dataset"),
        (Scope::Cross, "Cross-dataset results", "Trainset-Testset"),
    ] {
        let mut cells: Vec<(String, Option<&ReportRow>, Option<&ReportRow>)> = Vec::new();
        for r in report.rows.iter().filter(|r| r.scope == scope) {
            let label = match scope {
                Scope::Intra => r.train_set.clone(),
                Scope::Cross => format!("{}-{}", r.train_set, r.test_set),
            };
            let idx = match cells.iter().position(|c| c.0 == label) {
                Some(i) => i,
                None => {
                    cells.push((label, None, None));
                    cells.len() - 1
                }
            };
            match r.arm {
                Arm::Baseline => cells[idx].1 = Some(r),
                Arm::Augmented => cells[idx].2 = Some(r),
            }
        }
        if !cells.is_empty() {
            sections.push(table(title, first_col, &cells, scope == Scope::Cross));
        }
    }
    sections.join("\n")
}

/// Serializes `report` to one string. CSV covers the result rows only; see
/// [`emit_report`] for the companion files.
pub fn render_report(report: &RunReport, format: ReportFormat) -> Result<String, PipelineError> {
    if report.rows.is_empty() {
        return Err(PipelineError::EmptyReport);
    }
    match format {
        ReportFormat::Csv => rows_csv(report),
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes `report` to `path`. CSV output also writes `<stem>.pr.csv` and
/// `<stem>.provenance.json` next to it. Returns every file written.
pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let body = render_report(report, format)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body)?;
    let mut written = vec![path.to_path_buf()];
    if format == ReportFormat::Csv {
        let pr = sibling(path, "pr.csv");
        fs::write(&pr, pr_csv(report)?)?;
        let prov = sibling(path, "provenance.json");
        fs::write(&prov, serde_json::to_string_pretty(&report.provenance)? + "\n")?;
        written.extend([pr, prov]);
    }
    Ok(written)
}

/// Reads back a report written by [`emit_report`] in CSV form.
pub fn load_report_csv(path: &Path) -> Result<RunReport, PipelineError> {
    let rows = csv::Reader::from_path(path)?
        .deserialize()
        .collect::<Result<Vec<ReportRow>, _>>()?;
    let mut pr_curves: Vec<PrRecord> = Vec::new();
    for row in csv::Reader::from_path(sibling(path, "pr.csv"))?.deserialize() {
        let row: PrRow = row?;
        let point = PrPoint {
            threshold: row.threshold.parse().map_err(|_| PipelineError::InvalidPlan(format!("bad threshold {}", row.threshold)))?,
            precision: row.precision,
            recall: row.recall,
        };
        match pr_curves.last_mut() {
            Some(r) if r.train_set == row.train_set && r.test_set == row.test_set && r.arm == row.arm => r.curve.points.push(point),
            _ => pr_curves.push(PrRecord {
                train_set: row.train_set,
                test_set: row.test_set,
                arm: row.arm,
                curve: PrCurve { points: vec![point] },
            }),
        }
    }
    let provenance: RunProvenance = serde_json::from_reader(BufReader::new(File::open(sibling(path, "provenance.json"))?))?;
    Ok(RunReport {
        rows,
        pr_curves,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{DetectorConfig, TrainConfig};
    use crate::metrics::PR_THRESHOLDS;
    use std::collections::BTreeMap;

    fn row(scope: Scope, train: &str, test: &str, arm: Arm, m: [f64; 4], base: Option<[f64; 4]>) -> ReportRow {
        let ch = |i: usize| base.and_then(|b| relative_change(b[i], m[i]).ok());
        ReportRow {
            scope,
            train_set: train.into(),
            test_set: test.into(),
            arm,
            accuracy: m[0],
            precision: m[1],
            recall: m[2],
            f1: m[3],
            change_accuracy: ch(0),
            change_precision: ch(1),
            change_recall: ch(2),
            change_f1: ch(3),
        }
    }

    fn report() -> RunReport {
        let b = [0.613, 0.689, 0.155, 0.253];
        let a = [0.645, 0.570, 0.644, 0.605];
        let ib = [0.9, 0.8, 0.0, 0.0];
        let ia = [0.91, 0.7, 0.3, 0.4];
        RunReport {
            rows: vec![
                row(Scope::Intra, "FN", "FN", Arm::Baseline, ib, None),
                row(Scope::Intra, "FN", "FN", Arm::Augmented, ia, Some(ib)),
                row(Scope::Cross, "FN", "SE", Arm::Baseline, b, None),
                row(Scope::Cross, "FN", "SE", Arm::Augmented, a, Some(b)),
            ],
            pr_curves: vec![PrRecord {
                train_set: "FN".into(),
                test_set: "FN".into(),
                arm: Arm::Baseline,
                curve: PrCurve {
                    points: PR_THRESHOLDS
                        .iter()
                        .map(|&t| PrPoint { threshold: t, precision: 1.0 - t / 3.0, recall: 0.1 + t / 7.0 })
                        .collect(),
                },
            }],
            provenance: RunProvenance {
                master_seed: 1,
                threshold: 0.7,
                injection_cap: 100,
                vocab_min_count: 1,
                detector: DetectorConfig::default(),
                train: TrainConfig::default(),
                detector_seeds: BTreeMap::from([("FN".to_string(), 99)]),
                training_sizes: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn markdown_layout() {
        let md = render_report(&report(), ReportFormat::Markdown).unwrap();
        assert!(md.contains(
            "| FN-SE | 0.613 | 0.645 | +5.22 | 0.689 | 0.570 | -17.27 | 0.155 | 0.644 | +315.48 | 0.253 | 0.605 | +139.13 |"
        ));
        assert!(md.contains("| FN | 0.900 | 0.910 | +1.11 | 0.800 | 0.700 | -12.50 | 0.000 | 0.300 | n/a | 0.000 | 0.400 | n/a |"));
        assert!(md.contains("| Trainset-Testset | Accuracy Baseline |"));
        // one pair only, no average row
        assert!(!md.contains("Average"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/report.csv");
        let written = emit_report(&report(), ReportFormat::Csv, &path).unwrap();
        assert_eq!(written.len(), 3);
        assert_eq!(load_report_csv(&path).unwrap(), report());
        let json = render_report(&report(), ReportFormat::Json).unwrap();
        assert_eq!(serde_json::from_str::<RunReport>(&json).unwrap(), report());
    }

    #[test]
    fn empty_report_rejected() {
        let mut r = report();
        r.rows.clear();
        assert!(matches!(render_report(&r, ReportFormat::Csv), Err(PipelineError::EmptyReport)));
    }
}
