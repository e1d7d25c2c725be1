//! Output files: the JSON report, plot-ready CSVs, and the cross-run
//! comparison table.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use capens_core::eval::{category_breakdown, EvaluationReport, SweepReport};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("reading report {path}: {detail}")]
    Unreadable { path: PathBuf, detail: String },
    #[error("reports disagree on the benchmark: {first_path} is {first} but {other_path} is {other}")]
    VersionMismatch { first_path: PathBuf, first: String, other_path: PathBuf, other: String },
    #[error("no reports given")]
    NoReports,
}

pub const REPORT_JSON: &str = "report.json";
pub const INSTANCES_CSV: &str = "instances.csv";
pub const CATEGORIES_CSV: &str = "categories.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const COMPARE_CSV: &str = "compare.csv";
pub const RETRIEVAL_JSON: &str = "all_negatives.json";

/// Writes via a temporary file and rename so a crash never leaves a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let err = |source| ReportError::Write { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(err)?;
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("report serializes");
    s.push(b'\n');
    s
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per evaluated instance.
pub fn instances_csv(report: &EvaluationReport) -> Vec<u8> {
    csv_bytes(
        &["instance_id", "compound_noun", "category", "s_pos", "s_neg1", "s_neg2", "win"],
        report.per_instance.iter().map(|r| {
            vec![
                r.instance_id.clone(),
                r.compound_noun.clone(),
                r.category.as_str().into(),
                r.s_pos.to_string(),
                r.s_neg1.to_string(),
                r.s_neg2.to_string(),
                u8::from(r.win).to_string(),
            ]
        }),
    )
}

/// Misclassification counts and mean winning similarity per category, with a total row.
pub fn categories_csv(report: &EvaluationReport) -> Vec<u8> {
    let b = category_breakdown(report);
    let mut rows: Vec<Vec<String>> = b
        .rows
        .iter()
        .map(|r| {
            vec![
                r.category.as_str().into(),
                r.count.to_string(),
                r.errors.to_string(),
                opt(r.accuracy),
                opt(r.mean_winning_similarity),
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        b.total_count.to_string(),
        b.total_errors.to_string(),
        report.accuracy.to_string(),
        opt(report.mean_winning_similarity),
    ]);
    csv_bytes(&["category", "count", "errors", "accuracy", "mean_winning_similarity"], rows)
}

pub fn sweep_csv(sweep: &SweepReport) -> Vec<u8> {
    csv_bytes(&["k", "accuracy"], sweep.rows.iter().map(|r| vec![r.k.to_string(), r.accuracy.to_string()]))
}

/// Writes `report.json`, `instances.csv` and `categories.csv` under `out`.
pub fn write_evaluation(out: &Path, report: &EvaluationReport) -> Result<(), ReportError> {
    write_atomic(&out.join(REPORT_JSON), &to_json(report))?;
    write_atomic(&out.join(INSTANCES_CSV), &instances_csv(report))?;
    write_atomic(&out.join(CATEGORIES_CSV), &categories_csv(report))
}

pub fn read_report(path: &Path) -> Result<EvaluationReport, ReportError> {
    let unreadable = |detail: String| ReportError::Unreadable { path: path.to_path_buf(), detail };
    let raw = std::fs::read(path).map_err(|e| unreadable(e.to_string()))?;
    serde_json::from_slice(&raw).map_err(|e| unreadable(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: String,
    pub provider_id: String,
    pub model_id: String,
    pub accuracy: f64,
    pub mean_winning_similarity: Option<f64>,
}

/// Rows sorted by accuracy, best first; equal accuracies keep input order.
pub fn compare(reports: &[(PathBuf, EvaluationReport)]) -> Result<Vec<ComparisonRow>, ReportError> {
    let (first_path, first) = reports.first().ok_or(ReportError::NoReports)?;
    let id = |r: &EvaluationReport| format!("{} v{}", r.benchmark.name, r.benchmark.version);
    for (path, r) in &reports[1..] {
        if r.benchmark.name != first.benchmark.name || r.benchmark.version != first.benchmark.version {
            return Err(ReportError::VersionMismatch {
                first_path: first_path.clone(),
                first: id(first),
                other_path: path.clone(),
                other: id(r),
            });
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(_, r)| ComparisonRow {
            strategy: r.strategy.clone(),
            provider_id: r.provider_id.clone(),
            model_id: r.model_id.clone(),
            accuracy: r.accuracy,
            mean_winning_similarity: r.mean_winning_similarity,
        })
        .collect();
    rows.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
    Ok(rows)
}

pub fn compare_csv(rows: &[ComparisonRow]) -> Vec<u8> {
    csv_bytes(
        &["strategy", "provider", "model", "accuracy", "mean_winning_similarity"],
        rows.iter().map(|r| {
            vec![
                r.strategy.clone(),
                r.provider_id.clone(),
                r.model_id.clone(),
                format!("{:.2}", r.accuracy),
                r.mean_winning_similarity.map(|m| format!("{m:.4}")).unwrap_or_default(),
            ]
        }),
    )
}

/// Column-aligned text table of the comparison.
pub fn compare_table(rows: &[ComparisonRow]) -> String {
    let header = ["strategy", "provider", "model", "accuracy", "mean_win_sim"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.strategy.clone(),
                r.provider_id.clone(),
                r.model_id.clone(),
                format!("{:.2}", r.accuracy),
                r.mean_winning_similarity.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cols: [&str; 5]| {
        let mut l = String::new();
        for (i, (c, w)) in cols.iter().zip(width).enumerate() {
            // Numbers right-aligned, text left-aligned.
            if i >= 3 {
                let _ = write!(l, "{c:>w$}");
            } else {
                let _ = write!(l, "{c:<w$}");
            }
            if i < 4 {
                l.push_str("  ");
            }
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    line(header);
    for row in &cells {
        line([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}
