//! CSV/JSON rendering of evaluation results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 9] = ["model", "dataset", "attack", "epsilon", "acc", "prec", "rec", "f1", "step_time_ms"];

/// One row of a summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub attack: String,
    pub epsilon: f64,
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
    pub step_time_ms: Option<f64>,
    /// Per-class sample counts; carried in JSON only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    model: String,
    dataset: String,
    attack: String,
    epsilon: f64,
    acc: f64,
    prec: f64,
    rec: f64,
    f1: f64,
    step_time_ms: Option<f64>,
}

impl From<&MetricsReport> for CsvRow {
    fn from(r: &MetricsReport) -> Self {
        CsvRow {
            model: r.model.clone(),
            dataset: r.dataset.clone(),
            attack: r.attack.clone(),
            epsilon: r.epsilon,
            acc: r.acc,
            prec: r.prec,
            rec: r.rec,
            f1: r.f1,
            step_time_ms: r.step_time_ms,
        }
    }
}

pub fn to_csv_string(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow::from(r))?;
    }
    if reports.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_COLUMNS {
        return Err(Error::config("report", format!("unexpected columns {header:?}")));
    }
    rdr.deserialize::<CsvRow>()
        .map(|row| {
            let r = row?;
            Ok(MetricsReport {
                model: r.model,
                dataset: r.dataset,
                attack: r.attack,
                epsilon: r.epsilon,
                acc: r.acc,
                prec: r.prec,
                rec: r.rec,
                f1: r.f1,
                step_time_ms: r.step_time_ms,
                support: Vec::new(),
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir` and returns both paths.
pub fn report_emit(reports: &[MetricsReport], dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Empty("report list".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, to_csv_string(reports)?).map_err(|e| Error::io(&csv_path, e))?;
    let json = serde_json::to_string_pretty(reports)?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}
