use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{HarnessError, Metrics};
use crate::model::STATE_NAMES;

/// Decimated time series; one row per kept step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trace {
    /// Column layout: `t`, then per DG the true state, the estimate held by
    /// the DG itself, `eta`, `trigger`, `dv`, `q`, `qhat`; then the bus
    /// voltages.
    pub fn with_layout(dgs: usize, buses: usize) -> Self {
        let mut columns = vec!["t".to_string()];
        for i in 1..=dgs {
            columns.extend(STATE_NAMES.iter().map(|s| format!("dg{i}_{s}")));
            columns.extend(STATE_NAMES.iter().map(|s| format!("dg{i}_hat_{s}")));
            for s in ["eta", "trigger", "dv", "q", "qhat"] {
                columns.push(format!("dg{i}_{s}"));
            }
        }
        for b in 1..=buses {
            columns.push(format!("bus{b}_vd"));
            columns.push(format!("bus{b}_vq"));
        }
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                // Shortest representation that reads back to the same f64.
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// One transmitted packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub t_k: f64,
    /// Zero-based sender index; written one-based.
    pub dg: usize,
}

pub fn events_csv(events: &[EventRecord]) -> String {
    let mut out = String::from("t_k,dg_id\n");
    for e in events {
        let _ = writeln!(out, "{},{}", e.t_k, e.dg + 1);
    }
    out
}

/// Writes `trace.csv`, `events.csv` and `metrics.json` into `out_dir`
/// (created if missing) and returns their paths.
pub fn write_outputs(
    trace: &Trace,
    events: &[EventRecord],
    metrics: &Metrics,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let metrics_json = serde_json::to_string_pretty(metrics).expect("metrics serialize") + "\n";
    let files = [
        ("trace.csv", trace.to_csv()),
        ("events.csv", events_csv(events)),
        ("metrics.json", metrics_json),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
        written.push(path);
    }
    Ok(written)
}
