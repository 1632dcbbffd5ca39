//! Metrics CSV files, the run manifest and curve statistics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::MetricsRecord;

pub const METRICS_HEADER: &str = "episode,mean_success,mean_energy,lambda_mean,loss,epsilon";

/// One row of the metrics CSV. Floats are printed in shortest round-trip form.
pub fn metrics_row(m: &MetricsRecord) -> String {
    format!("{},{:?},{:?},{:?},{:?},{:?}", m.episode, m.mean_success, m.mean_energy, m.lambda_mean(), m.loss, m.epsilon)
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in records {
        out.push_str(&metrics_row(m));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub mean_success: f64,
    pub mean_energy: f64,
    pub lambda_mean: f64,
    pub loss: f64,
    pub epsilon: f64,
}

fn field<T: std::str::FromStr>(v: &str, line: usize, name: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Parse { line, message: format!("bad {name} '{v}'") })
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::Parse { line: 1, message: format!("expected header '{METRICS_HEADER}'") }),
    }
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let line = i + 2;
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse { line, message: format!("expected 6 fields, got {}", f.len()) });
        }
        rows.push(MetricsRow {
            episode: field(f[0], line, "episode")?,
            mean_success: field(f[1], line, "mean_success")?,
            mean_energy: field(f[2], line, "mean_energy")?,
            lambda_mean: field(f[3], line, "lambda_mean")?,
            loss: field(f[4], line, "loss")?,
            epsilon: field(f[5], line, "epsilon")?,
        });
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    parse_metrics_csv(&std::fs::read_to_string(path)?)
}

/// Per-agent multipliers, one column per agent.
pub fn lambda_csv(records: &[MetricsRecord]) -> String {
    let agents = records.first().map_or(0, |m| m.lambda.len());
    let mut out = String::from("episode");
    for i in 0..agents {
        let _ = write!(out, ",lambda_{i}");
    }
    out.push('\n');
    for m in records {
        let _ = write!(out, "{}", m.episode);
        for l in &m.lambda {
            let _ = write!(out, ",{l:?}");
        }
        out.push('\n');
    }
    out
}

/// Per-agent multiplier traces read back from [`lambda_csv`] output.
pub fn parse_lambda_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::Parse { line: 1, message: "empty lambda file".into() })?;
    let agents = header.split(',').count().saturating_sub(1);
    let mut traces = vec![Vec::new(); agents];
    for (i, l) in lines.enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != agents + 1 {
            return Err(Error::Parse { line: i + 2, message: "wrong column count".into() });
        }
        for (a, v) in f[1..].iter().enumerate() {
            traces[a].push(field(v, i + 2, "lambda")?);
        }
    }
    Ok(traces)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scheme: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config_file: String,
    pub metrics_file: String,
    pub lambda_file: String,
    pub checkpoint_file: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub episodes_completed: usize,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

/// Trailing moving average; entry `k` averages `xs[k+1-w ..= k]` (shorter at the start).
pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        sum += x;
        if k >= w {
            sum -= xs[k - w];
        }
        out.push(sum / (k + 1).min(w) as f64);
    }
    out
}

/// Mean over the last `fraction` of the series (at least one element).
pub fn tail_mean(xs: &[f64], fraction: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let n = ((xs.len() as f64 * fraction).round() as usize).clamp(1, xs.len());
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}
