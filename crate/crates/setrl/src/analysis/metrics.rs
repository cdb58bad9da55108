//! Training-curve records and their CSV serialization.
//!
//! One record per training iteration. The column order is fixed by
//! [`METRIC_HEADER`]; floats are written in exponent form, which Rust
//! guarantees to round-trip exactly, so parse(write(x)) == x for finite
//! values. Writes append when the file already has content, letting a
//! resumed run extend its own curve.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::AnalysisError;

/// CSV column order. `mean_return` may be NaN for iterations in which
/// no episode finished; readers skip such rows when averaging.
pub const METRIC_HEADER: &str = "run,seed,iteration,env_steps,mean_return,std_return,\
mean_ep_len,policy_loss,value_loss,entropy,approx_kl,clip_fraction,wall_secs";

const COLUMNS: usize = 13;

/// One training iteration's worth of diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    /// Identifies the curve; must not contain commas or line breaks.
    pub run: String,
    pub seed: u64,
    pub iteration: u32,
    /// Environment steps consumed so far, across all workers.
    pub env_steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_ep_len: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Excluded from determinism comparisons; everything else is
    /// reproducible from (seed, config).
    pub wall_secs: f64,
}

impl MetricRecord {
    fn to_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.run,
            self.seed,
            self.iteration,
            self.env_steps,
            self.mean_return,
            self.std_return,
            self.mean_ep_len,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.approx_kl,
            self.clip_fraction,
            self.wall_secs,
        )
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AnalysisError {
    AnalysisError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Appends `records` to the CSV at `path`, writing the header first when
/// the file is new or empty. Record order is preserved.
pub fn write_metrics(path: &Path, records: &[MetricRecord]) -> Result<(), AnalysisError> {
    for r in records {
        if r.run.contains(',') || r.run.contains('\n') || r.run.contains('\r') {
            return Err(AnalysisError::Domain(format!(
                "run id `{}` contains a delimiter",
                r.run.escape_debug()
            )));
        }
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let empty = file.metadata().map_err(|e| io_err(path, e))?.len() == 0;
    let mut out = String::new();
    if empty {
        out.push_str(METRIC_HEADER);
        out.push('\n');
    }
    for r in records {
        out.push_str(&r.to_row());
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

fn field<T: FromStr>(
    origin: &str,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T, AnalysisError> {
    raw.parse().map_err(|_| AnalysisError::Parse {
        path: origin.to_string(),
        line,
        msg: format!("bad {name} value `{raw}`"),
    })
}

/// Reads a metrics CSV back into records, checking the header, the
/// column count, and the per-run invariants (iterations strictly
/// increasing, environment steps non-decreasing). Errors carry the
/// 1-based line number.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_metrics(&text, &path.display().to_string())
}

/// [`read_metrics`] on in-memory text; `origin` labels errors.
pub fn parse_metrics(text: &str, origin: &str) -> Result<Vec<MetricRecord>, AnalysisError> {
    let parse_err = |line: usize, msg: String| AnalysisError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRIC_HEADER => {}
        Some((_, h)) => {
            return Err(parse_err(1, format!("unexpected header `{h}`")));
        }
        None => return Err(parse_err(1, "empty file".into())),
    }
    let mut records: Vec<MetricRecord> = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let parts: Vec<&str> = row.split(',').collect();
        if parts.len() != COLUMNS {
            return Err(parse_err(
                line,
                format!("expected {COLUMNS} columns, got {}", parts.len()),
            ));
        }
        let rec = MetricRecord {
            run: parts[0].to_string(),
            seed: field(origin, line, "seed", parts[1])?,
            iteration: field(origin, line, "iteration", parts[2])?,
            env_steps: field(origin, line, "env_steps", parts[3])?,
            mean_return: field(origin, line, "mean_return", parts[4])?,
            std_return: field(origin, line, "std_return", parts[5])?,
            mean_ep_len: field(origin, line, "mean_ep_len", parts[6])?,
            policy_loss: field(origin, line, "policy_loss", parts[7])?,
            value_loss: field(origin, line, "value_loss", parts[8])?,
            entropy: field(origin, line, "entropy", parts[9])?,
            approx_kl: field(origin, line, "approx_kl", parts[10])?,
            clip_fraction: field(origin, line, "clip_fraction", parts[11])?,
            wall_secs: field(origin, line, "wall_secs", parts[12])?,
        };
        if let Some(prev) = records.iter().rev().find(|r| r.run == rec.run) {
            if rec.iteration <= prev.iteration {
                return Err(parse_err(
                    line,
                    format!(
                        "iteration {} does not increase over {} within run `{}`",
                        rec.iteration, prev.iteration, rec.run
                    ),
                ));
            }
            if rec.env_steps < prev.env_steps {
                return Err(parse_err(
                    line,
                    format!("env_steps decreased within run `{}`", rec.run),
                ));
            }
        }
        records.push(rec);
    }
    Ok(records)
}
