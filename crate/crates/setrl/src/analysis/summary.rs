//! Cross-run comparison tables over metrics CSVs.
//!
//! Groups rows by run id, then reports a final-window mean return, the
//! first iteration at which the rolling window mean clears a threshold,
//! and sample efficiency relative to the quickest run. Iterations whose
//! mean return is NaN (no episode finished) are skipped when averaging.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::metrics::{read_metrics, MetricRecord};
use super::AnalysisError;

/// One run's line in the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub run: String,
    pub rows: usize,
    /// Mean return over the last `window` iterations (all rows when the
    /// run is shorter); NaN when no iteration had a finished episode.
    pub final_mean_return: f64,
    /// First iteration whose rolling window mean reached the threshold.
    pub iters_to_threshold: Option<u32>,
    /// Environment steps consumed at that iteration.
    pub steps_to_threshold: Option<u64>,
    /// Quickest run's steps-to-threshold divided by this run's; 1 for
    /// the quickest, below 1 for slower runs, absent when never reached.
    pub relative_efficiency: Option<f64>,
}

fn mean_skipping_nan(rows: &[MetricRecord]) -> f64 {
    let usable: Vec<f64> = rows
        .iter()
        .map(|r| r.mean_return)
        .filter(|v| !v.is_nan())
        .collect();
    if usable.is_empty() {
        f64::NAN
    } else {
        usable.iter().sum::<f64>() / usable.len() as f64
    }
}

/// Reads every file, groups by run id, and summarizes each run against
/// `threshold` using a rolling mean over `window` iterations.
pub fn summarize_runs(
    files: &[PathBuf],
    window: usize,
    threshold: f64,
) -> Result<Vec<RunSummary>, AnalysisError> {
    if files.is_empty() {
        return Err(AnalysisError::Domain("no metrics files given".into()));
    }
    if window == 0 {
        return Err(AnalysisError::Domain("window must be at least 1".into()));
    }
    let mut by_run: BTreeMap<String, Vec<MetricRecord>> = BTreeMap::new();
    for f in files {
        for rec in read_metrics(f)? {
            by_run.entry(rec.run.clone()).or_default().push(rec);
        }
    }
    let mut summaries: Vec<RunSummary> = by_run
        .into_iter()
        .map(|(run, mut rows)| {
            rows.sort_by_key(|r| r.iteration);
            let tail = &rows[rows.len().saturating_sub(window)..];
            let mut crossing = None;
            for end in 0..rows.len() {
                let start = (end + 1).saturating_sub(window);
                let rolling = mean_skipping_nan(&rows[start..=end]);
                if !rolling.is_nan() && rolling >= threshold {
                    crossing = Some((rows[end].iteration, rows[end].env_steps));
                    break;
                }
            }
            RunSummary {
                run,
                rows: rows.len(),
                final_mean_return: mean_skipping_nan(tail),
                iters_to_threshold: crossing.map(|(i, _)| i),
                steps_to_threshold: crossing.map(|(_, s)| s),
                relative_efficiency: None,
            }
        })
        .collect();
    let best = summaries
        .iter()
        .filter_map(|s| s.steps_to_threshold)
        .min();
    if let Some(best) = best {
        for s in &mut summaries {
            s.relative_efficiency = s
                .steps_to_threshold
                .map(|own| best as f64 / own as f64);
        }
    }
    Ok(summaries)
}

/// Aligned plain-text table.
pub fn render_summary_text(summaries: &[RunSummary], window: usize, threshold: f64) -> String {
    let name_w = summaries
        .iter()
        .map(|s| s.run.len())
        .chain(["run".len()])
        .max()
        .unwrap_or(3);
    let mut out = format!(
        "{:<name_w$}  {:>6}  {:>12}  {:>14}  {:>12}  {:>8}  {}\n",
        "run", "rows", "final_mean", "reached@iter", "steps", "rel_eff", "flag"
    );
    for s in summaries {
        let reached = match s.iters_to_threshold {
            Some(i) => i.to_string(),
            None => "not reached".into(),
        };
        let steps = s
            .steps_to_threshold
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".into());
        let eff = s
            .relative_efficiency
            .map(|v| format!("{v:.3}"))
            .unwrap_or_else(|| "-".into());
        // NaN final means (no finished episodes) count as below.
        let flag = if s.final_mean_return >= threshold { "" } else { "BELOW" };
        out.push_str(&format!(
            "{:<name_w$}  {:>6}  {:>12.4}  {:>14}  {:>12}  {:>8}  {}\n",
            s.run, s.rows, s.final_mean_return, reached, steps, eff, flag
        ));
    }
    out.push_str(&format!(
        "window={window} iterations, return threshold={threshold}\n"
    ));
    out
}

/// Machine-readable variant; absent values serialize as empty fields.
pub fn render_summary_csv(summaries: &[RunSummary]) -> String {
    let mut out = String::from(
        "run,rows,final_mean_return,iters_to_threshold,steps_to_threshold,relative_efficiency\n",
    );
    for s in summaries {
        let opt_u32 = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_u64 = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:e},{},{},{}\n",
            s.run,
            s.rows,
            s.final_mean_return,
            opt_u32(s.iters_to_threshold),
            opt_u64(s.steps_to_threshold),
            opt_f(s.relative_efficiency),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::metrics::write_metrics;
    use std::path::Path;

    fn rec(run: &str, iteration: u32, mean_return: f64) -> MetricRecord {
        MetricRecord {
            run: run.into(),
            seed: 1,
            iteration,
            env_steps: iteration as u64 * 100,
            mean_return,
            std_return: 0.0,
            mean_ep_len: 10.0,
            policy_loss: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            approx_kl: 0.0,
            clip_fraction: 0.0,
            wall_secs: 0.0,
        }
    }

    fn tmp(name: &str, records: &[MetricRecord]) -> PathBuf {
        let dir = std::env::temp_dir().join("setrl-summary-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        let _ = std::fs::remove_file(&p);
        write_metrics(Path::new(&p), records).unwrap();
        p
    }

    #[test]
    fn ramp_reaches_threshold_and_flat_does_not() {
        let ramp: Vec<MetricRecord> =
            (1..=10).map(|i| rec("ramp", i, i as f64 / 10.0)).collect();
        let flat: Vec<MetricRecord> = (1..=10).map(|i| rec("flat", i, 0.05)).collect();
        let f1 = tmp("ramp.csv", &ramp);
        let f2 = tmp("flat.csv", &flat);
        let s = summarize_runs(&[f1, f2], 3, 0.55).unwrap();
        assert_eq!(s.len(), 2);
        let flat_s = s.iter().find(|x| x.run == "flat").unwrap();
        let ramp_s = s.iter().find(|x| x.run == "ramp").unwrap();
        assert_eq!(flat_s.iters_to_threshold, None);
        assert_eq!(flat_s.relative_efficiency, None);
        // First window clearing 0.55 ends at i=7 (holds 0.5, 0.6, 0.7).
        assert_eq!(ramp_s.iters_to_threshold, Some(7));
        assert_eq!(ramp_s.steps_to_threshold, Some(700));
        assert_eq!(ramp_s.relative_efficiency, Some(1.0));
        let text = render_summary_text(&s, 3, 0.55);
        assert!(text.contains("not reached"));
        assert!(text.contains("ramp"));
        // Below-threshold final window carries a flag; the ramp ends at
        // (0.8 + 0.9 + 1.0) / 3 and does not.
        let flat_line = text.lines().find(|l| l.starts_with("flat")).unwrap();
        let ramp_line = text.lines().find(|l| l.starts_with("ramp")).unwrap();
        assert!(flat_line.ends_with("BELOW"));
        assert!(!ramp_line.contains("BELOW"));
    }

    #[test]
    fn oversized_window_means_over_every_row() {
        let rows: Vec<MetricRecord> = (1..=4).map(|i| rec("short", i, i as f64)).collect();
        let f = tmp("short.csv", &rows);
        let s = summarize_runs(&[f], 100, 1000.0).unwrap();
        assert_eq!(s[0].rows, 4);
        assert!((s[0].final_mean_return - 2.5).abs() <= 1e-12);
        assert_eq!(s[0].iters_to_threshold, None);
    }

    #[test]
    fn identical_runs_summarize_identically() {
        let a: Vec<MetricRecord> = (1..=6).map(|i| rec("a", i, 0.1 * i as f64)).collect();
        let b: Vec<MetricRecord> = (1..=6).map(|i| rec("b", i, 0.1 * i as f64)).collect();
        let f1 = tmp("ident-a.csv", &a);
        let f2 = tmp("ident-b.csv", &b);
        let s = summarize_runs(&[f1, f2], 2, 0.25).unwrap();
        assert_eq!(s[0].final_mean_return, s[1].final_mean_return);
        assert_eq!(s[0].iters_to_threshold, s[1].iters_to_threshold);
        assert_eq!(s[0].relative_efficiency, s[1].relative_efficiency);
    }

    #[test]
    fn nan_rows_are_skipped_not_poisonous() {
        let rows = vec![
            rec("n", 1, f64::NAN),
            rec("n", 2, 0.6),
            rec("n", 3, f64::NAN),
            rec("n", 4, 0.8),
        ];
        let f = tmp("nan.csv", &rows);
        let s = summarize_runs(&[f], 4, 0.5).unwrap();
        assert!((s[0].final_mean_return - 0.7).abs() <= 1e-12);
        // Window (just row 1) is all-NaN, so the crossing waits for the
        // first usable value.
        assert_eq!(s[0].iters_to_threshold, Some(2));
    }

    #[test]
    fn slower_run_gets_proportionally_lower_efficiency() {
        let fast: Vec<MetricRecord> = (1..=5).map(|i| rec("fast", i, 1.0)).collect();
        let slow: Vec<MetricRecord> = (1..=5)
            .map(|i| rec("slow", i, if i < 4 { 0.0 } else { 1.0 }))
            .collect();
        let f1 = tmp("fast.csv", &fast);
        let f2 = tmp("slow.csv", &slow);
        let s = summarize_runs(&[f1, f2], 1, 0.9).unwrap();
        let fast_s = s.iter().find(|x| x.run == "fast").unwrap();
        let slow_s = s.iter().find(|x| x.run == "slow").unwrap();
        assert_eq!(fast_s.relative_efficiency, Some(1.0));
        assert_eq!(slow_s.steps_to_threshold, Some(400));
        assert!((slow_s.relative_efficiency.unwrap() - 0.25).abs() <= 1e-12);
    }

    #[test]
    fn csv_rendering_keeps_one_row_per_run() {
        let a: Vec<MetricRecord> = (1..=3).map(|i| rec("a", i, 0.5)).collect();
        let f = tmp("render.csv", &a);
        let s = summarize_runs(&[f], 2, 0.4).unwrap();
        let csv = render_summary_csv(&s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("run,rows,"));
        assert!(lines[1].starts_with("a,3,"));
    }

    #[test]
    fn degenerate_arguments_are_rejected() {
        assert!(matches!(
            summarize_runs(&[], 3, 0.5),
            Err(AnalysisError::Domain(_))
        ));
        let f = tmp("win.csv", &[rec("a", 1, 0.0)]);
        assert!(matches!(
            summarize_runs(&[f], 0, 0.5),
            Err(AnalysisError::Domain(_))
        ));
    }
}
