//! On-disk artifacts of a run.
//!
//! * `trials.csv`: one row per [`TrialRecord`], columns in [`TRIAL_COLUMNS`].
//! * `summary.json`: config, per-point aggregates, constructions, failures.
//! * `plotdata/{fdr,power,ratio}.csv`: `sweep_value, series, mean, se`.
//!
//! Every artifact carries `schema_version`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentResult, SummaryRow, TrialRecord};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRIAL_COLUMNS: [&str; 18] = [
    "schema_version",
    "grid_index",
    "sweep_variable",
    "sweep_value",
    "label",
    "method",
    "stat",
    "trial",
    "seed",
    "k",
    "threshold",
    "selected",
    "false_selected",
    "fdp",
    "power",
    "ratio_stat",
    "lambda",
    "sweeps",
];

pub const PLOT_COLUMNS: [&str; 6] = ["schema_version", "sweep_variable", "sweep_value", "series", "mean", "se"];

/// Shortest representation that parses back to the same value; `inf` for
/// an empty selection's threshold.
fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

fn sweep_name(res: &ExperimentResult) -> String {
    serde_json::to_value(res.config.sweep.variable)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn trial_row(r: &TrialRecord, sweep: &str) -> Vec<String> {
    vec![
        SCHEMA_VERSION.to_string(),
        r.grid_index.to_string(),
        sweep.to_string(),
        num(r.sweep_value),
        r.label.clone(),
        r.method.clone(),
        r.stat.clone(),
        r.trial.to_string(),
        r.seed.to_string(),
        r.k.to_string(),
        num(r.threshold),
        r.selected.to_string(),
        r.false_selected.to_string(),
        num(r.fdp),
        num(r.power),
        num(r.ratio_stat),
        num(r.lambda),
        r.sweeps.to_string(),
    ]
}

pub fn write_trials_csv(path: &Path, res: &ExperimentResult) -> Result<()> {
    let sweep = sweep_name(res);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_COLUMNS)?;
    for r in &res.records {
        w.write_record(trial_row(r, &sweep))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u32,
    name: &'a str,
    config: &'a super::ExperimentConfig,
    summary: &'a [SummaryRow],
    constructions: &'a [super::ConstructionInfo],
    failures: &'a [super::FailureRecord],
    failed_constructions: usize,
    failed_trials: usize,
}

pub fn summary_json(res: &ExperimentResult) -> Result<String> {
    let doc = SummaryDoc {
        schema_version: SCHEMA_VERSION,
        name: &res.config.name,
        config: &res.config,
        summary: &res.summary,
        constructions: &res.constructions,
        failures: &res.failures,
        failed_constructions: res.failures.iter().filter(|f| f.trial.is_none()).count(),
        failed_trials: res.failures.iter().filter(|f| f.trial.is_some()).count(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn write_plotdata(dir: &Path, res: &ExperimentResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let sweep = sweep_name(res);
    type Metric = fn(&SummaryRow) -> (f64, f64);
    let metrics: [(&str, Metric); 3] = [
        ("fdr", |r| (r.fdr, r.fdr_se)),
        ("power", |r| (r.power, r.power_se)),
        ("ratio", |r| (r.ratio, r.ratio_se)),
    ];
    let mut paths = Vec::new();
    for (name, get) in metrics {
        let path = dir.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(PLOT_COLUMNS)?;
        for r in &res.summary {
            let (mean, se) = get(r);
            w.write_record([
                SCHEMA_VERSION.to_string(),
                sweep.clone(),
                num(r.sweep_value),
                r.label.clone(),
                num(mean),
                num(se),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes all artifacts under `dir` (created if missing).
pub fn write_outputs(dir: &Path, res: &ExperimentResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trials_csv(&dir.join("trials.csv"), res)?;
    fs::write(dir.join("summary.json"), summary_json(res)?)?;
    write_plotdata(&dir.join("plotdata"), res)?;
    Ok(())
}
