//! Seeded simulation sweeps.
//!
//! At every grid point the design and each companion matrix are built once.
//! Trials then redraw `β` (unless frozen) and the noise, and every method sees
//! the same `(X, β, y)` in a given trial. Seeds are derived from the base seed
//! and the grid and trial indices, so results do not depend on scheduling.

pub mod config;
pub mod output;

use serde::{Deserialize, Serialize};

use crate::construct::{construct, PseudoKnockoff};
use crate::datagen::{sample_design, sample_response, sample_signal, DesignEnsemble};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::rng::derive_seed;
use crate::select::evaluate;
use crate::stats::{
    default_lambda, half_lasso_statistic, lasso_signmax_baseline, least_squares_statistic, FeatureStatistics,
    SplitSolver, StatKind,
};

pub use config::{preset, DesignSection, ExperimentConfig, GridPoint, MethodSpec, SweepSection, SweepVariable};

/// Path tags below the base seed.
const DESIGN_TAG: u64 = 1;
const TRIAL_TAG: u64 = 2;
const BETA_TAG: u64 = 3;

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub sweep_value: f64,
    pub label: String,
    pub method: String,
    pub stat: String,
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    /// `inf` when nothing is selected.
    pub threshold: f64,
    pub selected: usize,
    pub false_selected: usize,
    pub fdp: f64,
    pub power: f64,
    pub ratio_stat: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

/// A construction or a trial that did not produce a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub grid_index: usize,
    pub sweep_value: f64,
    pub label: String,
    /// `None` for a construction failure, which voids the whole grid point
    /// for that method.
    pub trial: Option<usize>,
    pub reason: String,
}

/// Per-grid-point facts about a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionInfo {
    pub grid_index: usize,
    pub sweep_value: f64,
    pub label: String,
    pub gamma: Option<f64>,
    /// Mean knockoff `s_i` (baselines only).
    pub mean_s: Option<f64>,
}

/// Aggregates for one `(grid point, method)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid_index: usize,
    pub sweep_value: f64,
    pub label: String,
    pub trials: usize,
    pub failed: usize,
    pub fdr: f64,
    pub fdr_se: f64,
    pub power: f64,
    pub power_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<FailureRecord>,
    pub constructions: Vec<ConstructionInfo>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    /// True if any construction or trial failed.
    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn summary_for(&self, grid_index: usize, label: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.grid_index == grid_index && r.label == label)
    }
}

struct Prepared {
    label: String,
    spec: MethodSpec,
    pk: PseudoKnockoff,
    solver: SplitSolver,
}

/// Seed of the design at grid point `g`.
pub fn grid_seed(base: u64, g: usize) -> u64 {
    derive_seed(base, &[DESIGN_TAG, g as u64])
}

/// Seed of trial `t` at grid point `g`; shared by all methods.
pub fn trial_seed(base: u64, g: usize, t: usize) -> u64 {
    derive_seed(base, &[TRIAL_TAG, g as u64, t as u64])
}

/// Statistic of one method on one response.
pub fn method_statistic(
    spec: &MethodSpec,
    pk: &PseudoKnockoff,
    solver: &SplitSolver,
    x: &crate::numerics::Matrix,
    y: &crate::numerics::Vector,
    mu: f64,
    mask_floor: f64,
) -> Result<FeatureStatistics> {
    let split = solver.split(y)?;
    let lambda = default_lambda(&split, mu)?;
    match spec.stat_kind() {
        StatKind::LeastSquares => Ok(least_squares_statistic(&split)),
        kind @ (StatKind::W1 | StatKind::W2) => half_lasso_statistic(solver, &split, lambda, kind),
        StatKind::LassoSignMax => {
            let s = pk
                .s
                .as_ref()
                .ok_or_else(|| Error::param("lasso_signmax needs a knockoff s-vector"))?;
            lasso_signmax_baseline(x, &pk.xt, y, lambda, s, mask_floor)
        }
    }
}

fn prepare(cfg: &ExperimentConfig, design: &DesignEnsemble, g: &GridPoint) -> (Vec<Prepared>, Vec<FailureRecord>, Vec<ConstructionInfo>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    let mut info = Vec::new();
    for spec in &cfg.methods {
        let label = spec.display_label(&cfg.construct);
        let built = construct(design, spec.method, &spec.options(&cfg.construct))
            .and_then(|pk| SplitSolver::new(&design.x, &pk.xt).map(|solver| (pk, solver)));
        match built {
            Ok((pk, solver)) => {
                info.push(ConstructionInfo {
                    grid_index: g.index,
                    sweep_value: g.value,
                    label: label.clone(),
                    gamma: pk.gamma,
                    mean_s: pk.s.as_ref().map(|s| s.iter().sum::<f64>() / s.len() as f64),
                });
                ok.push(Prepared {
                    label,
                    spec: spec.clone(),
                    pk,
                    solver,
                });
            }
            Err(e) => failed.push(FailureRecord {
                grid_index: g.index,
                sweep_value: g.value,
                label,
                trial: None,
                reason: e.to_string(),
            }),
        }
    }
    (ok, failed, info)
}

type TrialOutcome = Vec<std::result::Result<TrialRecord, FailureRecord>>;

fn run_trial(cfg: &ExperimentConfig, g: &GridPoint, design: &DesignEnsemble, methods: &[Prepared], t: usize) -> TrialOutcome {
    let seed = trial_seed(cfg.seed, g.index, t);
    let beta_seed = if cfg.design.freeze_beta {
        derive_seed(cfg.seed, &[BETA_TAG, g.index as u64])
    } else {
        seed
    };
    let fail = |label: &str, e: Error| FailureRecord {
        grid_index: g.index,
        sweep_value: g.value,
        label: label.to_string(),
        trial: Some(t),
        reason: e.to_string(),
    };
    let drawn = sample_signal(g.p, g.k, g.amplitude, beta_seed)
        .and_then(|signal| sample_response(&design.x, &signal.beta, seed).map(|y| (signal, y)));
    let (signal, y) = match drawn {
        Ok(v) => v,
        Err(e) => {
            let reason = e.to_string();
            return methods
                .iter()
                .map(|m| Err(fail(&m.label, Error::Config(reason.clone()))))
                .collect();
        }
    };
    methods
        .iter()
        .map(|m| {
            let stat = method_statistic(
                &m.spec,
                &m.pk,
                &m.solver,
                &design.x,
                &y,
                cfg.stats.mu,
                cfg.stats.mask_floor,
            )
            .map_err(|e| fail(&m.label, e))?;
            let out = evaluate(&stat.w, &signal.beta, cfg.q);
            let false_selected = out.selected.iter().filter(|&&j| signal.is_null(j)).count();
            Ok(TrialRecord {
                grid_index: g.index,
                sweep_value: g.value,
                label: m.label.clone(),
                method: m.spec.method.name().to_string(),
                stat: m.spec.stat_kind().name().to_string(),
                trial: t,
                seed,
                k: signal.k,
                threshold: out.threshold,
                selected: out.selected.len(),
                false_selected,
                fdp: out.fdp,
                power: out.power,
                ratio_stat: out.ratio_stat,
                lambda: stat.lambda,
                sweeps: stat.sweeps,
            })
        })
        .collect()
}

/// Runs every grid point of `cfg`. Construction failures void a method at a
/// grid point and the run continues; failed trials are counted, not averaged.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Execution) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut constructions = Vec::new();
    for g in cfg.grid()? {
        let design = match sample_design(&g.covariance, g.n, g.p, grid_seed(cfg.seed, g.index)) {
            Ok(d) => d,
            Err(e) => {
                for spec in &cfg.methods {
                    failures.push(FailureRecord {
                        grid_index: g.index,
                        sweep_value: g.value,
                        label: spec.display_label(&cfg.construct),
                        trial: None,
                        reason: e.to_string(),
                    });
                }
                continue;
            }
        };
        let (methods, failed, info) = prepare(cfg, &design, &g);
        failures.extend(failed);
        constructions.extend(info);
        if methods.is_empty() {
            continue;
        }
        let outcomes = map_indexed(mode, cfg.trials, |t| run_trial(cfg, &g, &design, &methods, t));
        // method-major order: all trials of the first method, then the next
        for mi in 0..methods.len() {
            for outcome in &outcomes {
                match &outcome[mi] {
                    Ok(r) => records.push(r.clone()),
                    Err(f) => failures.push(f.clone()),
                }
            }
        }
    }
    let summary = summarize_with_failures(&records, &failures);
    Ok(ExperimentResult {
        config: cfg.clone(),
        records,
        failures,
        constructions,
        summary,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Means and standard errors per `(grid point, label)`, in first-seen order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    summarize_with_failures(records, &[])
}

pub fn summarize_with_failures(records: &[TrialRecord], failures: &[FailureRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, f64, String)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.grid_index && k.2 == r.label) {
            keys.push((r.grid_index, r.sweep_value, r.label.clone()));
        }
    }
    keys.into_iter()
        .map(|(g, value, label)| {
            let rows: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.grid_index == g && r.label == label)
                .collect();
            let col = |f: fn(&TrialRecord) -> f64| mean_se(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (fdr, fdr_se) = col(|r| r.fdp);
            let (power, power_se) = col(|r| r.power);
            let (ratio, ratio_se) = col(|r| r.ratio_stat);
            let failed = failures
                .iter()
                .filter(|f| f.grid_index == g && f.label == label && f.trial.is_some())
                .count();
            SummaryRow {
                grid_index: g,
                sweep_value: value,
                label,
                trials: rows.len(),
                failed,
                fdr,
                fdr_se,
                power,
                power_se,
                ratio,
                ratio_se,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::Method;

    fn small() -> ExperimentConfig {
        let mut cfg = preset("sparsity").unwrap();
        cfg.design.n = 90;
        cfg.design.p = 30;
        cfg.sweep.values = vec![0.0, 5.0];
        cfg.trials = 8;
        cfg
    }

    fn record(fdp: f64, power: f64) -> TrialRecord {
        TrialRecord {
            grid_index: 0,
            sweep_value: 1.0,
            label: "x".into(),
            method: "general".into(),
            stat: "w1".into(),
            trial: 0,
            seed: 0,
            k: 1,
            threshold: 1.0,
            selected: 1,
            false_selected: 0,
            fdp,
            power,
            ratio_stat: 0.0,
            lambda: 1.0,
            sweeps: 1,
        }
    }

    #[test]
    fn summary_arithmetic() {
        let s = summarize(&[record(0.3, 1.0)]);
        assert_eq!((s[0].fdr, s[0].fdr_se, s[0].trials), (0.3, 0.0, 1));
        let s = summarize(&[record(0.0, 1.0), record(1.0, 0.0)]);
        assert_eq!(s[0].fdr, 0.5);
        assert!((s[0].fdr_se - 0.5).abs() < 1e-15);
        let recs: Vec<_> = (0..200).map(|i| record((i % 4) as f64 / 4.0, 1.0)).collect();
        let s = summarize(&recs);
        assert!((s[0].fdr - 0.375).abs() < 1e-15);
        assert_eq!(s[0].power_se, 0.0);
    }

    #[test]
    fn runs_are_reproducible_and_paired() {
        let cfg = small();
        let a = run_experiment(&cfg, Execution::Parallel).unwrap();
        let b = run_experiment(&cfg, Execution::Sequential).unwrap();
        assert_eq!(a.records, b.records);
        assert!(!a.has_failures());
        assert_eq!(a.records.len(), 2 * 8 * 3);
        // k = 0: power 0, and any selection is all false
        for r in a.records.iter().filter(|r| r.grid_index == 0) {
            assert_eq!(r.power, 0.0);
            assert!(r.fdp == 0.0 || r.fdp == 1.0);
        }
        for r in &a.records {
            let sel = r.selected.max(1) as f64;
            assert!((r.fdp * sel - (r.fdp * sel).round()).abs() < 1e-12);
            assert!((r.power * r.k.max(1) as f64 - (r.power * r.k.max(1) as f64).round()).abs() < 1e-12);
        }
        // every method shares the trial seed
        let seeds = |label: &str| -> Vec<u64> { a.records.iter().filter(|r| r.label == label).map(|r| r.seed).collect() };
        assert_eq!(seeds("orthogonal+w2"), seeds("general(m=2)+w1"));
    }

    #[test]
    fn construction_failure_is_recorded() {
        let mut cfg = small();
        cfg.sweep.values = vec![5.0];
        cfg.methods = vec![MethodSpec::new(Method::General).with_m(2), MethodSpec::new(Method::Orthogonal)];
        cfg.construct.classes = Some(vec![vec![0, 1]]);
        let res = run_experiment(&cfg, Execution::Sequential).unwrap();
        assert!(res.has_failures());
        assert_eq!(res.failures[0].trial, None);
        assert!(res.records.iter().all(|r| r.method == "orthogonal"));
    }

    #[test]
    fn knockoff_baselines_run() {
        let mut cfg = small();
        cfg.sweep.values = vec![5.0];
        cfg.methods = vec![
            MethodSpec::new(Method::KnockoffSdp).with_stat(StatKind::W1),
            MethodSpec::new(Method::KnockoffSdp).with_stat(StatKind::LassoSignMax),
            MethodSpec::new(Method::Orthogonal).with_stat(StatKind::LeastSquares),
        ];
        let res = run_experiment(&cfg, Execution::Parallel).unwrap();
        assert!(!res.has_failures(), "{:?}", res.failures);
        assert_eq!(res.summary.len(), 3);
        assert!(res.constructions[0].mean_s.is_some());
    }
}
