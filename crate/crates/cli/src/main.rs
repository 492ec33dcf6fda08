//! `pseudoko` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 partial experiment
//! failure, 3 verification failure.

mod input;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pseudoko::construct::{construct, validate_construction, ConstructOptions, Method};
use pseudoko::datagen::{sample_design, CovarianceModel, DesignEnsemble};
use pseudoko::numerics::Vector;
use pseudoko::parallel::{with_jobs, Execution};
use pseudoko::select::knockoff_plus_threshold;
use pseudoko::simharness::{self, output, ExperimentConfig, MethodSpec};
use pseudoko::stats::{SplitSolver, StatKind};
use pseudoko::theory::{self, BoundPlan, McBudget};

const OK: u8 = 0;
const INPUT: u8 = 1;
const PARTIAL: u8 = 2;
const VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "pseudoko", version, about = "Pseudo-knockoff filter: experiments, verifiers and selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
}

impl Common {
    fn mode(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation sweep and write trials.csv, summary.json, plotdata/.
    Run {
        /// TOML experiment config.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named preset (see --list-presets).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        list_presets: bool,
        /// Override the number of trials per grid point.
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check the defining identities of every construction on fixtures.
    ConstructCheck {
        #[arg(long, default_value_t = 60)]
        p: usize,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Certify the uniform FDP constant by slicing.
    VerifyBounds {
        /// TOML file with BoundPlan overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Include every slicing sequence in the certificate.
        #[arg(long)]
        record_sequences: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo and closed-form checks of the FDP inequalities.
    VerifyMc {
        /// Divide every trial budget by this factor (quick runs).
        #[arg(long, default_value_t = 1)]
        reduce: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply the filter to a design and response.
    Filter {
        /// Design: CSV, or binary (u64 LE n, u64 LE p, then n·p f64 LE row-major).
        #[arg(long)]
        x: PathBuf,
        /// Response of length n, same formats (binary with p = 1).
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value = "general")]
        method: String,
        /// w1, w2, least_squares or lasso_signmax; default depends on the method.
        #[arg(long)]
        stat: Option<String>,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        /// Class count for the general construction.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Keep the columns of X as given instead of scaling to unit norm.
        #[arg(long)]
        no_normalize: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { INPUT } else { OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(INPUT)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run {
            config,
            preset,
            list_presets,
            trials,
            out,
            common,
        } => {
            if list_presets {
                for p in simharness::config::PRESETS {
                    println!("{p}");
                }
                return Ok(OK);
            }
            let mut cfg = match (config, preset) {
                (Some(path), _) => ExperimentConfig::from_path(&path)?,
                (None, Some(name)) => simharness::preset(&name)?,
                (None, None) => bail!("give --config or --preset"),
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.validate()?;
            let mode = common.mode();
            let res = with_jobs(common.jobs, || simharness::run_experiment(&cfg, mode))?;
            output::write_outputs(&out, &res).with_context(|| format!("writing {}", out.display()))?;
            for r in &res.summary {
                println!(
                    "{:>3} {:<10} {:<28} fdr {:.3} ± {:.3}  power {:.3}  ratio {:.3}  n={} failed={}",
                    r.grid_index, r.sweep_value, r.label, r.fdr, r.fdr_se, r.power, r.ratio, r.trials, r.failed
                );
            }
            if res.has_failures() {
                eprintln!("{} failures recorded in summary.json", res.failures.len());
                return Ok(PARTIAL);
            }
            Ok(OK)
        }
        Command::ConstructCheck { p, n, out, common } => {
            let seed = common.seed.unwrap_or(1);
            let report = with_jobs(common.jobs, || construct_check(p, n, seed))?;
            let pass = report["pass"].as_bool().unwrap_or(false);
            emit(&report, out.as_deref())?;
            Ok(if pass { OK } else { VERIFY })
        }
        Command::VerifyBounds {
            config,
            record_sequences,
            out,
            common,
        } => {
            let mut plan = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str::<BoundPlan>(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => BoundPlan::default(),
            };
            plan.record_sequences |= record_sequences;
            let mode = common.mode();
            let cert = with_jobs(common.jobs, || theory::sup_bound_pipeline(&plan, mode))?;
            let pass = cert.constant <= 3.9;
            let doc = json!({
                "schema_version": output::SCHEMA_VERSION,
                "checks": [{
                    "name": "uniform constant",
                    "value": cert.constant,
                    "bound": 3.9,
                    "margin": 3.9 - cert.constant,
                    "pass": pass,
                }],
                "constant": cert.constant,
                "pass": pass,
                "certificate": cert,
            });
            emit(&doc, out.as_deref())?;
            eprintln!("certified constant {:.6} (bound 3.9): {}", cert.constant, verdict(pass));
            Ok(if pass { OK } else { VERIFY })
        }
        Command::VerifyMc { reduce, out, common } => {
            let r = reduce.max(1);
            let d = McBudget::default();
            let budget = McBudget {
                fixed_t: (d.fixed_t / r).max(1000),
                sup: (d.sup / r).max(1000),
                mgf: (d.mgf / r).max(1000),
                orthogonal: (d.orthogonal / r).max(1000),
            };
            let seed = common.seed.unwrap_or(7);
            let mode = common.mode();
            let checks = with_jobs(common.jobs, || theory::mc_suite(seed, budget, mode))?;
            let pass = checks.iter().all(|c| c.pass);
            for c in &checks {
                eprintln!("{:<4} {}: {:.6} vs {:.6}", verdict(c.pass), c.name, c.value, c.bound);
            }
            let doc = json!({
                "schema_version": output::SCHEMA_VERSION,
                "seed": seed,
                "budget": budget,
                "checks": checks,
                "pass": pass,
            });
            emit(&doc, out.as_deref())?;
            Ok(if pass { OK } else { VERIFY })
        }
        Command::Filter {
            x,
            y,
            method,
            stat,
            q,
            m,
            no_normalize,
            common,
        } => {
            let xm = input::read_matrix(&x).with_context(|| format!("reading {}", x.display()))?;
            let yv = input::read_vector(&y).with_context(|| format!("reading {}", y.display()))?;
            let method: Method = method.parse()?;
            let mut spec = MethodSpec::new(method).with_m(m);
            if let Some(s) = stat {
                spec = spec.with_stat(s.parse::<StatKind>()?);
            }
            if !(q > 0.0 && q < 1.0) {
                bail!("q = {q} outside (0, 1)");
            }
            let seed = common.seed.unwrap_or(0);
            let result = with_jobs(common.jobs, || filter(xm, yv, &spec, q, !no_normalize, seed))?;
            println!("{result}");
            Ok(OK)
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn emit(doc: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn construct_check(p: usize, n: usize, seed: u64) -> Result<serde_json::Value> {
    let fixtures = [
        CovarianceModel::Identity,
        CovarianceModel::Ar { rho: 0.5 },
        CovarianceModel::Group {
            group_size: 5,
            rho: 0.5,
            between: 0.0,
        },
    ];
    let mut checks = Vec::new();
    let mut pass = true;
    for (fi, model) in fixtures.iter().enumerate() {
        let design = sample_design(model, n, p, seed.wrapping_add(fi as u64))?;
        for method in Method::ALL {
            let entry = match construct(&design, method, &ConstructOptions::default())
                .and_then(|pk| validate_construction(&pk, &design.x))
            {
                Ok(rep) => {
                    pass &= rep.pass;
                    json!({
                        "fixture": model.label(),
                        "method": method.name(),
                        "value": rep.max_residual(),
                        "bound": rep.tolerance,
                        "margin": rep.tolerance - rep.max_residual(),
                        "pass": rep.pass,
                        "report": rep,
                    })
                }
                Err(e) => {
                    pass = false;
                    json!({"fixture": model.label(), "method": method.name(), "pass": false, "error": e.to_string()})
                }
            };
            checks.push(entry);
        }
    }
    Ok(json!({
        "schema_version": output::SCHEMA_VERSION,
        "p": p,
        "n": n,
        "seed": seed,
        "checks": checks,
        "pass": pass,
    }))
}

fn filter(x: pseudoko::numerics::Matrix, y: Vector, spec: &MethodSpec, q: f64, normalize: bool, seed: u64) -> Result<String> {
    let (n, p) = x.shape();
    if y.len() != n {
        bail!("y has length {}, X has {n} rows", y.len());
    }
    if n <= 2 * p {
        bail!("need n > 2p, got n = {n}, p = {p}");
    }
    let design = DesignEnsemble::from_matrix(x, normalize, seed)?;
    let opts = spec.options(&ConstructOptions::default());
    let pk = construct(&design, spec.method, &opts)?;
    let solver = SplitSolver::new(&design.x, &pk.xt)?;
    let stat = simharness::method_statistic(
        spec,
        &pk,
        &solver,
        &design.x,
        &y,
        pseudoko::stats::DEFAULT_MU,
        pseudoko::stats::DEFAULT_MASK_FLOOR,
    )?;
    let t = knockoff_plus_threshold(&stat.w, q);
    let selected = pseudoko::select::select(&stat.w, t);
    let idx: Vec<String> = selected.iter().map(|j| (j + 1).to_string()).collect();
    Ok(format!(
        "selected: {}\nthreshold: {}\nlambda: {}\nmethod: {}",
        idx.join(" "),
        t,
        stat.lambda,
        spec.display_label(&opts)
    ))
}
