use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pseudoko::datagen::{sample_design, sample_response, sample_signal, CovarianceModel};
use pseudoko::numerics::Matrix;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pseudoko"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const MINIMAL: &str = r#"
name = "minimal"
seed = 5
trials = 6

[design]
n = 90
p = 30
k = 5
amplitude = 3.5
covariance = { kind = "identity" }

[sweep]
variable = "amplitude"
values = [3.0, 4.0]

[[methods]]
method = "orthogonal"

[[methods]]
method = "general"
m = 2
"#;

fn write_csv(path: &Path, m: &Matrix) {
    let mut text = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn write_bin(path: &Path, m: &Matrix) {
    let mut out = Vec::new();
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, out).unwrap();
}

#[test]
fn run_writes_stable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert_eq!(code(&out), 0);

    let trials = fs::read_to_string(a.join("trials.csv")).unwrap();
    let header = trials.lines().next().unwrap();
    assert_eq!(
        header,
        "schema_version,grid_index,sweep_variable,sweep_value,label,method,stat,trial,seed,k,threshold,selected,false_selected,fdp,power,ratio_stat,lambda,sweeps"
    );
    assert_eq!(trials.lines().count(), 1 + 2 * 2 * 6);
    assert_eq!(trials, fs::read_to_string(b.join("trials.csv")).unwrap());

    for metric in ["fdr", "power", "ratio"] {
        let plot = fs::read_to_string(a.join("plotdata").join(format!("{metric}.csv"))).unwrap();
        let mut series: Vec<&str> = plot.lines().skip(1).map(|l| l.split(',').nth(3).unwrap()).collect();
        series.sort();
        series.dedup();
        assert_eq!(series, vec!["general(m=2)+w1", "orthogonal+w2"]);
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["summary"].as_array().unwrap().len(), 4);
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["run", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run(&["run", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(
        fs::read_to_string(a.join("trials.csv")).unwrap(),
        fs::read_to_string(b.join("trials.csv")).unwrap()
    );
}

#[test]
fn bad_config_exits_1_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, MINIMAL.replace("trials = 6", "trials = 6\ntrails = 3")).unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trails") && err.contains("line"), "{err}");
}

#[test]
fn failed_construction_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    // classes that do not cover every feature
    fs::write(&cfg, format!("{MINIMAL}\n[construct]\nclasses = [[0, 1]]\n")).unwrap();
    let o = dir.path().join("o");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failed_constructions"], 2);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["run"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["run", "--preset", "nope"])), 1);
}

#[test]
fn presets_are_listed() {
    let out = run(&["run", "--list-presets"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).lines().any(|l| l == "within_group"));
}

#[test]
fn construct_check_passes() {
    let out = run(&["construct-check", "--p", "30", "--n", "100"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let checks = doc["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 15);
    assert!(checks.iter().all(|c| c["pass"] == true && c["value"].as_f64().unwrap() <= 1e-8 * 100.0));
}

#[test]
fn verify_bounds_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bounds.json");
    let out = run(&["verify-bounds", "--out", path.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let constant = doc["constant"].as_f64().unwrap();
    assert!(constant <= 3.9, "{constant}");
    assert_eq!(code(&out), 0);
    assert_eq!(doc["certificate"]["per_t"].as_array().unwrap().len(), 2521);
}

#[test]
fn verify_bounds_coarse_plan_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    fs::write(&plan, "t_step = 0.5\n").unwrap();
    let out = run(&["verify-bounds", "--config", plan.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let constant = doc["constant"].as_f64().unwrap();
    // a coarse left-endpoint sum is looser than the default grid
    assert!(constant > 3.9);
    assert_eq!(code(&out), 3);
}

#[test]
fn verify_mc_passes() {
    let out = run(&["verify-mc", "--reduce", "10"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["pass"], true);
    for c in doc["checks"].as_array().unwrap() {
        assert!(c.get("margin").is_some());
    }
}

fn planted(seed: u64, k: usize, amplitude: f64, dir: &Path) -> (Vec<usize>, std::path::PathBuf, std::path::PathBuf) {
    let d = sample_design(&CovarianceModel::Identity, 200, 50, seed).unwrap();
    let signal = sample_signal(50, k, amplitude, seed).unwrap();
    let y = sample_response(&d.x, &signal.beta, seed).unwrap();
    let xp = dir.join(format!("x{seed}.csv"));
    let yp = dir.join(format!("y{seed}.csv"));
    write_csv(&xp, &d.x);
    write_csv(&yp, &Matrix::from_column_slice(200, 1, y.as_slice()));
    let support = (0..50).filter(|&j| signal.beta[j] != 0.0).map(|j| j + 1).collect();
    (support, xp, yp)
}

fn selected(out: &Output) -> Vec<usize> {
    let text = stdout(out);
    let line = text.lines().find(|l| l.starts_with("selected:")).unwrap();
    line["selected:".len()..].split_whitespace().map(|v| v.parse().unwrap()).collect()
}

#[test]
fn filter_recovers_strong_signals() {
    let dir = tempfile::tempdir().unwrap();
    let mut full = 0;
    for seed in 0..20 {
        let (support, xp, yp) = planted(seed, 10, 10.0, dir.path());
        let out = run(&["filter", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let sel = selected(&out);
        if support.iter().all(|j| sel.contains(j)) {
            full += 1;
        }
    }
    assert!(full >= 18, "all planted selected in {full}/20");
}

#[test]
fn filter_null_input_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let (_, xp, yp) = planted(3, 0, 0.0, dir.path());
    for method in ["orthogonal", "block_diagonal", "general", "knockoff_sdp"] {
        let out = run(&["filter", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--method", method]);
        assert_eq!(code(&out), 0, "{method}");
        assert!(stdout(&out).contains("threshold:"));
    }
}

#[test]
fn filter_binary_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (_, xp, yp) = planted(4, 10, 5.0, dir.path());
    let d = sample_design(&CovarianceModel::Identity, 200, 50, 4).unwrap();
    let xb = dir.path().join("x.bin");
    write_bin(&xb, &d.x);
    let a = run(&["filter", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap()]);
    let b = run(&["filter", "--x", xb.to_str().unwrap(), "--y", yp.to_str().unwrap()]);
    assert_eq!(code(&b), 0);
    assert_eq!(selected(&a), selected(&b));
}

#[test]
fn filter_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2,3\n4,5\n").unwrap();
    let (_, xp, yp) = planted(5, 0, 0.0, dir.path());
    let out = run(&["filter", "--x", bad.to_str().unwrap(), "--y", yp.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());

    // n <= 2p
    let wide = dir.path().join("wide.csv");
    write_csv(&wide, &Matrix::from_fn(200, 100, |i, j| ((i * 7 + j * 13) % 17) as f64));
    let out = run(&["filter", "--x", wide.to_str().unwrap(), "--y", yp.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n > 2p"));

    let out = run(&["filter", "--x", xp.to_str().unwrap(), "--y", yp.to_str().unwrap(), "--method", "magic"]);
    assert_eq!(code(&out), 1);
}
