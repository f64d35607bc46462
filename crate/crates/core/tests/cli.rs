use std::path::{Path, PathBuf};
use std::process::Command;

use dualpath::chain::DetectionModel;
use dualpath::cli::Report;
use dualpath::config::OUT_DIR_ENV;
use dualpath::gaussian::GaussianState;
use dualpath::io::{read_json, read_shots_file, to_json};
use dualpath::reconstruction::ReconstructionResult;
use dualpath::tables::OperatorOrder;
use dualpath::wick::wick_joint_moments;
use serde_json::Value;
use tempfile::TempDir;

const Z_MAX: f64 = 5.0;

const SQUEEZED: &str = "[input]\nkind = \"squeezed\"\nxi = [0.0, 0.5]\n";

fn run(dir: &Path, args: &[&str]) -> i32 {
    run_env(dir, args, None)
}

fn run_env(dir: &Path, args: &[&str], out_env: Option<&Path>) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dualpath"));
    cmd.args(args).current_dir(dir).env_remove(OUT_DIR_ENV);
    if let Some(p) = out_env {
        cmd.env(OUT_DIR_ENV, p);
    }
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn simulate_writes_shots_and_model() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "run.toml", SQUEEZED);
    assert_eq!(run(tmp.path(), &["simulate", "--config", s(&cfg), "--shots", "10000", "--seed", "42", "--out-dir", "a"]), 0);
    let b = read_shots_file(&tmp.path().join("a/shots.csv"), vec![]).unwrap();
    assert_eq!((b.n_shots(), b.channels()), (10_000, 4));
    let m: Report<DetectionModel> = read_json(&tmp.path().join("a/model.json")).unwrap();
    assert_eq!((m.command.as_str(), m.seed), ("simulate", 42));
    assert_eq!(m.result.gains, vec![1e4, 1e4]);
}

#[test]
fn fixed_seed_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "run.toml", SQUEEZED);
    for (dir, seed) in [("a", "42"), ("b", "42"), ("c", "43")] {
        assert_eq!(run(tmp.path(), &["simulate", "--config", s(&cfg), "--shots", "5000", "--seed", seed, "--reference", "--out-dir", dir]), 0);
    }
    let read = |d: &str, f: &str| std::fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "shots.csv"), read("b", "shots.csv"));
    assert_eq!(read("a", "reference.csv"), read("b", "reference.csv"));
    assert_ne!(read("a", "shots.csv"), read("c", "shots.csv"));
    assert_ne!(read("a", "shots.csv"), read("a", "reference.csv"));
}

#[test]
fn rerun_from_report_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "run.toml", &format!("{SQUEEZED}[sampling]\nshots = 20000\nseed = 9\n"));
    assert_eq!(run(tmp.path(), &["simulate", "--config", s(&cfg), "--out-dir", "a"]), 0);
    assert_eq!(run(tmp.path(), &["simulate", "--config", "a/model.json", "--out-dir", "b"]), 0);
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("shots.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(json(&tmp.path().join("a/model.json"))["result"], json(&tmp.path().join("b/model.json"))["result"]);

    for d in ["a", "b"] {
        let out = format!("{d}/dpm.json");
        assert_eq!(run(tmp.path(), &["reconstruct", "--config", &format!("{d}/model.json"), "--method", "dpm", "--shots", &format!("{d}/shots.csv"), "--out", &out]), 0);
    }
    assert_eq!(run(tmp.path(), &["reconstruct", "--config", "a/dpm.json", "--out", "c.json"]), 0);
    let result = |p: &str| json(&tmp.path().join(p))["result"].clone();
    assert_eq!(result("a/dpm.json"), result("b/dpm.json"));
    assert_eq!(result("a/dpm.json"), result("c.json"));
}

#[test]
fn noiseless_vacuum_shots_match_model_covariance() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "run.toml", "[chain]\nn_amp1 = 0.0\nn_amp2 = 0.0\n[sampling]\nshots = 40000\nseed = 1\n");
    assert_eq!(run(tmp.path(), &["simulate", "--config", s(&cfg), "--out-dir", "."]), 0);
    let m: Report<DetectionModel> = read_json(&tmp.path().join("model.json")).unwrap();
    let b = read_shots_file(&tmp.path().join("shots.csv"), vec![]).unwrap();
    let truth = m.result.measured.cov();
    let n = b.n_shots() as f64;
    for i in 0..4 {
        for j in 0..4 {
            let c = b.rows().map(|r| r[i] * r[j]).sum::<f64>() / n;
            let se = ((truth[(i, i)] * truth[(j, j)] + truth[(i, j)].powi(2)) / n).sqrt();
            assert!((c - truth[(i, j)]).abs() < Z_MAX * se, "({i},{j}): {c} vs {}", truth[(i, j)]);
        }
    }
}

#[test]
fn dual_path_and_witness_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "run.toml", &format!("{SQUEEZED}[chain]\nn_amp1 = 2.0\nn_amp2 = 2.0\n"));
    let dir = tmp.path();
    assert_eq!(run(dir, &["simulate", "--config", s(&cfg), "--shots", "500000", "--seed", "2", "--reference", "--out-dir", "."]), 0);
    assert_eq!(run(dir, &["reconstruct", "--config", "model.json", "--method", "dpm", "--shots", "shots.csv"]), 0);
    let r: Report<ReconstructionResult> = read_json(&dir.join("reconstruct-dpm.json")).unwrap();
    let n = r.result.signal.value(1, 1).unwrap().re;
    let e = r.result.signal.error(1, 1).unwrap().re;
    let truth = 0.5f64.sinh().powi(2);
    assert!((n - truth).abs() < Z_MAX * e, "{n} ± {e} vs {truth}");
    assert!(r.result.ancilla_check.unwrap().z_score().unwrap() < Z_MAX);

    assert_eq!(run(dir, &["reconstruct", "--config", "model.json", "--method", "refstate", "--shots", "shots.csv", "--reference", "reference.csv", "--order", "2"]), 0);
    assert_eq!(run(dir, &["witness", "--report", "reconstruct-refstate.json"]), 0);
    let w = json(&dir.join("witness.json"));
    assert_eq!(w["result"]["verdict"], "entangled");
    assert!(w["result"]["kernel"].as_f64().unwrap() > Z_MAX * w["result"]["kernel_error"].as_f64().unwrap());
}

#[test]
fn single_path_vacuum_reconstructs_to_zero() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(run(dir, &["simulate", "--shots", "200000", "--seed", "4", "--single-path", "--reference", "--out-dir", "."]), 0);
    assert_eq!(run(dir, &["reconstruct", "--config", "model.json", "--method", "spm", "--shots", "shots.csv", "--reference", "reference.csv", "--order", "2"]), 0);
    let r: Report<ReconstructionResult> = read_json(&dir.join("reconstruct-spm.json")).unwrap();
    for ((l, m), v) in r.result.signal.iter().filter(|((l, m), _)| l + m > 0) {
        let e = r.result.signal.error(l, m).unwrap();
        assert!(v.re.abs() <= Z_MAX * e.re && v.im.abs() <= Z_MAX * e.im.max(1e-12), "({l},{m}) = {v} ± {e}");
    }
}

#[test]
fn witness_without_blocks_is_withheld() {
    let tmp = TempDir::new().unwrap();
    let outputs = wick_joint_moments(&GaussianState::vacuum(2).unwrap(), [0, 1], 2, OperatorOrder::Normal).unwrap();
    std::fs::write(tmp.path().join("table.json"), to_json(&outputs).unwrap()).unwrap();
    assert_eq!(run(tmp.path(), &["witness", "--report", "table.json", "--out-dir", "."]), 3);
    let w = json(&tmp.path().join("witness.json"));
    assert_eq!(w["result"]["verdict"], "withheld");
    assert_eq!(w["result"]["negativity"].as_f64(), Some(0.0));
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let bad = config(dir, "bad.toml", "[sampling]\nshot = 3\n");
    assert_eq!(run(dir, &["simulate", "--config", s(&bad)]), 2);
    assert_eq!(run(dir, &["simulate", "--bogus"]), 2);
    assert_eq!(run(dir, &["simulate", "--config", "missing.toml"]), 4);
    assert_eq!(run(dir, &["reconstruct", "--method", "dpm", "--shots", "missing.csv"]), 4);
    assert_eq!(run(dir, &["simulate", "--shots", "1000", "--out-dir", "."]), 0);
    assert_eq!(run(dir, &["reconstruct", "--method", "spm", "--shots", "shots.csv"]), 2);
    std::fs::write(dir.join("broken.csv"), "x1,p1,x2,p2\n1,2,3\n").unwrap();
    assert_eq!(run(dir, &["reconstruct", "--method", "dpm", "--shots", "broken.csv"]), 2);
}

#[test]
fn output_directory_precedence() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let env_dir = dir.join("from-env");
    assert_eq!(run_env(dir, &["simulate", "--shots", "100"], Some(&env_dir)), 0);
    assert!(env_dir.join("shots.csv").exists());
    assert_eq!(run_env(dir, &["simulate", "--shots", "100", "--out-dir", "from-flag"], Some(&env_dir)), 0);
    assert!(dir.join("from-flag/shots.csv").exists());
    let cfg = config(dir, "run.toml", "[output]\ndir = \"from-config\"\n");
    assert_eq!(run_env(dir, &["simulate", "--shots", "100", "--config", s(&cfg)], Some(&env_dir)), 0);
    assert!(dir.join("from-config/shots.csv").exists());
}

#[test]
fn compare_writes_ratio_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "run.toml", SQUEEZED);
    assert_eq!(run(tmp.path(), &["compare", "--config", s(&cfg), "--preset", "scaled", "--repeats", "100", "--blocks", "5", "--out-dir", "."]), 0);
    let csv = std::fs::read_to_string(tmp.path().join("ratios.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("l,m,order,n_shots,n_amp,ratio,ratio_err,sigma_dp,sigma_sp"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    let report = json(&tmp.path().join("compare.json"));
    assert_eq!(rows.len(), report["result"]["table"]["rows"].as_array().unwrap().len());
    assert_eq!(report["config"]["compare"]["repeats"], 100);
    let fourth = rows.iter().find(|r| r[0] == 4.0 && r[1] == 0.0 && r[4] == 10.0).unwrap();
    assert!(fourth[5] < 1.0, "{fourth:?}");
}

#[test]
fn ingest_canonicalizes_external_tables() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("raw.txt"), "# digitizer dump\nI,Q\n0.5,-1.0\n1.5,2.0\n").unwrap();
    assert_eq!(run(tmp.path(), &["ingest", "--input", "raw.txt", "--scale", "2", "--out", "canon/shots.csv"]), 0);
    let b = read_shots_file(&tmp.path().join("canon/shots.csv"), vec![]).unwrap();
    assert_eq!(b.data(), &[1.0, -2.0, 3.0, 4.0]);
    assert_eq!(run(tmp.path(), &["ingest", "--input", "raw.txt", "--scale", "0", "--out", "x.csv"]), 2);
}
