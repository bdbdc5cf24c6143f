use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rstar_core::simlab::Design;
use rstar_core::ModelSpec;
use serde_json::Value;

fn rstar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rstar")).args(args).output().unwrap()
}

fn write_data(dir: &Path, family: ModelSpec, n: usize) -> PathBuf {
    let design = Design {
        family,
        p: 2,
        beta_true: vec![0.5, -0.4],
        intercept: 0.2,
        interest: 0,
        sigma: 1.0,
        error_df: None,
    };
    let data = design.generate(11, 0, n).unwrap();
    let mut text = String::from("x1,x2,y\n");
    for i in 0..n {
        text.push_str(&format!("{},{},{}\n", data.x()[(i, 1)], data.x()[(i, 2)], data.y()[i]));
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn test_at_the_estimate_is_patched() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), ModelSpec::Logistic, 120);
    let fit_out = dir.path().join("fit.json");
    let o = rstar(&["fit", "--input", data.to_str().unwrap(), "--intercept", "--interest", "x1", "--output", fit_out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = json(&fit_out);
    let psi_hat = fit["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "x1")
        .unwrap()["estimate"]
        .as_f64()
        .unwrap();

    let out = dir.path().join("test.json");
    let psi = format!("{psi_hat:e}");
    let o = rstar(&["test", "--input", data.to_str().unwrap(), "--intercept", "--interest", "x1", "--psi0", &psi, "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = json(&out);
    assert!(t["r"].as_f64().unwrap().abs() <= 1e-6);
    assert_eq!(t["near_zero_patched"], true);
    assert!((t["p_r_two_sided"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    let lo = t["interval_r_star"]["lo"].as_f64().unwrap();
    let hi = t["interval_r_star"]["hi"].as_f64().unwrap();
    assert!(lo < psi_hat && psi_hat < hi);

    let manifest = json(&dir.path().join("test.json.manifest.json"));
    assert_eq!(manifest["subcommand"], "test");
    assert_eq!(manifest["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0], "test.json");
}

#[test]
fn location_scale_test_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), "locscale-t:5".parse::<ModelSpec>().unwrap(), 60);
    let out = dir.path().join("prof.csv");
    let o = rstar(&["profile", "--input", data.to_str().unwrap(), "--intercept", "--family", "locscale-t:5", "--radius", "3", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.starts_with("psi,l_p,logdet_nuisance"));

    let o = rstar(&["test", "--input", data.to_str().unwrap(), "--intercept", "--family", "locscale-t:5", "--psi0", "-0.9", "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("field,value"));
    assert!(stdout.contains("score_s,"));
}

#[test]
fn malformed_input_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "x1,y\n1.0,0\nabc,1\n0.5,1\n").unwrap();
    let out = dir.path().join("fit.json");
    let o = rstar(&["fit", "--input", data.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());

    let o = rstar(&["fit", "--input", dir.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_data(dir.path(), ModelSpec::Logistic, 50);
    let o = rstar(&["test", "--input", data.to_str().unwrap(), "--level", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rstar(&["fit", "--input", data.to_str().unwrap(), "--interest", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "family = \"logistic\"\np = 2\nbeta_true = [0.0, 1.0]\nintercept = 0.0\nn_grid = [100, 50]\npsi0 = 0.0\nreps = 100\nbootstrap_reps = 100\nlevel = 0.95\n").unwrap();
    let o = rstar(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_from_config_writes_results_plot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "family = \"logistic\"\np = 2\nbeta_true = [0.0, 1.0]\nintercept = 0.5\nn_grid = [50, 100, 200]\npsi0 = 0.0\nreps = 100\nbootstrap_reps = 100\nlevel = 0.9\nseed = 3\n").unwrap();
    let out = dir.path().join("res.csv");
    let o = rstar(&["simulate", "--config", cfg.to_str().unwrap(), "--workers", "2", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(dir.path().join("res.plot.csv").exists());
    let manifest = json(&dir.path().join("res.csv.manifest.json"));
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["reps"], 100);
}

#[test]
fn config_without_seed_records_the_drawn_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    fs::write(&cfg, "family = \"logistic\"\np = 2\nbeta_true = [0.0, 1.0]\nintercept = 0.5\nn_grid = [40, 80, 160]\nreps = 100\nbootstrap_reps = 100\nlevel = 0.95\npsi0 = 0.0\n").unwrap();
    for _ in 0..4 {
        let o = rstar(&["verify", "--config", cfg.to_str().unwrap(), "--output", dir.path().join("v.csv").to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let manifest = json(&dir.path().join("v.csv.manifest.json"));
        assert!(manifest["seed"].as_u64().unwrap() <= i64::MAX as u64);
    }
}
