use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn oce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oce")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.display().to_string()
}

fn run(cmd: &str, cfg: &Value, out: &Path, extra: &[&str]) -> Output {
    let dir = out.parent().unwrap();
    let path = write_config(dir, &format!("{cmd}.json"), cfg);
    let mut args = vec![cmd, "--config", &path, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    oce(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn tanh_config() -> Value {
    json!({
        "loss": { "name": "entropic" },
        "problem": {
            "drift": { "kind": "identity" },
            "sigma": 1.0,
            "controls": [-1.0, 1.0],
            "terminal": { "kind": "tanh", "scale": 1.0, "amplitude": 1.0 },
            "horizon": 1.0,
            "y_box": [-6.0, 6.0],
            "z_box": [0.25, 4.25]
        },
        "grid": { "n_t": 21, "n_y": 49, "n_z": 33 },
        "beta_bound": 4.0,
        "seed": 3
    })
}

/// Every file under `dir` except the manifest, keyed by relative path.
fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, base, out);
            } else if path.file_name().unwrap() != "manifest.json" {
                out.insert(path.strip_prefix(base).unwrap().display().to_string(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn oce_on_a_coin_flip() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({ "outcomes": [0.0, 1.0], "weights": [0.5, 0.5], "loss": { "name": "avar", "gamma": 0.5 } });
    let out = tmp.path().join("out");
    let o = run("oce", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("value")).unwrap().to_string();
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value - 1.0).abs() < 1e-9, "{line}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "oce");
    assert_eq!(manifest["config"]["loss"]["gamma"], 0.5);
    assert!(manifest["versions"]["oce-control"].is_string());
}

#[test]
fn z_box_outside_the_conjugate_domain_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tanh_config();
    cfg["loss"] = json!({ "name": "avar", "gamma": 0.5 });
    cfg["problem"]["z_box"] = json!([0.0, 3.0]);
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("z_box"), "{}", stderr(&o));
}

#[test]
fn unknown_fields_are_named() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tanh_config();
    cfg["grid"]["n_w"] = json!(3);
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid") && stderr(&o).contains("n_w"), "{}", stderr(&o));
}

#[test]
fn presets_pass_check_loss() {
    let tmp = TempDir::new().unwrap();
    for loss in [json!({ "name": "entropic" }), json!({ "name": "mmv" }), json!({ "name": "avar", "gamma": 0.25 })] {
        let out = tmp.path().join("out");
        let o = run("check-loss", &json!({ "loss": loss }), &out, &[]);
        assert!(o.status.success(), "{}", stdout(&o));
        assert_eq!(read_json(&out.join("check_loss.json"))["passed"], true);
    }
}

#[test]
fn solve_writes_fields_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("solve", &tanh_config(), &a, &["--workers", "1"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_oce"))
        .args(["solve", "--config", tmp.path().join("solve.json").to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("OCE_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let (fa, fb) = (data_files(&a), data_files(&b));
    assert!(fa.contains_key("value/t00000.csv") && fa.contains_key("policy/alpha/t00020.csv") && fa.contains_key("phi.csv"));
    assert_eq!(fa, fb);
    assert_eq!(read_json(&b.join("manifest.json"))["workers"], 3);
    let meta = read_json(&a.join("solve.json"));
    assert_eq!(meta["z_grid"]["n"], 33);
    assert!(meta["stats"]["substeps"].as_u64().unwrap() > 0);
}

#[test]
fn simulate_with_a_constant_policy() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tanh_config();
    cfg["simulate"] = json!({ "policy": { "kind": "constant", "alpha": -1.0, "beta": 0.0 } });
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let o = run("simulate", &cfg, &a, &["--paths", "2000", "--steps", "20", "--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run("simulate", &cfg, &b, &["--paths", "2000", "--steps", "20", "--seed", "11"]).status.success());
    assert_eq!(data_files(&a), data_files(&b));
    let rows = fs::read_to_string(a.join("paths.csv")).unwrap().lines().count();
    assert_eq!(rows, 2001);
    let summary = read_json(&a.join("summary.json"));
    let mean = summary["terminal_y"]["mean"].as_f64().unwrap();
    assert!((mean + 1.0).abs() < 0.1, "{mean}");
    let c = tmp.path().join("c");
    assert!(run("simulate", &cfg, &c, &["--paths", "2000", "--steps", "20", "--seed", "12"]).status.success());
    assert_ne!(data_files(&a)["paths.csv"], data_files(&c)["paths.csv"]);
}

#[test]
fn out_of_box_constant_policy_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tanh_config();
    cfg["simulate"] = json!({ "policy": { "kind": "constant", "alpha": 3.0, "beta": 0.0 } });
    let o = run("simulate", &cfg, &tmp.path().join("out"), &["--paths", "100"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn solve_free_matches_the_linear_closed_form() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tanh_config();
    cfg["problem"]["terminal"] = json!({ "kind": "linear", "slope": 1.0, "intercept": 0.0 });
    cfg["grid"] = json!({ "n_t": 41, "n_y": 121, "n_z": 3 });
    let out = tmp.path().join("out");
    assert!(run("solve-free", &cfg, &out, &[]).status.success());
    let meta = read_json(&out.join("phi.json"));
    assert!((meta["value_at_y0"].as_f64().unwrap() + 1.0).abs() < 1e-3);
    assert_eq!(fs::read_to_string(out.join("phi.csv")).unwrap().lines().count(), 42);
}

#[test]
fn validate_reports_every_check() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = tanh_config();
    cfg["validate"] = json!({
        "checks": ["properties", "dpp", "r_sweep", "mc"],
        "oracle_grid": [21, 241],
        "z_values": [1.0],
        "r_grid": [-4.0, 4.0, 33],
        "paths": 20000,
        "steps": 50
    });
    let out = tmp.path().join("out");
    let o = run("validate", &cfg, &out, &[]);
    let report = read_json(&out.join("report.json"));
    assert!(o.status.success(), "{report:#}");
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["properties", "dpp", "r_sweep", "mc"]);

    cfg["validate"]["checks"] = json!(["reduction", "bogus"]);
    assert_eq!(run("validate", &cfg, &out, &[]).status.code(), Some(2));
}

#[test]
fn sweep_table_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run("sweep", &tanh_config(), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("beta_bound,"));
    let values: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{values:?}");
}
