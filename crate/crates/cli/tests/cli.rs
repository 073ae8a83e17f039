use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const KAC: &str = r#"
map = ["z"]
n = 40
n_list = [25, 50, 100]
trials = 300
seed = 3
[[rho]]
builtin = "annulus"
[[rho]]
builtin = "disk"
"#;

fn zc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zerocurrent"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV written by the tool, after the provenance and header lines.
fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# zerocurrent "));
    lines.next().unwrap();
    lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = zc(dir.path(), &["selftest", "--output-dir", "st"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS ")).count(), 6);
    assert_eq!(json(&dir.path().join("st/selftest.json"))["passed"], true);
}

#[test]
fn audit_exit_codes() {
    let dir = setup(KAC);
    assert_eq!(zc(dir.path(), &["audit", "-c", "run.toml"]).status.code(), Some(0));

    let o = zc(dir.path(), &["audit", "-c", "run.toml", "--family", "exp_tilt", "--output-dir", "tilt"]);
    assert_eq!(o.status.code(), Some(0));
    let report = json(&dir.path().join("tilt/audit.json"));
    assert!(report["report"]["c_min"].as_f64().unwrap() > 0.0);
    assert_eq!(report["passed"], true);

    let lying = format!("{KAC}\n[family]\nkind = \"scalar_seq\"\ng = \"j + 1\"\nkappa = 0\n");
    fs::write(dir.path().join("lying.toml"), lying).unwrap();
    let o = zc(dir.path(), &["audit", "-c", "lying.toml", "--output-dir", "lying"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL ii"), "{}", stdout(&o));
    let report = json(&dir.path().join("lying/audit.json"));
    assert_eq!(report["passed"], false);
    let failed: Vec<&Value> = report["report"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .collect();
    assert!(failed[0]["witness"]["lhs"].as_f64() > failed[0]["witness"]["rhs"].as_f64());
}

#[test]
fn theory_for_kac_and_fubini_study() {
    let dir = setup(KAC);
    let o = zc(dir.path(), &["theory", "-c", "run.toml", "--quad-nodes", "201"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for row in csv_rows(&dir.path().join("out/curve.csv")) {
        assert!(((row[1] * row[1] + row[2] * row[2]).sqrt() - 1.0).abs() < 1e-9);
    }
    let p = json(&dir.path().join("out/pairings.json"));
    let annulus = &p["pairings"][0];
    assert_eq!(annulus["rho_id"], "annulus");
    assert!((annulus["limit_total"].as_f64().unwrap() - 1.0).abs() < 1e-3);
    assert!(annulus["expectation"].as_f64().unwrap() < 1.0);

    let o = zc(
        dir.path(),
        &["theory", "-c", "run.toml", "--map", "z", "--map", "1", "--quad-nodes", "41", "--output-dir", "fs"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(csv_rows(&dir.path().join("fs/curve.csv")).is_empty());
    for row in csv_rows(&dir.path().join("fs/density.csv")) {
        let r2 = row[0] * row[0] + row[1] * row[1];
        if r2 > 1e-12 {
            let fs = 1.0 / (std::f64::consts::PI * (1.0 + r2).powi(2));
            assert!((row[2] - fs).abs() < 1e-12 * fs.max(1.0), "{row:?}");
        }
    }
}

#[test]
fn rho_inside_the_disk_has_zero_limit() {
    let dir = setup(
        "map = [\"z\"]\n[[rho]]\nid = \"inner\"\nkind = \"radial_bump\"\ncenter = [0.0, 0.1]\nr_inner = 0.2\nr_outer = 0.5\n",
    );
    assert_eq!(zc(dir.path(), &["theory", "-c", "run.toml", "--quad-nodes", "101"]).status.code(), Some(0));
    let p = json(&dir.path().join("out/pairings.json"));
    for key in ["limit_total", "limit_ac", "limit_curve"] {
        assert_eq!(p["pairings"][0][key], 0.0);
    }
    assert!(p["pairings"][0]["potential_form"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn simulate_is_thread_count_independent() {
    let dir = setup(KAC);
    for (t, out) in [("1", "one"), ("2", "two")] {
        let o = zc(dir.path(), &["simulate", "-c", "run.toml", "--threads", t, "--output-dir", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    for file in ["empirical.json", "zeros.csv", "pairings.csv", "radial.csv"] {
        let a = fs::read(dir.path().join("one").join(file)).unwrap();
        let b = fs::read(dir.path().join("two").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let em = json(&dir.path().join("one/empirical.json"));
    assert_eq!(em["trials_ok"], 300);
    assert_eq!(em["per_rho"]["annulus"]["n_trials"], 300);
    assert!(em["tool_version"].is_string());
    let digest = em["config_digest"].as_str().unwrap();
    let first = fs::read_to_string(dir.path().join("one/zeros.csv")).unwrap();
    assert!(first.lines().next().unwrap().ends_with(digest));
    assert_eq!(first.lines().nth(1).unwrap(), "trial,re,im,multiplicity,residual");
}

#[test]
fn compare_verdicts_and_digest_guard() {
    let dir = setup(KAC);
    assert_eq!(
        zc(dir.path(), &["simulate", "-c", "run.toml", "--n", "50", "--output-dir", "sim"]).status.code(),
        Some(0)
    );
    let o = zc(dir.path(), &["compare", "-c", "run.toml", "--input", "sim/empirical.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v = json(&dir.path().join("out/verdict.json"));
    assert_eq!(v["verdict"], "PASS");
    let table = fs::read_to_string(dir.path().join("out/comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 6);

    let o = zc(
        dir.path(),
        &["compare", "-c", "run.toml", "--debug-wrong-normalization", "--output-dir", "neg"],
    );
    assert_eq!(o.status.code(), Some(1));
    let v = json(&dir.path().join("neg/verdict.json"));
    assert_eq!(v["verdict"], "FAIL");
    assert!(stdout(&o).contains("FAIL final_gap_within_rate_bound/annulus"));

    let o = zc(dir.path(), &["compare", "-c", "run.toml", "--seed", "4", "--input", "sim/empirical.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("different experiment"));
}

#[test]
fn perturbed_family_shares_the_unit_limit() {
    let dir = setup(KAC);
    let args = |fam: &'static str, out: &'static str| {
        // subdivision on the transcendental family is slow, so keep n small
        vec!["compare", "-c", "run.toml", "--family", fam, "--n-list", "8,16", "--trials", "20", "--output-dir", out]
    };
    assert_eq!(zc(dir.path(), &args("unit", "unit")).status.code(), Some(0));
    assert_eq!(zc(dir.path(), &args("exp_tilt", "tilt")).status.code(), Some(0));
    let unit = json(&dir.path().join("unit/verdict.json"));
    let tilt = json(&dir.path().join("tilt/verdict.json"));
    for (a, b) in unit["rows"].as_array().unwrap().iter().zip(tilt["rows"].as_array().unwrap()) {
        assert!((a["limit"].as_f64().unwrap() - b["limit"].as_f64().unwrap()).abs() < 1e-3);
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = setup("unknown_key = 1\n");
    assert_eq!(zc(dir.path(), &["audit", "-c", "run.toml"]).status.code(), Some(2));
    assert_eq!(zc(dir.path(), &["audit", "-c", "missing.toml"]).status.code(), Some(2));
    assert_eq!(zc(dir.path(), &["simulate", "--trials", "1", "--n", "5"]).status.code(), Some(2));
    assert_eq!(zc(dir.path(), &["simulate"]).status.code(), Some(2));
    assert_eq!(zc(dir.path(), &["theory", "--map", "z +"]).status.code(), Some(2));
    assert_eq!(zc(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(zc(dir.path(), &["simulate", "--n", "5", "--method", "newton"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    // a transcendental family cannot be expanded, so forcing Aberth fails every trial
    let dir = setup(KAC);
    let o = zc(
        dir.path(),
        &["simulate", "-c", "run.toml", "--family", "exp_tilt", "--method", "aberth", "--n", "5", "--trials", "3"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
