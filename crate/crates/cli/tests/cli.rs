use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_breather"))
}

fn base_config() -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/two_layer.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Coarse two-layer run that solves in well under a second.
fn small_config() -> Value {
    let mut c = base_config();
    c["discretization"]["n_points"] = 401.into();
    c["discretization"]["k_max"] = 3.into();
    c
}

fn write_config(dir: &Path, name: &str, c: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(c).unwrap()).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().unwrap()
}

fn solve(config: &Path, out: &Path) -> Output {
    run(bin().args(["solve", "--config"]).arg(config).arg("--out").arg(out))
}

fn verify(config: &Path, solution: &Path, extra: &[&str]) -> Output {
    run(bin().args(["verify", "--config"]).arg(config).arg("--solution").arg(solution).args(extra))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&solve(&cfg, &a)), 0);
    assert_eq!(code(&bin().env("BREATHER_THREADS", "1").args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&b).output().unwrap()), 0);
    for f in ["solution.csv", "wave.csv", "fields.csv", "residuals.json", "trace.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let mut ra = read_json(&a.join("report.json"));
    let mut rb = read_json(&b.join("report.json"));
    ra["report"]["timing"] = Value::Null;
    rb["report"]["timing"] = Value::Null;
    assert_eq!(ra, rb);
    assert_eq!(ra["report"]["converged"], Value::Bool(true));
}

#[test]
fn verify_reproduces_and_refines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    let out = dir.path().join("out");
    assert_eq!(code(&solve(&cfg, &out)), 0);
    let v = verify(&cfg, &out, &["--refine", "2"]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    let rep = read_json(&out.join("verify.json"));
    let diff = rep["verify"]["max_abs_diff"].as_f64().unwrap();
    assert!(diff <= 1e-12, "max abs diff {diff}");
    let refine = &rep["verify"]["refine"];
    assert_eq!(refine["n_points"], 801);
    assert_eq!(refine["k_max"], 7);
    let ratio = refine["wave_ratio"].as_f64().unwrap();
    assert!(ratio <= 2.0, "refined residual grew by {ratio}");
}

#[test]
fn tampered_solution_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    let out = dir.path().join("out");
    assert_eq!(code(&solve(&cfg, &out)), 0);
    let stored = read_json(&out.join("residuals.json"))["residuals"]["primal"].as_f64().unwrap();
    let path = out.join("solution.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // scale the k = 1 coefficient at the centre node
    let idx = lines.iter().position(|l| l.starts_with("1.25000000000000000e-1,1,")).unwrap();
    let mut cols: Vec<String> = lines[idx].split(',').map(String::from).collect();
    let re: f64 = cols[2].parse().unwrap();
    cols[2] = format!("{:.17e}", re * 1.01 + 1e-3);
    lines[idx] = cols.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let v = verify(&cfg, &out, &[]);
    assert_eq!(code(&v), 3, "{}", stderr(&v));
    let rep = read_json(&out.join("verify.json"));
    let primal = rep["verify"]["residuals"]["primal"].as_f64().unwrap();
    assert!(primal > 1e3 * stored && primal > 1e-6, "{primal} vs {stored}");
}

#[test]
fn verify_rejects_a_different_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    let out = dir.path().join("out");
    assert_eq!(code(&solve(&cfg, &out)), 0);
    let mut other = small_config();
    other["material"]["speed"] = 3.0.into();
    let other = write_config(dir.path(), "d.json", &other);
    let v = verify(&other, &out, &[]);
    assert_eq!(code(&v), 4);
    assert!(stderr(&v).contains("config"), "{}", stderr(&v));
}

#[test]
fn truncated_solution_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    let out = dir.path().join("out");
    assert_eq!(code(&solve(&cfg, &out)), 0);
    let path = out.join("solution.csv");
    let text = fs::read_to_string(&path).unwrap();
    let keep = text.lines().count() / 2;
    fs::write(&path, text.lines().take(keep).collect::<Vec<_>>().join("\n")).unwrap();
    assert_eq!(code(&verify(&cfg, &out, &[])), 4);
}

#[test]
fn symmetric_layers_are_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c["material"]["weight"]["theta"] = 0.5.into();
    let cfg = write_config(dir.path(), "c.json", &c);
    let o = solve(&cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("theta"), "{}", stderr(&o));
}

#[test]
fn constant_weight_has_no_gap() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c["material"]["weight"] = serde_json::json!({"kind": "constant", "value": 0.5});
    let cfg = write_config(dir.path(), "c.json", &c);
    let b = run(bin().args(["bands", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("bands")));
    assert_eq!(code(&b), 2);
    assert!(dir.path().join("bands/bands.json").exists());
    let s = solve(&cfg, &dir.path().join("out"));
    assert_eq!(code(&s), 2, "{}", stderr(&s));
}

#[test]
fn bands_reports_each_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    let b = run(bin().args(["bands", "--config"]).arg(&cfg).arg("--out").arg(dir.path()));
    assert_eq!(code(&b), 0);
    let text = String::from_utf8_lossy(&b.stdout);
    assert!(text.contains("k =   1: certified"), "{text}");
    let csv = fs::read_to_string(dir.path().join("bands.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "lambda,discriminant"));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &small_config());
    // no --out and no output.directory
    assert_eq!(code(&run(bin().args(["bands", "--config"]).arg(&cfg))), 1);
    let t = run(bin().env("BREATHER_THREADS", "0").args(["bands", "--config"]).arg(&cfg).arg("--out").arg(dir.path()));
    assert_eq!(code(&t), 1);
    assert_eq!(code(&run(bin().args(["bands", "--config"]).arg(dir.path().join("missing.json")).arg("--out").arg(dir.path()))), 4);
    let mut c = small_config();
    c["discretization"]["kmax"] = 3.into();
    let bad = write_config(dir.path(), "bad.json", &c);
    assert_eq!(code(&run(bin().args(["bands", "--config"]).arg(&bad).arg("--out").arg(dir.path()))), 4);
}
