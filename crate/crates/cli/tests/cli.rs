use std::path::Path;
use std::process::{Command, Output};

fn mpark(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpark"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("MPARK_SEED")
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn meta(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(format!("{name}.meta.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn converge_writes_csv_plot_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpark(
        dir.path(),
        &["--seed", "7", "converge", "--problem", "vdp", "--method", "imr", "--corrections", "1", "--pairs", "f64/f64,f64/f32", "--dts", "1/8,1/16,1/32"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("converge.csv"));
    assert_eq!(header[..4], ["method", "corrections", "pair", "dt"].map(String::from));
    assert_eq!(rows.len(), 6);
    assert!(std::fs::read_to_string(dir.path().join("converge.svg")).unwrap().starts_with("<svg"));
    let m = meta(dir.path(), "converge");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["command"], "converge");
    assert!(m["config"].is_object());
}

#[test]
fn fractional_and_power_step_sizes_are_equivalent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |dt: &'static str| ["run", "--problem", "dahlquist", "--lambda", "-2", "--method", "sdirk", "--corrections", "1", "--pair", "f64/f64", "--dt", dt];
    assert!(mpark(a.path(), &args("1/64")).status.success());
    assert!(mpark(b.path(), &args("2^-6")).status.success());
    let ra = std::fs::read_to_string(a.path().join("run.csv")).unwrap();
    let rb = std::fs::read_to_string(b.path().join("run.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mpark"))
        .arg("--out")
        .arg(dir.path())
        .args(["stability", "--method", "imr", "--corrections", "1", "--eps-tilde", "0.01", "--res", "8x8", "--samples", "2"])
        .env("MPARK_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(meta(dir.path(), "stability")["seed"], 99);
}

#[test]
fn stability_is_reproducible_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--seed", "3", "stability", "--method", "sdirk", "--corrections", "1", "--eps-tilde", "0.05", "--res", "16x16", "--samples", "4"];
    assert!(mpark(a.path(), &args).status.success());
    assert!(mpark(b.path(), &args).status.success());
    let ra = std::fs::read(a.path().join("stability.csv")).unwrap();
    let rb = std::fs::read(b.path().join("stability.csv")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn toml_config_drives_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        r#"
pairs = ["f64/f64", "f64/f16"]
dts = [0.125, 0.0625]
repetitions = 1
timing_exclusive = false

[problem]
kind = "dahlquist"
re = -1.0
im = 0.0

[method]
method = "imr"
corrections = 0

[reference]
kind = "exact"
"#,
    )
    .unwrap();
    let out = mpark(dir.path(), &["--name", "toml", "converge", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&dir.path().join("toml.csv"));
    assert_eq!(rows.len(), 4);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "pairs = 3\n").unwrap();
    let out = mpark(dir.path(), &["converge", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_dividing_step_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpark(dir.path(), &["converge", "--problem", "vdp", "--method", "imr", "--dts", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mpark(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(mpark(dir.path(), &["run", "--pair", "f64/f8"]).status.code(), Some(2));
}

#[test]
fn diverging_run_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // the semi-discrete Burgers system on this coarse grid blows up in finite time
    let out = mpark(dir.path(), &["run", "--problem", "burgers", "--nx", "20", "--method", "sdirk", "--corrections", "1", "--pair", "f64/f64", "--dt", "1/100"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn mixed_model_marks_instability_above_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpark(dir.path(), &["mixed-model", "--nx", "64", "--corrections", "0", "--cfl-sweep", "0.1:0.5:0.4", "--dense-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("mixed-model.csv"));
    assert_eq!(header, ["cfl", "rho", "rho_dense"]);
    let rho: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let dense: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(rho[0] <= 1.0 + 1e-12 && rho[1] > 1.0, "{rho:?}");
    for (a, b) in rho.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-8 * a.max(1.0));
    }
}

#[test]
fn sensitivity_writes_one_column_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpark(dir.path(), &["sensitivity", "--methods", "imr,sdirk", "--corrections", "0,1", "--z=-10:0", "--points", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("sensitivity.csv"));
    assert_eq!(header.len(), 5);
    assert_eq!(rows.len(), 5);
}

#[test]
fn order_check_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpark(dir.path(), &["order-check", "--method", "sdirk", "--corrections", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("b_tilde*e - 1"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("order-check.json")).unwrap()).unwrap();
    assert!(report["scheme"].is_array());
}

#[test]
fn stable_dt_reports_each_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpark(dir.path(), &["stable-dt", "--problem", "burgers", "--nx", "50", "--corrections", "0,1", "--pairs", "f64/f16", "--levels", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("stable-dt.csv"));
    assert_eq!(header[4], "label");
    assert_eq!(rows.len(), 2);
}
