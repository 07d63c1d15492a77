use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sdc_kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdc-kit")).args(args).output().expect("binary runs")
}

fn study(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let out = dir.join(name);
    let mut args = vec!["study", "--problem", "dahlquist", "--M", "2", "--K", "3", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    sdc_kit(&args)
}

#[test]
fn tables_prints_json() {
    let out = sdc_kit(&["tables", "--M", "3", "--family", "lobatto"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let tau = json["tau"].as_array().unwrap();
    assert_eq!(tau.len(), 3);
    assert_eq!(tau[1].as_f64().unwrap(), 0.5);
}

#[test]
fn study_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = study(dir.path(), "s.csv", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "problem,family,M,K,qdelta_imp,qdelta_exp,dt,error_l2,observed_order");
    assert_eq!(lines.count(), 4);
    assert!(dir.path().join("s.vars.csv").exists());
}

#[test]
fn study_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(study(dir.path(), "a.csv", &[]).status.success());
    assert!(study(dir.path(), "b.csv", &[]).status.success());
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn zero_dynamics_is_a_degenerate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("zero.cfg");
    fs::write(&config, "problem = dahlquist\nlambda_fast = 0\nlambda_slow = 0\nM = 2\nK = 2\n").unwrap();
    let out = sdc_kit(&["study", "--config", config.to_str().unwrap(), "--out", dir.path().join("z.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "problem = dahlquist\nnodes = 3\n").unwrap();
    assert_eq!(sdc_kit(&["study", "--config", config.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(study(dir.path(), "c.csv", &["--family", "gauss", "--final", "copy-node"]).status.code(), Some(1));
    assert_eq!(study(dir.path(), "d.csv", &["--dts", "0.1,0.2,0.05"]).status.code(), Some(1));
}

#[test]
fn run_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdc_kit(&[
        "run", "--problem", "acoustic1d", "--M", "3", "--K", "3", "--dt", "0.01", "--t-end", "0.1", "--stride", "5",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["snapshot_000000.csv", "snapshot_000005.csv", "snapshot_000010.csv"]);
    let (layout, state) = sdc_kit::snapshot::load_snapshot(&dir.path().join("snapshot_000010.csv")).unwrap();
    assert_eq!(layout.variables, ["u", "p"]);
    assert_eq!(state.len(), 2 * layout.x.len());
    assert!(state.iter().all(|v| v.is_finite()));
}
