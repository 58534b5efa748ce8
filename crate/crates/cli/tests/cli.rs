use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use isogftns::iso::{random_init, ArrowPattern};
use isogftns::{checkpoint, CellShape};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isogftns-cli"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Data rows of a CSV written by the CLI, header block and column row dropped.
fn data_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const SMALL_SCAN: &str = r#"
patterns = ["uniform", "alternating"]
n_v = [1]
seed = 11

[model]
kind = "pip-sc"

[lattice]
lx = 4
ly = 4

[optimizer]
n_starts = 2
phase1_iters = 30
phase2_iters = 20
perturb_every = 10
"#;

#[test]
fn unknown_field_exits_one_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SMALL_SCAN.replace("n_starts = 2", "n_starts = 2\nlearning = 3"));
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("learning"), "{err}");
    assert!(err.contains("line"), "{err}");
}

#[test]
fn odd_site_count_is_rejected() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_SCAN.replace("lx = 4\nly = 4", "lx = 3\nly = 5");
    let cfg = write_config(dir.path(), "odd.toml", &text);
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lattice"), "{}", stderr(&o));
    assert!(!dir.path().join("summary.csv").exists());
}

#[test]
fn fermi_surface_scan_writes_one_row_per_pattern() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "fs.toml",
        r#"
patterns = ["uniform", "alternating"]
n_v = [4]
seed = 2

[model]
kind = "fermi-surface"

[lattice]
lx = 24
ly = 24

[optimizer]
n_starts = 1
phase1_iters = 3
phase2_iters = 0
newton_polish = false
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = data_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2);
    let p = column(&header, "pattern");
    assert_eq!(rows[0][p], "uniform");
    assert_eq!(rows[1][p], "alternating");
    for row in &rows {
        let err: f64 = row[column(&header, "error_per_site")].parse().unwrap();
        assert!(err.is_finite() && err > 0.0);
    }
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", SMALL_SCAN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 8);
    for name in names {
        if name == "timing.csv" {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", SMALL_SCAN);
    let out = dir.path().join("s");
    let o = run(&["optimize", "--config", cfg.to_str().unwrap(), "--seed", "99", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(text.contains("# seed: 99"));
    assert!(text.contains("# config-sha256: "));
}

#[test]
fn exact_fermi_surface_occupation_is_a_step() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "occ.toml",
        r#"
patterns = ["uniform"]
n_v = [1]

[model]
kind = "fermi-surface"

[lattice]
lx = 8
ly = 8

[observables]
occupation = true
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["observe", "--config", cfg.to_str().unwrap(), "--exact", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = data_rows(&out.join("exact_occupation.csv"));
    assert_eq!(rows.len(), 64);
    let (kx, ky, n) = (column(&header, "kx"), column(&header, "ky"), column(&header, "n"));
    for row in rows {
        let kx: f64 = row[kx].parse().unwrap();
        let ky: f64 = row[ky].parse().unwrap();
        let n: f64 = row[n].parse().unwrap();
        let eps = -2.0 * (kx.cos() + ky.cos());
        assert!(eps.abs() > 1e-3);
        let filled = if eps < 0.0 { 1.0 } else { 0.0 };
        assert!((n - filled).abs() < 1e-9, "k = ({kx}, {ky}): n = {n}");
    }
}

const PRODUCT: &str = r#"
patterns = ["uniform"]
n_v = [0]

[model]
kind = "band-insulator"

[lattice]
lx = 8
ly = 8

[observables]
correlator_max_x = 6
"#;

fn product_checkpoint(dir: &Path) -> PathBuf {
    let params = random_init(&ArrowPattern::Uniform, 0, CellShape::PLAQUETTE, 4).unwrap();
    let path = dir.join("product.ckpt");
    checkpoint::save(&path, &params).unwrap();
    path
}

#[test]
fn product_state_correlator_is_flat_beyond_origin() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.toml", PRODUCT);
    let ckpt = product_checkpoint(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "observe",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = data_rows(&out.join("product_correlator.csv"));
    assert_eq!(rows.len(), 7);
    let c = column(&header, "correlator");
    let origin: f64 = rows[0][c].parse().unwrap();
    assert!((origin.abs() - 1.0).abs() < 1e-12);
    for row in &rows[1..] {
        let v: f64 = row[c].parse().unwrap();
        assert!(v.abs() < 1e-12, "x = {}: {v}", row[0]);
    }
}

#[test]
fn incompatible_checkpoint_prints_both_headers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.toml", &PRODUCT.replace("n_v = [0]", "n_v = [2]"));
    let ckpt = product_checkpoint(dir.path());
    let o = run(&[
        "observe",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("checkpoint: pattern=uniform n_v=0"), "{err}");
    assert!(err.contains("config:"), "{err}");
    assert!(err.contains("n_v=[2]") || err.contains("n_v = [2]") || err.contains("[2]"), "{err}");
}

#[test]
fn exact_pip_sc_chern_sweep_approaches_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "chern.toml",
        r#"
patterns = ["uniform"]
n_v = [1]

[model]
kind = "pip-sc"

[lattice]
lx = 24
ly = 24

[observables]
chern_radii = [2.0, 4.0, 6.0]
"#,
    );
    let out = dir.path().join("out");
    let o = run(&["observe", "--config", cfg.to_str().unwrap(), "--exact", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = data_rows(&out.join("exact_chern.csv"));
    assert_eq!(rows.len(), 3);
    let last: f64 = rows[2][column(&header, "nu")].parse().unwrap();
    assert!((last - 1.0).abs() < 0.05, "nu = {last}");
}

#[test]
fn circuit_prints_depth_json() {
    let o = run(&["circuit", "uniform", "3", "3", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["depth"], 5);
    assert_eq!(v["gates"].as_array().unwrap().len(), 9);
    assert!(v["qubits"].as_u64().unwrap() > 0);
}

#[test]
fn circuit_rejects_unconstrained_layout() {
    let o = run(&["circuit", "unconstrained", "3", "3", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn qdcheck_reports_constants_and_exit_codes() {
    for (group, c) in [("Z2", 8.0), ("S3", 216.0)] {
        let o = run(&["qdcheck", group]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["passes"], true);
        for check in v["checks"].as_array().unwrap() {
            assert_eq!(check["constant"].as_f64().unwrap(), c);
        }
    }
    assert_eq!(run(&["qdcheck", "Q8"]).status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["observe", "--config", "x.toml"]).status.code(), Some(1));
}

#[test]
fn shipped_recipes_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            isogftns_cli::config::ValidatedConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
