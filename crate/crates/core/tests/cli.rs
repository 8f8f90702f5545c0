//! End-to-end checks of the command-line surface: validate, run, psi-table
//! and compare, including exit codes and output layout.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pedflow"))
}

fn work_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("pedflow_cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_config(dir: &Path, mode: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"schema_version = 1

[scenario]
width = 50.0
height = 20.0
exit_width = 10.0
count_per_group = [4, 4]
initial_spacing = 1.68
seeding = "lattice"
seed = 3

[vision]
speed_c = 1.5
sigma_a = 0.0
sigma_b = 0.6
sigma_exp = 1.5
tau0 = 1.0
phi0 = 1.0
radius_r = 1.68
lambda = {lambda}

[step]
dt = 0.0042
t_end = 45.0
mode = "{mode}"
snapshot_every = 5.0

[output]
snapshots = "per_snapshot"
density_grid = true
density_grid_dx = 1.0
{extra}"#,
        mode = mode,
        lambda = if mode == "vision_local" {
            "0.01"
        } else {
            "0.0"
        },
        extra = extra,
    );
    let path = dir.join(format!("{mode}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_accepts_good_and_rejects_bad() {
    let dir = work_dir("validate");
    let good = tiny_config(&dir, "vision_nonlocal", "");
    let out = bin().arg("validate").arg(&good).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("particles=8"));

    // CFL violation must be rejected with a nonzero exit code
    let bad = dir.join("bad.toml");
    let text = std::fs::read_to_string(&good)
        .unwrap()
        .replace("dt = 0.0042", "dt = 0.9");
    std::fs::write(&bad, text).unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pedflow:"));

    // missing socialforce block
    let bad2 = dir.join("bad2.toml");
    let text = std::fs::read_to_string(&good)
        .unwrap()
        .replace("mode = \"vision_nonlocal\"", "mode = \"social_force\"");
    std::fs::write(&bad2, text).unwrap();
    let out = bin().arg("validate").arg(&bad2).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn run_writes_expected_layout() {
    let dir = work_dir("run_layout");
    let cfg = tiny_config(&dir, "vision_nonlocal", "");
    let out_dir = dir.join("out");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--threads")
        .arg("1")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("report.toml").exists());
    assert!(out_dir.join("evacuation.csv").exists());
    assert!(out_dir.join("snap_000000.csv").exists());
    assert!(out_dir.join("density_000000.txt").exists());

    let snap = std::fs::read_to_string(out_dir.join("snap_000000.csv")).unwrap();
    assert!(snap.starts_with("t,particle_id,group,x,y,ux,uy,rho,active"));
    let density = std::fs::read_to_string(out_dir.join("density_000000.txt")).unwrap();
    let mut lines = density.lines();
    assert!(lines.next().unwrap().starts_with("# t "));
    assert!(lines.next().unwrap().starts_with("# nx "));
    assert!(lines.next().unwrap().starts_with("# ny "));
    assert!(lines.next().unwrap().starts_with("# dx "));
}

#[test]
fn psi_table_subcommand_caches() {
    let dir = work_dir("psi");
    let cfg = tiny_config(&dir, "vision_local", "");
    let out_dir = dir.join("cache");
    let out = bin()
        .arg("psi-table")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cache: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("psi_"))
        .collect();
    assert_eq!(cache.len(), 1);
    let first = std::fs::read(&cache[0]).unwrap();

    // second invocation hits the cache and leaves the bytes untouched
    let out = bin()
        .arg("psi-table")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let second = std::fs::read(&cache[0]).unwrap();
    assert_eq!(first, second);
}

#[test]
fn compare_aligns_runs() {
    let dir = work_dir("compare");
    let cfg = tiny_config(&dir, "vision_nonlocal", "");
    let cfg_blind = tiny_config(&dir, "no_direction_control", "");
    for (cfg, name) in [(&cfg, "a"), (&cfg_blind, "b")] {
        let out = bin()
            .arg("run")
            .arg(cfg)
            .arg("--out-dir")
            .arg(dir.join(name))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let cmp_dir = dir.join("cmp");
    let out = bin()
        .arg("compare")
        .arg(dir.join("a").join("report.toml"))
        .arg(dir.join("b").join("report.toml"))
        .arg("--out-dir")
        .arg(&cmp_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = std::fs::read_to_string(cmp_dir.join("comparison.csv")).unwrap();
    assert!(table.starts_with("t,a,b"));
    let summary = std::fs::read_to_string(cmp_dir.join("comparison_summary.csv")).unwrap();
    assert!(summary.contains("runtime_ratio_vs_first"));

    // identical run compared with itself: ratio exactly 1
    let out = bin()
        .arg("compare")
        .arg(dir.join("a").join("report.toml"))
        .arg(dir.join("a").join("report.toml"))
        .arg("--out-dir")
        .arg(dir.join("cmp_self"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("1.000"));
}

#[test]
fn seed_override_changes_random_runs() {
    let dir = work_dir("seed");
    let cfg_path = tiny_config(&dir, "vision_nonlocal", "");
    let text = std::fs::read_to_string(&cfg_path)
        .unwrap()
        .replace("seeding = \"lattice\"", "seeding = \"uniform_random\"");
    std::fs::write(&cfg_path, text).unwrap();
    for (seed, name) in [("11", "s11"), ("12", "s12"), ("11", "s11b")] {
        let out = bin()
            .arg("run")
            .arg(&cfg_path)
            .arg("--seed")
            .arg(seed)
            .arg("--out-dir")
            .arg(dir.join(name))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.join("s11").join("snap_000000.csv")).unwrap();
    let b = std::fs::read(dir.join("s12").join("snap_000000.csv")).unwrap();
    let c = std::fs::read(dir.join("s11b").join("snap_000000.csv")).unwrap();
    assert_ne!(a, b, "different seeds must differ");
    assert_eq!(a, c, "same seed must reproduce bytes");
}
