use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bubble_lab::{Manifest, RunConfig, StageStatus};

const BIN: &str = env!("CARGO_BIN_EXE_annulus-bubble-lab");

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// A small but complete run: every stage, two polygon sizes.
const LIGHT: &str = r#"
[spectrum]
k_max = 4
[sweep]
modes = [1, 2]
r_min = 0.3
r_max = 0.9
points = 4
[landscape]
ell_points = 41
r_points = 41
[polygon]
k_list = [8, 16]
[construct]
slice_points = 21
boundary_samples = 200
[verify]
symmetry_probes = 20
pde_points = 40
quad_rel_tol = 1e-5
quad_abs_tol = 1e-5
[verify.density]
shell_directions = 12
shells_per_octave = 1
innermost = 0.25
neck_points = 4
background = 300
"#;

fn lab(args: &[&str], config: &Path, out: &Path, env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).arg("--config").arg(config).arg("--out").arg(out);
    cmd.env_remove(bubble_lab::OUT_DIR_ENV);
    if let Some(e) = env_out {
        cmd.env(bubble_lab::OUT_DIR_ENV, e);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(out: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn shipped_config_is_the_default() {
    let cfg = RunConfig::load(&repo_file("configs/default.toml")).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn inverted_radii_exit_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[geometry]\na = 2.0\nb = 1.0\n");
    let out = lab(&["radial"], &cfg, &dir.path().join("out"), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("a < b"));
}

#[test]
fn unknown_command_and_missing_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(lab(&["bogus"], &cfg, dir.path(), None).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(lab(&["radial"], &missing, dir.path(), None).status.code(), Some(2));
}

#[test]
fn radial_manifest_matches_its_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let res = lab(&["radial"], &cfg, &out, None);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let m = manifest(&out);
    assert_eq!(m.schema, "1");
    assert_eq!(m.command, "radial");
    assert_eq!(m.stages.len(), 1);
    assert_eq!(m.stages[0].status, StageStatus::Ok);
    let summary = std::fs::read_to_string(out.join("radial_summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let values: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "r0").unwrap();
    let csv_r0: f64 = values[col].parse().unwrap();
    assert_eq!(m.scalars["r0"], csv_r0);
    for f in &m.files {
        let bytes = std::fs::read(out.join(&f.path)).unwrap();
        assert_eq!(bubble_lab::manifest::sha256_hex(&bytes), f.sha256);
    }
}

#[test]
fn environment_overrides_the_configured_directory() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("from_env");
    let cfg = write_config(dir.path(), "");
    let status = Command::new(BIN)
        .args(["radial", "--config"])
        .arg(&cfg)
        .env(bubble_lab::OUT_DIR_ENV, &env_out)
        .current_dir(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(env_out.join("manifest.json").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn all_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), LIGHT);
    let runs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(n)).collect();
    let codes: Vec<Option<i32>> = [&["all", "--threads", "1"][..], &["all", "--threads", "1"], &["all", "--threads", "3"]]
        .iter()
        .zip(&runs)
        .map(|(args, out)| lab(args, &cfg, out, None).status.code())
        .collect();
    assert!(codes.iter().all(|c| *c == codes[0]), "{codes:?}");
    assert!(matches!(codes[0], Some(0) | Some(4)), "{codes:?}");
    let first = std::fs::read(runs[0].join("manifest.json")).unwrap();
    let m = manifest(&runs[0]);
    assert_eq!(m.stages.len(), 6);
    assert!(m.stages.iter().all(|s| matches!(s.status, StageStatus::Ok | StageStatus::Violated)));
    for run in &runs[1..] {
        assert_eq!(std::fs::read(run.join("manifest.json")).unwrap(), first, "{}", run.display());
        for f in &m.files {
            assert_eq!(std::fs::read(runs[0].join(&f.path)).unwrap(), std::fs::read(run.join(&f.path)).unwrap());
        }
    }
}
