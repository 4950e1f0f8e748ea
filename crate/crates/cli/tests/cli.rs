use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use jcfb_cli::{parse_config, run_job, JobConfig, Mode, Status, Table};

fn recipe(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("recipes").join(name);
    fs::read_to_string(path).unwrap()
}

fn read_table(dir: &Path, file: &str) -> Table {
    Table::from_csv(&fs::read_to_string(dir.join(file)).unwrap()).unwrap()
}

fn jcfb(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_jcfb")).args(args).output().unwrap()
}

const WEAK_DRIVE: &str = r#"
mode = "simulate"
[params]
g = 0.2
drive_amplitude = 0.01
kappa1 = 0.1225
kappa2 = 0.12
tau = 1.0
phi = 1.5707963267948966
dt = 0.2
n_fock = 2
d_bin = 2
[run]
t_end = 2.0
recorders = ["tls_population", "cavity_photons", "output_flux"]
"#;

#[test]
fn minimal_config_echoes_every_default() {
    let cfg = parse_config(&recipe("minimal.toml"), &["run.t_end=0.5".into()]).unwrap();
    assert_eq!(cfg.params.g, 1.0);
    let dir = tempfile::tempdir().unwrap();
    run_job(&cfg, dir.path(), 1).unwrap();
    let echoed = fs::read_to_string(dir.path().join("resolved_config.toml")).unwrap();
    for key in [
        "mode", "output_dir", "drive_amplitude", "kappa2", "n_fock", "d_bin", "cutoff", "max_bond", "t_end",
        "recorders", "failure_threshold", "max_lag", "floor", "omega_min", "window", "density", "columns",
    ] {
        assert!(echoed.contains(key), "resolved config lacks {key}:\n{echoed}");
    }
    assert_eq!(parse_config(&echoed, &[]).unwrap(), cfg);
}

#[test]
fn phase_pair_recipe_resolves_to_two_runs() {
    let cfg = parse_config(&recipe("collapse_revival.toml"), &[]).unwrap();
    assert_eq!(cfg.mode, Mode::Sweep);
    assert!(!cfg.sweep.baseline);
    let pts = cfg.sweep_points().unwrap();
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[0].phi, 0.0);
    assert_eq!(pts[1].phi, std::f64::consts::PI);
    for p in &pts {
        assert!((p.kappa1 - p.g / 100.0).abs() < 1e-15);
        assert!((p.kappa2 - 4.0 * p.g / 100.0).abs() < 1e-15);
        assert!((p.g * p.tau - 0.04).abs() < 1e-15);
    }
    let alpha = match cfg.run.initial.cavity {
        jcfb::CavityInit::Coherent { re, im } => re * re + im * im,
        other => panic!("unexpected initial cavity {other:?}"),
    };
    assert!((alpha - 6.0).abs() < 1e-12);
}

#[test]
fn non_integer_delay_is_rejected_with_values() {
    let err = parse_config(WEAK_DRIVE, &["params.tau=9.0".into(), "params.dt=0.7".into()]).unwrap_err();
    let msg = err.to_string();
    assert_eq!(err.exit_code(), 2);
    assert!(msg.contains("tau = 9") && msg.contains("dt = 0.7"), "{msg}");
    assert!(msg.contains("try dt ="), "{msg}");
}

#[test]
fn unknown_key_names_the_nearest_one() {
    let err = parse_config("[params]\nkapa1 = 0.1\n", &[]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("did you mean 'kappa1'"), "{err}");
    let err = parse_config("", &["run.t_ned=3".into()]).unwrap_err();
    assert!(err.to_string().contains("did you mean 't_end'"), "{err}");
}

#[test]
fn recipes_round_trip_through_the_resolved_config() {
    for name in [
        "minimal.toml",
        "collapse_revival.toml",
        "persistent_oscillations.toml",
        "spectral_narrowing.toml",
        "resonance_poles.toml",
        "strong_drive.toml",
    ] {
        let cfg = parse_config(&recipe(name), &[]).unwrap();
        let again: JobConfig = parse_config(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(again, cfg, "{name}");
    }
}

#[test]
fn simulate_writes_the_documented_columns() {
    let cfg = parse_config(WEAK_DRIVE, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_job(&cfg, dir.path(), 1).unwrap();
    assert!(report.failure.is_none());
    let t = read_table(dir.path(), "simulate.csv");
    assert_eq!(t.names, ["t", "tls_population", "cavity_photons", "output_flux"]);
    assert_eq!(t.units[0], "1/g");
    assert_eq!(t.column("t").unwrap()[0], 0.0);
    let info = &report.manifest.run_info.points[0];
    assert_eq!(info.status, Status::Complete);
    assert!(info.max_bond >= 1);
    assert!(info.discarded_weight >= 0.0);
}

#[test]
fn rerun_from_manifest_is_bitwise_identical() {
    let cfg = parse_config(WEAK_DRIVE, &["mode=\"correlations\"".into(), "correlations.max_lag=0.4".into()]).unwrap();
    let first = tempfile::tempdir().unwrap();
    run_job(&cfg, first.path(), 1).unwrap();
    let manifest = fs::read_to_string(first.path().join("manifest.toml")).unwrap();
    let second = tempfile::tempdir().unwrap();
    run_job(&parse_config(&manifest, &[]).unwrap(), second.path(), 1).unwrap();
    for file in ["correlations.csv", "resolved_config.toml"] {
        let a = fs::read(first.path().join(file)).unwrap();
        let b = fs::read(second.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    let t = read_table(first.path(), "correlations.csv");
    assert_eq!(t.names, ["tau", "g1_re", "g1_im", "g2"]);
    assert_eq!(t.column("g1_re").unwrap()[0], 1.0);
}

#[test]
fn sweep_writes_one_file_per_point_and_an_index() {
    let doc = r#"
mode = "sweep"
[params]
g = 0.2
kappa1 = 0.1225
kappa2 = 0.12
phi = 3.141592653589793
dt = 0.2
[spectrum]
grid = { omega_min = -2.0, omega_max = 2.0, points = 41 }
[sweep]
job = "linear-spectrum"
parameter = "tau"
values = [1.0, 3.0, 5.0]
baseline = true
"#;
    let cfg = parse_config(doc, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_job(&cfg, dir.path(), 2).unwrap();
    let files = &report.manifest.run_info.files;
    for f in [
        "linear-spectrum_000.csv",
        "linear-spectrum_001.csv",
        "linear-spectrum_002.csv",
        "linear-spectrum_baseline.csv",
        "index.csv",
    ] {
        assert!(files.iter().any(|x| x == f), "{f} missing from {files:?}");
        assert!(dir.path().join(f).exists());
    }
    let index = read_table(dir.path(), "index.csv");
    assert_eq!(index.rows(), 4);
    assert_eq!(&index.column("tau").unwrap()[..3], &[1.0, 3.0, 5.0]);
    assert!(index.column("tau").unwrap()[3].is_nan());
    assert!(index.column("status").unwrap().iter().all(|s| *s == 0.0));
    let s = read_table(dir.path(), "linear-spectrum_001.csv");
    assert_eq!(s.names, ["omega", "spectrum"]);
    // singular frequencies are dropped from the grid and listed in the notes
    assert!(s.rows() >= 40);
    for w in s.column("omega").unwrap() {
        let k = (w + 2.0) / 0.1;
        assert!((k - k.round()).abs() < 1e-9, "{w} is off the grid");
    }
}

#[test]
fn poles_recipe_writes_roots_of_the_denominator() {
    let cfg = parse_config(&recipe("resonance_poles.toml"), &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_job(&cfg, dir.path(), 1).unwrap();
    let t = read_table(dir.path(), "poles.csv");
    assert_eq!(t.names, ["re_s", "im_s", "abs_d"]);
    assert!(t.rows() >= 2);
    assert!(t.column("abs_d").unwrap().iter().all(|d| *d < 1e-8));
    assert!(t.column("re_s").unwrap().iter().all(|r| *r < 0.0));
}

#[test]
fn emit_selects_columns() {
    let cfg = parse_config(WEAK_DRIVE, &["emit.columns=[\"output_flux\"]".into()]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_job(&cfg, dir.path(), 1).unwrap();
    assert_eq!(read_table(dir.path(), "simulate.csv").names, ["t", "output_flux"]);
}

fn out_arg(dir: &Path) -> PathBuf {
    dir.join("run")
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("job.toml");
    fs::write(&config, WEAK_DRIVE).unwrap();
    let out = out_arg(dir.path());
    let ok = jcfb(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "1"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("manifest.toml").exists());

    let bad = jcfb(&["--config", config.to_str().unwrap(), "--set", "params.dt=0.3", "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("not an integer multiple"));

    let mode = jcfb(&["--mode", "spectra", "--out", out.to_str().unwrap()]);
    assert_eq!(mode.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mode.stderr).contains("did you mean 'spectrum'"));

    // a bond cap of one with a tiny failure threshold aborts the run
    let failing = out_arg(&dir.path().join("failing"));
    let abort = jcfb(&[
        "--config",
        config.to_str().unwrap(),
        "--set",
        "params.svd.max_bond=1",
        "--set",
        "run.failure_threshold=1e-30",
        "--out",
        failing.to_str().unwrap(),
    ]);
    assert_eq!(abort.status.code(), Some(3), "{}", String::from_utf8_lossy(&abort.stderr));
    assert!(failing.join("simulate.partial.csv").exists());
    assert!(!failing.join("simulate.csv").exists());
    let manifest = fs::read_to_string(failing.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"partial\""), "{manifest}");
}
