use std::path::Path;
use std::process::Command;

fn rydloc(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rydloc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RYDLOC_OUT")
        .output()
        .expect("binary runs")
}

/// Rows of a CSV artifact, skipping `#` comments and the header.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn sample_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = rydloc(&["sample", "--n", "100", "--rho", "0.1", "--seed", "7"], dir.path());
    let b = rydloc(&["sample", "--n", "100", "--rho", "0.1", "--seed", "7"], dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 101);
    // coordinates are written round-trippably
    let x: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(format!("{x:?}"), text.lines().nth(1).unwrap().split(',').nth(1).unwrap());
}

#[test]
fn sample_writes_metadata_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydloc(&["sample", "--n", "50", "--rho", "0.2", "--seed", "3", "--out", "c.csv"], dir.path());
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.csv.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["n_atoms"], 50);
}

#[test]
fn clusters_table_has_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydloc(&["clusters"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    let dimer: Vec<f64> = lines[1].split(',').nth(2).unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    assert!((dimer[0] + 1.0).abs() < 1e-12 && (dimer[1] - 1.0).abs() < 1e-12);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydloc(&["spectrum", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = rydloc(&["lsr", "--n", "2", "--realizations", "1", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failure_budget_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"cloud": {"profile": "uniform_disk", "n_atoms": 60, "radius": 5.48, "max_attempts_per_atom": 1},
                  "experiment": {"kind": "lsr"}, "n_realizations": 3}"#;
    std::fs::write(dir.path().join("run.json"), cfg).unwrap();
    let out = rydloc(&["lsr", "--config", "run.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    // a config for another experiment is a usage error
    let out = rydloc(&["spectrum", "--config", "run.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rydloc"))
        .args(["lowenergy", "--n", "20", "--rho", "0.5", "--realizations", "3", "--k", "3"])
        .current_dir(dir.path())
        .env("RYDLOC_OUT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs: Vec<_> = std::fs::read_dir(dir.path().join("root")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs[0].as_ref().unwrap().path();
    assert!(run.file_name().unwrap().to_string_lossy().starts_with("low_energy-"));
    assert!(run.join("energy_index_3.csv").exists());
}

#[test]
fn plot_is_a_pure_function_of_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydloc(
        &["dynamics", "--n", "60", "--rho", "0.2", "--realizations", "2", "--out", "dyn", "--n-times", "40"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plot = |name: &str| {
        let o = rydloc(&["plot", "dyn", "msd.csv", "--kind", "log-log", "--y", "mean", "--out", name], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let first = plot("a.svg");
    assert_eq!(first, plot("b.svg"));
    assert!(String::from_utf8(first).unwrap().starts_with("<svg"));
    let missing = rydloc(&["plot", "dyn", "absent.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

// The trace of H vanishes, so every spectrum has mean energy exactly zero; the
// asymmetry shows up as a long negative tail and a bulk shifted to E > 0.
#[test]
fn dense_spectrum_has_long_negative_tail() {
    let dir = tempfile::tempdir().unwrap();
    let out = rydloc(
        &["spectrum", "--rho", "0.5", "--n", "1000", "--realizations", "100", "--out", "sp"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["mean_energy"].as_f64().unwrap().abs() < 1e-12);
    assert!(summary["energy_skewness"].as_f64().unwrap() < -0.5);
    let dos = rows(&dir.path().join("sp/dos.csv"));
    let occupied: Vec<&Vec<f64>> = dos.iter().filter(|r| r[3] > 0.0).collect();
    let (lo, hi) = (occupied[0][0], occupied[occupied.len() - 1][0]);
    assert!(-lo > 2.0 * hi, "support [{lo}, {hi}]");
    let total: f64 = dos.iter().map(|r| r[1]).sum();
    let mut acc = 0.0;
    let median = dos
        .iter()
        .find(|r| {
            acc += r[1];
            acc >= total / 2.0
        })
        .unwrap()[0];
    assert!(median > 0.0, "median {median}");
}

#[test]
fn recipes_are_valid_run_configs() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/recipes");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = rydloc::ensemble::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen > 0);
}
