use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sunpair::correlator::write_count_table;
use sunpair::polarization::{densify, PureState};
use sunpair::tomography::TomographyInput;

fn sunpair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sunpair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sunpair(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = sunpair(args);
    assert_eq!(out.status.code(), Some(code), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    String::from_utf8(out.stderr).unwrap()
}

fn config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.in.json");
    fs::write(&p, json).unwrap();
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `root`, relative path and contents, sorted.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn singlet_table(dir: &Path, drop: Option<usize>) -> PathBuf {
    let mut recs = TomographyInput::exact(&densify(&PureState::singlet()), 1000.0, 120.0).unwrap().records;
    if let Some(k) = drop {
        recs.remove(k);
    }
    let p = dir.join("table.csv");
    write_count_table(&recs, &p).unwrap();
    p
}

#[test]
fn simulate_writes_a_stream_pair_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"acquisition": {"presets": ["tomography"]}}"#);
    let run = dir.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    let streams: Vec<_> = fs::read_dir(run.join("streams")).unwrap().collect();
    assert_eq!(streams.len(), 32);
    let m = json(run.join("manifest.json"));
    assert_eq!(m["entries"].as_array().unwrap().len(), 16);
}

#[test]
fn zero_duration_is_rejected_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"acquisition": {"duration_s": 0}}"#);
    let err = fails_with(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("run"))], 2);
    assert!(err.contains("acquisition.duration_s"), "{err}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"correlator": {"window": 5}}"#);
    let err = fails_with(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("run"))], 2);
    assert!(err.contains("correlator"), "{err}");
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"acquisition": {"presets": [], "settings": ["H/V", "V/H", "D/D"]}}"#);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a), "--seed", "5"]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "5"]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]);
    assert_eq!(tree(&a), tree(&b));
    assert_ne!(fs::read(a.join("manifest.json")).unwrap(), fs::read(c.join("manifest.json")).unwrap());
}

#[test]
fn histogram_of_empty_streams() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        r#"{"source": {"pair_rate_per_mw": 0},
            "detectors": {"signal": {"dark_rate": 0}, "idler": {"dark_rate": 0, "channel_delay_ps": 2250}},
            "acquisition": {"presets": [], "settings": ["H/V"]}}"#,
    );
    let run = dir.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    let stdout = ok(&["histogram", "--out", s(&run)]);
    assert!(stdout.contains("insufficient"), "{stdout}");
    let summary = json(run.join("histogram_summary.json"));
    let st = &summary["settings"][0];
    assert_eq!(st["raw"], 0);
    assert!(st["accidental_per_window"].is_null());
    let agg = fs::read_to_string(run.join("histograms/aggregate.csv")).unwrap();
    assert!(agg.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn delay_only_stream_fills_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    // no jitter, no darks, 1 ps grid: every pair sits at exactly 2250 ps
    let det = r#"{"efficiency": 1.0, "dark_rate": 0, "jitter_sigma_ps": 0, "channel_delay_ps": 0, "tdc_resolution_ps": 1}"#;
    let idl = r#"{"efficiency": 1.0, "dark_rate": 0, "jitter_sigma_ps": 0, "channel_delay_ps": 2250, "tdc_resolution_ps": 1}"#;
    let cfg = config(
        dir.path(),
        &format!(
            r#"{{"source": {{"pair_rate_per_mw": 1000000, "phase_error": 0, "dephasing": 0, "white_noise": 0, "amplitude_imbalance": 0}},
                "detectors": {{"signal": {det}, "idler": {idl}}},
                "acquisition": {{"presets": [], "settings": ["H/V"], "duration_s": 10}}}}"#
        ),
    );
    let run = dir.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    ok(&["histogram", "--out", s(&run)]);
    let agg = fs::read_to_string(run.join("histograms/aggregate.csv")).unwrap();
    let nonzero: Vec<(f64, u64)> = agg
        .lines()
        .skip(1)
        .map(|l| {
            let (c, n) = l.split_once(',').unwrap();
            (c.parse().unwrap(), n.parse().unwrap())
        })
        .filter(|(_, n)| *n > 0)
        .collect();
    assert_eq!(nonzero.len(), 1, "{nonzero:?}");
    let (center, n) = nonzero[0];
    assert!((center - 2250.0).abs() <= 81.0, "bin centre {center}");
    assert!(n > 100, "{n}");
}

#[test]
fn default_rate_at_reference_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"acquisition": {"presets": [], "settings": ["V/H"]}}"#);
    let run = dir.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run), "--seed", "3"]);
    ok(&["histogram", "--out", s(&run)]);
    let n = json(run.join("histogram_summary.json"))["settings"][0]["normalized"].as_f64().unwrap();
    assert!((n - 10.0).abs() <= 3.0 * 10f64.sqrt(), "normalized count {n}");
}

#[test]
fn tomo_on_exact_singlet_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = singlet_table(dir.path(), None);
    let run = dir.path().join("run");
    ok(&["tomo", "--counts", s(&table), "--out", s(&run)]);
    let r = json(run.join("tomography.json"));
    for k in ["concurrence", "purity", "fidelity"] {
        assert!(r[k]["value"].as_f64().unwrap() > 0.999, "{k}: {}", r[k]);
    }
    let csv = fs::read_to_string(run.join("density_matrix.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("row,col,re,im"));
    assert_eq!(csv.lines().count(), 17);
}

#[test]
fn tomo_names_the_missing_setting() {
    let dir = tempfile::tempdir().unwrap();
    // basis order is signal-major over H, V, D, R: index 6 is V/D
    let table = singlet_table(dir.path(), Some(6));
    let err = fails_with(&["tomo", "--counts", s(&table), "--out", s(&dir.path().join("run"))], 3);
    assert!(err.contains("V/D"), "{err}");
}

#[test]
fn chsh_exact_singlet_and_degenerate_settings() {
    let dir = tempfile::tempdir().unwrap();
    let rho = dir.path().join("singlet.json");
    fs::write(&rho, densify(&PureState::singlet()).to_json()).unwrap();
    let run = dir.path().join("run");
    ok(&["chsh", "--exact", "--rho", s(&rho), "--out", s(&run)]);
    let c = json(run.join("chsh.json"));
    assert!((c["result"]["s"].as_f64().unwrap() - 2.8284).abs() < 1e-4);
    assert_eq!(c["result"]["s_std"].as_f64().unwrap(), 0.0);

    let cfg = config(dir.path(), r#"{"chsh": {"theta_s": 0, "theta_s_prime": 0, "theta_i": 0, "theta_i_prime": 0}}"#);
    let run2 = dir.path().join("run2");
    ok(&["chsh", "--exact", "--rho", s(&rho), "--config", s(&cfg), "--out", s(&run2)]);
    let c = json(run2.join("chsh.json"));
    assert!(c["result"]["s"].as_f64().unwrap() <= 2.0 + 1e-12);

    // counts mode without a CHSH table
    let table = singlet_table(dir.path(), None);
    let err = fails_with(&["chsh", "--counts", s(&table), "--out", s(&run2)], 3);
    assert!(err.contains("22.5"), "{err}");
}

#[test]
fn exact_mode_needs_a_state() {
    let dir = tempfile::tempdir().unwrap();
    fails_with(&["chsh", "--exact", "--out", s(&dir.path().join("run"))], 2);
}

#[test]
fn report_marks_missing_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"acquisition": {"presets": [], "settings": ["H/V"], "duration_s": 10}}"#);
    let run = dir.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    ok(&["histogram", "--out", s(&run)]);
    ok(&["report", "--out", s(&run)]);
    let r = json(run.join("report.json"));
    assert_eq!(r["tomography"], "absent");
    assert_eq!(r["chsh"], "absent");
    assert!(r["histogram"].is_object());
    assert!(run.join("report.md").is_file());
}

#[test]
fn corrupt_stream_reports_file_and_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"acquisition": {"presets": [], "settings": ["H/V"], "duration_s": 10}}"#);
    let run = dir.path().join("run");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&run)]);
    let stream = fs::read_dir(run.join("streams"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_idler.ttag"))
        .unwrap();
    let mut bytes = fs::read(&stream).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&stream, bytes).unwrap();
    let err = fails_with(&["histogram", "--out", s(&run)], 4);
    assert!(err.contains("_idler.ttag") && err.contains("byte"), "{err}");
}

#[test]
fn pipeline_equals_staged_execution_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"tomography": {"bootstrap": 20}, "chsh": {"monte_carlo_replicas": 50}}"#);
    let (one, two, staged) = (dir.path().join("one"), dir.path().join("two"), dir.path().join("staged"));
    let headline = ok(&["pipeline", "--config", s(&cfg), "--out", s(&one), "--reproducible"]);
    ok(&["pipeline", "--config", s(&cfg), "--out", s(&two), "--reproducible"]);
    assert_eq!(tree(&one), tree(&two));

    ok(&["simulate", "--config", s(&cfg), "--out", s(&staged)]);
    ok(&["histogram", "--out", s(&staged)]);
    ok(&["tomo", "--out", s(&staged)]);
    ok(&["chsh", "--out", s(&staged)]);
    ok(&["report", "--out", s(&staged), "--reproducible"]);
    assert_eq!(tree(&one), tree(&staged));

    let h: Value = serde_json::from_str(&headline).unwrap();
    for k in ["concurrence", "purity", "fidelity", "s", "coincidence_rate_per_min"] {
        assert!(!h[k].is_null(), "headline lacks {k}: {h}");
    }
    // without the flag the report carries a timestamp
    ok(&["report", "--out", s(&two)]);
    assert!(!json(two.join("report.json"))["generated_at_unix_s"].is_null());
    assert!(json(one.join("report.json"))["generated_at_unix_s"].is_null());
}

#[test]
fn report_aggregates_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"tomography": {"bootstrap": 10}, "chsh": {"monte_carlo_replicas": 10}}"#);
    let runs: Vec<PathBuf> = (1..=3).map(|k| dir.path().join(format!("day{k}"))).collect();
    for (k, r) in runs.iter().enumerate() {
        ok(&["pipeline", "--config", s(&cfg), "--out", s(r), "--seed", &k.to_string(), "--reproducible"]);
    }
    ok(&["report", "--out", s(&runs[0]), "--runs", s(&runs[1]), s(&runs[2]), "--reproducible"]);
    let agg = &json(runs[0].join("report.json"))["aggregate"];
    assert_eq!(agg["runs"], 3, "{agg}");
    let c = &agg["tomography"]["concurrence"];
    assert!(c["std"].as_f64().unwrap() > 0.0, "{agg}");
    assert!(!agg["chsh"]["s"]["std"].is_null(), "{agg}");
}
