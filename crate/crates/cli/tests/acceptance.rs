//! Acceptance suite. Runs each criterion end to end and prints one
//! `criterion N: PASS|FAIL` line per criterion; exits non-zero on any failure.

use std::f64::consts::SQRT_2;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::Value;
use sunpair::chsh::{exact_correlation, exact_s, fringe_visibility, ChshCounts, ChshSettings};
use sunpair::correlator::{analyze_setting, cross_correlate, window_coincidences, CountRecord, Histogram};
use sunpair::polarization::*;
use sunpair::rng::keyed_rng;
use sunpair::source::{build_state, reference_calibration, SourceParams};
use sunpair::timetag::{decode, encode, simulate_acquisition, Channel, TimeTagRecord, TimeTagStream};
use sunpair::tomography::{basis_set_16, params_from_density, reconstruct, Likelihood, TomographyInput};
use sunpair_cli::config::{ExperimentConfig, Preset};

/// Pairs s⁻¹ mW⁻¹ giving about 20 coincidences in each strong tomography
/// setting (HV, VH) per 120 s at 100 nW.
const SPARSE_RATE: f64 = 10_000.0 / 3.0;
/// Pairs s⁻¹ mW⁻¹ giving 10⁴ emitted pairs per 120 s setting at 100 nW.
const IDEAL_RATE: f64 = 1e4 / (120.0 * 1e-4);
const SEEDS: u64 = 100;

struct Line {
    name: String,
    pass: bool,
    detail: String,
}

fn line(name: &str, pass: bool, detail: String) -> Line {
    Line {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

// ---------------------------------------------------------------------------
// Shared simulation helpers
// ---------------------------------------------------------------------------

struct Acquired {
    records: Vec<CountRecord>,
    peak_center_ps: f64,
    max_accidental_per_window: f64,
}

/// Simulates the configured plan and reduces it the way the histogram stage
/// does: one aggregate peak as the common window centre.
fn acquire(cfg: &ExperimentConfig) -> Acquired {
    let profile = cfg.pump_profile().unwrap();
    let rho = build_state(&cfg.source).unwrap();
    let streams = simulate_acquisition(&rho, &cfg.source, &profile, &cfg.detectors.signal, &cfg.detectors.idler, &cfg.plan(&profile)).unwrap();
    let opts = &cfg.correlator;
    let ts: Vec<(Vec<u64>, Vec<u64>)> = streams
        .iter()
        .map(|s| (s.signal.timestamps(Channel::Signal), s.idler.timestamps(Channel::Idler)))
        .collect();
    let mut agg = Histogram::zeros(opts.bin_width_ps, opts.range_ps).unwrap();
    for (a, b) in &ts {
        agg.accumulate(&cross_correlate(a, b, opts.bin_width_ps, opts.range_ps).unwrap()).unwrap();
    }
    let center = agg.peak_center();
    let mut max_acc = 0.0f64;
    let records = streams
        .iter()
        .zip(&ts)
        .map(|(s, (a, b))| {
            let r = analyze_setting(s.setting, a, b, s.duration_s, s.mean_power_nw, opts, Some(center)).unwrap();
            if let Some(acc) = r.accidentals {
                max_acc = max_acc.max(acc.per_window);
            }
            r.record
        })
        .collect();
    Acquired {
        records,
        peak_center_ps: center,
        max_accidental_per_window: max_acc,
    }
}

fn sparse_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        source: reference_calibration(SPARSE_RATE).params,
        ..ExperimentConfig::default()
    }
}

// ---------------------------------------------------------------------------
// Criterion 1
// ---------------------------------------------------------------------------

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn criterion_1() -> Line {
    let mut cfg = ExperimentConfig {
        source: SourceParams::ideal(IDEAL_RATE),
        ..ExperimentConfig::default()
    };
    cfg.detectors.signal.dark_rate = 0.0;
    cfg.detectors.idler.dark_rate = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    sunpair_cli::cmd::pipeline(&cfg, dir.path(), true).unwrap();
    let elapsed = t0.elapsed();
    let tomo = read_json(&dir.path().join("tomography.json"));
    let chsh = read_json(&dir.path().join("chsh.json"));
    let get = |v: &Value, k: &str| v[k]["value"].as_f64().unwrap();
    let (c, p, f) = (get(&tomo, "concurrence"), get(&tomo, "purity"), get(&tomo, "fidelity"));
    let s = chsh["result"]["s"].as_f64().unwrap();
    let s_std = chsh["result"]["s_std"].as_f64().unwrap();
    let pass = c >= 0.99 && p >= 0.99 && f >= 0.99 && (s - 2.0 * SQRT_2).abs() <= 0.02 && elapsed < Duration::from_secs(60);
    line(
        "criterion 1",
        pass,
        format!(
            "ideal source, seed {}: C={c:.4} P={p:.4} F={f:.4} (need >= 0.99), S={s:.4} +/- {s_std:.4} (need 2.8284 +/- 0.02), {:.1} s",
            cfg.seed,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria 2, 4 and 5 share one Monte Carlo over seeds
// ---------------------------------------------------------------------------

struct SeedRun {
    c: f64,
    c_std: f64,
    s: f64,
    s_std: f64,
    violation: bool,
    peak_center_ps: f64,
    max_accidental: f64,
    strong_counts: f64,
}

fn sparse_runs() -> (Vec<SeedRun>, Duration) {
    let t0 = Instant::now();
    let runs = (0..SEEDS)
        .map(|seed| {
            let cfg = sparse_config(seed);
            let acq = acquire(&cfg);
            let input = TomographyInput::from_records(&acq.records).unwrap();
            let tomo = reconstruct(&input, cfg.tomography.bootstrap, seed).unwrap();
            let chsh = ChshCounts::from_records(&acq.records, cfg.chsh.settings()).unwrap().evaluate().unwrap();
            let strong: Vec<f64> = input
                .records
                .iter()
                .filter(|r| ["H/V", "V/H"].contains(&r.setting.to_string().as_str()))
                .map(|r| r.raw as f64)
                .collect();
            SeedRun {
                c: tomo.concurrence.value,
                c_std: tomo.concurrence.std,
                s: chsh.s,
                s_std: chsh.s_std,
                violation: chsh.violation_sigmas.is_some_and(|v| v > 0.0),
                peak_center_ps: acq.peak_center_ps,
                max_accidental: acq.max_accidental_per_window,
                strong_counts: mean(&strong),
            }
        })
        .collect();
    (runs, t0.elapsed())
}

/// The criterion line plus an informational coverage line.
fn criterion_2(runs: &[SeedRun], elapsed: Duration) -> (Line, String) {
    let target = reference_calibration(SPARSE_RATE).achieved.concurrence;
    let cs: Vec<f64> = runs.iter().map(|r| r.c).collect();
    let stds: Vec<f64> = runs.iter().map(|r| r.c_std).collect();
    let (mc, ms) = (mean(&cs), mean(&stds));
    let lo = stds.iter().copied().fold(f64::MAX, f64::min);
    let hi = stds.iter().copied().fold(0.0, f64::max);
    let strong = mean(&runs.iter().map(|r| r.strong_counts).collect::<Vec<_>>());
    let pass = (mc - 0.905).abs() <= 0.03 && (0.02..=0.10).contains(&ms) && elapsed < Duration::from_secs(600);
    let cover = |k: f64| runs.iter().filter(|r| (r.c - target).abs() <= k * r.c_std).count();
    let (c1, c2) = (cover(1.0), cover(2.0));
    (
        line(
            "criterion 2",
            pass,
            format!(
                "{SEEDS} seeds, ~{strong:.1} counts in HV/VH: mean C={mc:.4} (need 0.905 +/- 0.03), mean bootstrap std(C)={ms:.4} \
                 (need [0.02, 0.10]; per-seed range {lo:.3}..{hi:.3}), {:.0} s",
                elapsed.as_secs_f64()
            ),
        ),
        format!("info: generating C={target:.4} lies within 1 bootstrap std in {c1}/{SEEDS} seeds and within 2 std in {c2}/{SEEDS}"),
    )
}

fn criterion_4(runs: &[SeedRun]) -> Line {
    let worst_peak = runs.iter().map(|r| (r.peak_center_ps - 2250.0).abs()).fold(0.0, f64::max);
    let worst_acc = runs.iter().map(|r| r.max_accidental).fold(0.0, f64::max);
    line(
        "criterion 4",
        worst_peak <= 162.0 && worst_acc < 0.5,
        format!(
            "over {SEEDS} runs: largest peak offset from 2250 ps = {worst_peak:.0} ps (need <= 162), \
             largest accidental estimate = {worst_acc:.4} per window (need < 0.5)"
        ),
    )
}

fn criterion_5(runs: &[SeedRun]) -> Line {
    let rho = build_state(&reference_calibration(SPARSE_RATE).params).unwrap();
    let settings = ChshSettings::default();
    let vis = [settings.theta_s, settings.theta_s_prime].map(|t| fringe_visibility(&rho, t).unwrap());
    let predicted = 2.0 * SQRT_2 * mean(&vis);
    let ss: Vec<f64> = runs.iter().map(|r| r.s).collect();
    let ms = mean(&ss);
    let mstd = mean(&runs.iter().map(|r| r.s_std).collect::<Vec<_>>());
    let viol = runs.iter().filter(|r| r.violation).count();
    let pass = (ms - predicted).abs() <= 0.1 && (0.1..=0.35).contains(&mstd) && viol as f64 >= 0.95 * runs.len() as f64;
    line(
        "criterion 5",
        pass,
        format!(
            "mean S={ms:.4} vs 2*sqrt(2)*V={predicted:.4} (V = mean fringe visibility {:.4}/{:.4}, need within 0.1), \
             mean propagated std={mstd:.4} (need [0.1, 0.35]), spread of S over seeds={:.4}, exact S={:.4}, violations {viol}/{SEEDS} (need >= 95%)",
            vis[0],
            vis[1],
            sample_std(&ss),
            exact_s(&rho, &settings).unwrap()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 3
// ---------------------------------------------------------------------------

fn criterion_3() -> Line {
    let counts: Vec<f64> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let mut cfg = ExperimentConfig {
                seed,
                ..ExperimentConfig::default()
            };
            cfg.acquisition.presets = Vec::new();
            cfg.acquisition.settings = vec!["V/H".parse().unwrap()];
            acquire(&cfg).records[0].raw as f64
        })
        .collect();
    let m = mean(&counts);
    let var = sample_std(&counts).powi(2);
    let se = (var / counts.len() as f64).sqrt();
    // index of dispersion: (n−1)s²/m ~ χ²(n−1) for Poisson counts
    let dof = counts.len() as f64 - 1.0;
    let z = (dof * var / m - dof) / (2.0 * dof).sqrt();
    line(
        "criterion 3",
        (m - 10.0).abs() <= 3.0 * se && z.abs() <= 3.3,
        format!(
            "VH window count over 120 s at 100 nW, rate {} per mW: mean {m:.3} +/- {se:.3} (need within 3 SE of 10), \
             variance/mean {:.3} (dispersion z = {z:.2})",
            ExperimentConfig::default().source.pair_rate_per_mw,
            var / m
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6
// ---------------------------------------------------------------------------

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn random_density<R: Rng>(rng: &mut R) -> DensityMatrix {
    let g = Mat4::from_fn(|_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = g * g.adjoint();
    let m = m / m.trace();
    DensityMatrix::new((m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

fn random_unitary<R: Rng>(rng: &mut R) -> Mat2 {
    let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (a, b) = (c(v[0] / n, v[1] / n), c(v[2] / n, v[3] / n));
    Mat2::new(a, -b.conj(), b, a.conj())
}

fn werner_ok() -> Result<(), String> {
    for k in 0..=400 {
        let v = -1.0 / 3.0 + k as f64 / 300.0;
        let rho = DensityMatrix::werner(v).map_err(|e| e.to_string())?;
        let errs = [
            concurrence(&rho) - ((3.0 * v - 1.0) / 2.0).max(0.0),
            purity(&rho) - (1.0 + 3.0 * v * v) / 4.0,
            fidelity_to_pure(&rho, &PureState::singlet()) - (1.0 + 3.0 * v) / 4.0,
        ];
        if errs.iter().any(|e| e.abs() > 1e-10) {
            return Err(format!("Werner v={v}: errors {errs:?}"));
        }
    }
    Ok(())
}

fn tsirelson_ok() -> Result<(), String> {
    let mut rng = keyed_rng(6, 0, 0);
    for k in 0..1000 {
        let rho = if k % 2 == 0 {
            random_density(&mut rng)
        } else {
            let (u, w) = (random_unitary(&mut rng), random_unitary(&mut rng));
            let mix = DensityMatrix::mixture(&[(0.97, densify(&PureState::singlet())), (0.03, random_density(&mut rng))]).unwrap();
            mix.local_transform(&u, &w).unwrap()
        };
        let random = ChshSettings {
            theta_s: rng.random_range(0.0..180.0),
            theta_s_prime: rng.random_range(0.0..180.0),
            theta_i: rng.random_range(0.0..180.0),
            theta_i_prime: rng.random_range(0.0..180.0),
        };
        for st in [ChshSettings::default(), random] {
            let s = exact_s(&rho, &st).unwrap();
            if s > 2.0 * SQRT_2 + 1e-9 {
                return Err(format!("state {k}: S = {s}"));
            }
        }
    }
    Ok(())
}

fn singlet_law_ok() -> Result<(), String> {
    let mut rng = keyed_rng(6, 1, 0);
    let rho = densify(&PureState::singlet());
    for _ in 0..1000 {
        let (a, b): (f64, f64) = (rng.random_range(-360.0..360.0), rng.random_range(-360.0..360.0));
        let e = exact_correlation(&rho, a, b).unwrap();
        if (e + (2.0 * (a - b)).to_radians().cos()).abs() > 1e-10 {
            return Err(format!("E({a}, {b}) = {e}"));
        }
    }
    Ok(())
}

fn gradient_ok() -> Result<(), String> {
    let mut rng = keyed_rng(6, 2, 0);
    let basis = basis_set_16();
    for _ in 0..10 {
        let counts: Vec<f64> = (0..16).map(|_| rng.random_range(0..60u32) as f64).collect();
        let like = Likelihood::new(&basis, &counts);
        let x = params_from_density(random_density(&mut rng).matrix()).unwrap();
        let g = like.gradient(&x);
        let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for i in 0..16 {
            let (mut up, mut dn) = (x, x);
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (like.value(&up) - like.value(&dn)) / 2e-6;
            if (fd - g[i]).abs() > 1e-5 * scale {
                return Err(format!("parameter {i}: analytic {} vs difference {fd}", g[i]));
            }
        }
    }
    Ok(())
}

fn correlator_ok() -> Result<(), String> {
    let mut rng = keyed_rng(6, 3, 0);
    for case in 0..100 {
        let mut draw = |n: usize| {
            let mut v: Vec<u64> = (0..n).map(|_| rng.random_range(0..200_000u64)).collect();
            v.sort_unstable();
            v
        };
        let (s, i) = (draw(case * 10), draw(1000 - case * 7));
        let (bw, range) = (162u64, (-20_000i64, 20_000i64));
        let mut brute = vec![0u64; (40_000u64).div_ceil(bw) as usize];
        for &a in &s {
            for &b in &i {
                let dt = b as i64 - a as i64;
                if dt >= range.0 && dt < range.1 {
                    brute[((dt - range.0) as u64 / bw) as usize] += 1;
                }
            }
        }
        if cross_correlate(&s, &i, bw, range).unwrap().counts != brute {
            return Err(format!("histogram mismatch in case {case}"));
        }
        let mut used = vec![false; i.len()];
        let mut greedy = 0;
        for &a in &s {
            if let Some(k) = (0..i.len()).find(|&k| !used[k] && ((i[k] as f64 - a as f64) - 2250.0).abs() <= 500.0) {
                used[k] = true;
                greedy += 1;
            }
        }
        if window_coincidences(&s, &i, 2250.0, 1000.0).unwrap() != greedy {
            return Err(format!("window count mismatch in case {case}"));
        }
    }
    Ok(())
}

fn round_trip_ok() -> Result<(), String> {
    let mut rng = keyed_rng(6, 4, 0);
    for case in 0..50 {
        let res: u16 = rng.random_range(1..200);
        let mut recs: Vec<TimeTagRecord> = (0..rng.random_range(0..2000))
            .map(|_| TimeTagRecord {
                channel: if rng.random() { Channel::Signal } else { Channel::Idler },
                timestamp_ps: rng.random_range(0..1u64 << 40) * u64::from(res),
            })
            .collect();
        recs.sort_by_key(|r| r.timestamp_ps);
        let s = TimeTagStream::new(res, recs).unwrap();
        let bytes = encode(&s).unwrap();
        let back = decode(&bytes, Path::new("memory")).unwrap();
        if back != s || encode(&back).unwrap() != bytes {
            return Err(format!("round trip differs in case {case}"));
        }
    }
    Ok(())
}

fn tree(root: &Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism_ok() -> Result<(), String> {
    let mut cfg = ExperimentConfig::default();
    cfg.acquisition.presets = vec![Preset::Tomography, Preset::Chsh];
    cfg.tomography.bootstrap = 20;
    cfg.chsh.monte_carlo_replicas = 50;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    sunpair_cli::cmd::pipeline(&cfg, a.path(), true).map_err(|e| e.to_string())?;
    sunpair_cli::cmd::pipeline(&cfg, b.path(), true).map_err(|e| e.to_string())?;
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    if ta != tb {
        return Err("two pipeline runs with one seed differ".into());
    }
    Ok(())
}

type Check = fn() -> Result<(), String>;

fn criterion_6() -> Line {
    let checks: [(&str, Check); 7] = [
        ("Werner C/P/F", werner_ok),
        ("Tsirelson bound", tsirelson_ok),
        ("singlet E law", singlet_law_ok),
        ("MLE gradient", gradient_ok),
        ("correlator oracle", correlator_ok),
        ("time-tag round trip", round_trip_ok),
        ("pipeline determinism", determinism_ok),
    ];
    let mut failed = Vec::new();
    for (name, f) in checks {
        if let Err(e) = f() {
            failed.push(format!("{name}: {e}"));
        }
    }
    let detail = if failed.is_empty() {
        format!("{} property checks passed", checks.len())
    } else {
        failed.join("; ")
    };
    line("criterion 6", failed.is_empty(), detail)
}

fn main() {
    let mut lines = vec![criterion_1()];
    let (runs, elapsed) = sparse_runs();
    let (c2, coverage) = criterion_2(&runs, elapsed);
    lines.push(c2);
    lines.push(criterion_3());
    lines.push(criterion_4(&runs));
    lines.push(criterion_5(&runs));
    lines.push(criterion_6());
    lines.sort_by(|a, b| a.name.cmp(&b.name));
    for l in &lines {
        println!("{}: {} ({})", l.name, if l.pass { "PASS" } else { "FAIL" }, l.detail);
    }
    println!("{coverage}");
    if lines.iter().any(|l| !l.pass) {
        std::process::exit(1);
    }
}
