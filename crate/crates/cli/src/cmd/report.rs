use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use sunpair::chsh::run_spread;
use sunpair::tomography::{aggregate_runs, TomographyResult, ValueStd};

use super::{ChshOutput, HistogramSummary};
use crate::error::Result;
use crate::run::{self, read_json, write_atomic, write_json, Manifest};

const ABSENT: &str = "absent";

fn optional<T: DeserializeOwned>(path: PathBuf) -> Result<Option<T>> {
    if path.is_file() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn section<T>(v: &Option<T>, f: impl FnOnce(&T) -> Value) -> Value {
    v.as_ref().map_or_else(|| Value::from(ABSENT), f)
}

fn is_angle(a: Option<f64>, want: f64) -> bool {
    a.is_some_and(|t| ((t - want).rem_euclid(180.0)).min((want - t).rem_euclid(180.0)) < 1e-6)
}

/// Mean normalised coincidences per minute over the `H/V` and `V/H`
/// settings, where the pair signal peaks.
fn coincidence_rate_per_min(h: &HistogramSummary) -> Option<f64> {
    let rates: Vec<f64> = h
        .settings
        .iter()
        .filter(|s| {
            let (a, b) = (s.setting.signal.linear_angle(), s.setting.idler.linear_angle());
            (is_angle(a, 0.0) && is_angle(b, 90.0)) || (is_angle(a, 90.0) && is_angle(b, 0.0))
        })
        .map(|s| s.normalized_rate_per_s * 60.0)
        .collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

fn value_std(v: &ValueStd) -> Value {
    json!({ "value": v.value, "std": v.std })
}

struct RunArtifacts {
    config: Option<Value>,
    manifest: Option<Manifest>,
    histogram: Option<HistogramSummary>,
    tomography: Option<TomographyResult>,
    chsh: Option<ChshOutput>,
}

impl RunArtifacts {
    fn load(dir: &Path) -> Result<Self> {
        Ok(RunArtifacts {
            config: optional(dir.join(run::CONFIG))?,
            manifest: optional(dir.join(run::MANIFEST))?,
            histogram: optional(dir.join(run::HISTOGRAM_SUMMARY))?,
            tomography: optional(dir.join(run::TOMOGRAPHY))?,
            chsh: optional(dir.join(run::CHSH))?,
        })
    }
}

/// Consolidates whatever stages have run in `out`; missing stages are marked
/// `"absent"`. With extra `runs`, adds the mean and run-to-run spread over
/// all runs. Without `reproducible` the report carries a generation time.
pub fn report(out: &Path, runs: &[PathBuf], reproducible: bool) -> Result<Value> {
    let a = RunArtifacts::load(out)?;

    let rate = a.histogram.as_ref().and_then(coincidence_rate_per_min);
    let headline = json!({
        "concurrence": a.tomography.as_ref().map(|t| value_std(&t.concurrence)),
        "purity": a.tomography.as_ref().map(|t| value_std(&t.purity)),
        "fidelity": a.tomography.as_ref().map(|t| value_std(&t.fidelity)),
        "s": a.chsh.as_ref().map(|c| json!({ "value": c.result.s, "std": c.result.s_std })),
        "coincidence_rate_per_min": rate,
    });

    let mut report = json!({
        "config": a.config.clone().unwrap_or_else(|| Value::from(ABSENT)),
        "simulation": section(&a.manifest, |m| json!({
            "seed": m.seed,
            "settings": m.entries.len(),
            "emitted_pairs": m.entries.iter().map(|e| e.emitted_pairs).sum::<u64>(),
            "duration_s": m.entries.iter().map(|e| e.duration_s).sum::<f64>(),
        })),
        "histogram": section(&a.histogram, |h| {
            let acc: Vec<f64> = h.settings.iter().filter_map(|s| s.accidental_per_window).collect();
            json!({
                "window_center_ps": h.window_center_ps,
                "window_ps": h.window_ps,
                "settings": h.settings.len(),
                "mean_accidental_per_window": (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64),
                "coincidence_rate_per_min": rate,
            })
        }),
        "tomography": section(&a.tomography, |t| json!({
            "concurrence": value_std(&t.concurrence),
            "purity": value_std(&t.purity),
            "fidelity": value_std(&t.fidelity),
            "basis_set": t.basis_set,
            "n_bootstrap": t.n_bootstrap,
            "converged": t.converged,
        })),
        "chsh": section(&a.chsh, |c| json!({
            "mode": c.mode,
            "s": c.result.s,
            "s_std": c.result.s_std,
            "violation_sigmas": c.result.violation_sigmas,
            "monte_carlo_s_std": c.monte_carlo_s_std,
        })),
        "headline": headline,
    });

    if !runs.is_empty() {
        let mut all = vec![a];
        for r in runs {
            all.push(RunArtifacts::load(r)?);
        }
        let tomos: Vec<TomographyResult> = all.iter().filter_map(|r| r.tomography.clone()).collect();
        let chshs: Vec<_> = all.iter().filter_map(|r| r.chsh.as_ref().map(|c| c.result.clone())).collect();
        let tomo_agg = aggregate_runs(&tomos).ok();
        let s_agg = run_spread(&chshs).ok();
        report["aggregate"] = json!({
            "runs": all.len(),
            "tomography": section(&tomo_agg, |t| json!({
                "runs": t.runs,
                "concurrence": value_std(&t.concurrence),
                "purity": value_std(&t.purity),
                "fidelity": value_std(&t.fidelity),
                "rho": t.rho,
            })),
            "chsh": section(&s_agg, |s| json!({ "runs": chshs.len(), "s": value_std(s) })),
        });
    }
    if !reproducible {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        report["generated_at_unix_s"] = json!(now);
    }

    write_json(&out.join(run::REPORT_JSON), &report)?;
    write_atomic(&out.join(run::REPORT_MD), markdown(&report).as_bytes())?;
    Ok(report)
}

fn fmt_vs(v: &Value) -> (String, String) {
    match v {
        Value::Object(m) => (
            m.get("value").and_then(Value::as_f64).map_or("-".into(), |x| format!("{x:.4}")),
            m.get("std").and_then(Value::as_f64).map_or("-".into(), |x| format!("{x:.4}")),
        ),
        Value::Number(n) => (format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)), "-".into()),
        _ => (ABSENT.into(), "-".into()),
    }
}

fn markdown(r: &Value) -> String {
    let mut s = String::from("# Run report\n\n| metric | value | std |\n|---|---|---|\n");
    for key in ["concurrence", "purity", "fidelity", "s", "coincidence_rate_per_min"] {
        let (v, e) = fmt_vs(&r["headline"][key]);
        s.push_str(&format!("| {key} | {v} | {e} |\n"));
    }
    let absent: Vec<&str> = ["config", "simulation", "histogram", "tomography", "chsh"]
        .into_iter()
        .filter(|k| r[*k] == ABSENT)
        .collect();
    if !absent.is_empty() {
        s.push_str(&format!("\nAbsent sections: {}\n", absent.join(", ")));
    }
    if let Some(v) = r["chsh"]["violation_sigmas"].as_f64() {
        s.push_str(&format!("\nCHSH violation: {v:.2} standard deviations\n"));
    }
    if let Some(agg) = r.get("aggregate") {
        s.push_str(&format!(
            "\n## Aggregate over {} runs\n\nSpread is the run-to-run sample standard deviation.\n\n| metric | value | spread |\n|---|---|---|\n",
            agg["runs"]
        ));
        for key in ["concurrence", "purity", "fidelity"] {
            let (v, e) = fmt_vs(&agg["tomography"][key]);
            s.push_str(&format!("| {key} | {v} | {e} |\n"));
        }
        let (v, e) = fmt_vs(&agg["chsh"]["s"]);
        s.push_str(&format!("| s | {v} | {e} |\n"));
    }
    s
}
