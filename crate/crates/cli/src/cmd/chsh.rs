use std::path::Path;

use serde::{Deserialize, Serialize};
use sunpair::chsh::{correlation_curve, ChshCounts, ChshResult};
use sunpair::correlator::CountRecord;
use sunpair::polarization::DensityMatrix;
use sunpair::tomography::TomographyResult;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::run::{self, read_json, write_atomic, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshOutput {
    /// `"counts"` for measured counts, `"exact"` for infinite statistics.
    pub mode: String,
    pub result: ChshResult,
    /// Spread of S over Poisson resamplings of the counts.
    pub monte_carlo_s_std: Option<f64>,
    pub monte_carlo_replicas: Option<usize>,
    /// Where the state behind the predicted curves came from.
    pub rho_source: Option<String>,
    pub curve_files: Vec<String>,
}

/// Evaluates S from the count table, or from `rho` alone in exact mode, and
/// writes correlation curves for the four signal angles when a state is
/// available (`--rho`, else this run's tomography).
pub fn chsh(
    cfg: &ExperimentConfig,
    out: &Path,
    counts: Option<&Path>,
    rho_path: Option<&Path>,
    exact: bool,
) -> Result<ChshOutput> {
    let settings = cfg.chsh.settings();
    let (rho, rho_source) = match rho_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            (Some(DensityMatrix::from_json(&text)?), Some(p.display().to_string()))
        }
        None => {
            let t = out.join(run::TOMOGRAPHY);
            if t.is_file() {
                let r: TomographyResult = read_json(&t)?;
                (Some(r.rho), Some("tomography".to_string()))
            } else {
                (None, None)
            }
        }
    };

    let (mode, result, mc, records): (_, _, _, Vec<CountRecord>) = if exact {
        let rho = rho
            .as_ref()
            .ok_or_else(|| CliError::config("--rho", "exact mode needs a density matrix"))?;
        ("exact", ChshResult::exact(rho, settings)?, None, Vec::new())
    } else {
        let records = super::load_counts(out, counts)?;
        let counts = ChshCounts::from_records(&records, settings)?;
        let result = counts.evaluate()?;
        let mc = counts.monte_carlo_std(cfg.chsh.monte_carlo_replicas, cfg.seed)?;
        ("counts", result, Some(mc), records)
    };

    let mut curve_files = Vec::new();
    if let Some(rho) = &rho {
        for theta_s in [
            settings.theta_s,
            settings.theta_s + 90.0,
            settings.theta_s_prime,
            settings.theta_s_prime + 90.0,
        ] {
            let name = format!("chsh_curve_s{theta_s}.csv");
            if curve_files.contains(&name) {
                continue;
            }
            let mut csv = String::from("theta_i_deg,p_pred,count_norm,count_std\n");
            for p in correlation_curve(rho, &records, theta_s, cfg.chsh.curve_step_deg)? {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    p.theta_i_deg,
                    p.p_pred,
                    opt(p.count_norm),
                    opt(p.count_std)
                ));
            }
            write_atomic(&out.join(&name), csv.as_bytes())?;
            curve_files.push(name);
        }
    } else {
        log::warn!("no density matrix available; correlation curves skipped");
    }

    let output = ChshOutput {
        mode: mode.to_string(),
        result,
        monte_carlo_s_std: mc,
        monte_carlo_replicas: mc.map(|_| cfg.chsh.monte_carlo_replicas),
        rho_source,
        curve_files,
    };
    write_json(&out.join(run::CHSH), &output)?;
    Ok(output)
}
