//! Command-line front end: simulation and analysis stages over a run
//! directory, plus a one-shot pipeline.

pub mod cmd;
pub mod config;
pub mod error;
pub mod run;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::Result;

#[derive(Debug, Parser)]
#[command(name = "sunpair", version, about = "Simulate and analyse polarization-entangled photon pairs")]
pub struct Cli {
    /// Experiment configuration (JSON). Analysis stages default to the
    /// configuration stored in the run directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Omit the generation time from reports.
    #[arg(long, global = true)]
    pub reproducible: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate time tags for every configured setting.
    Simulate,
    /// Correlate streams into histograms and the count table.
    Histogram,
    /// Reconstruct the density matrix from the count table.
    Tomo {
        /// Count table; defaults to RUN/counts.csv.
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// CHSH parameter and correlation curves.
    Chsh {
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Density matrix JSON for predicted curves (and exact mode).
        #[arg(long)]
        rho: Option<PathBuf>,
        /// Use exact probabilities of the state instead of counts.
        #[arg(long)]
        exact: bool,
    },
    /// Summarise a run, optionally aggregating further runs.
    Report {
        /// Additional run directories to aggregate with RUN.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// simulate, histogram, tomo, chsh and report in one go.
    Pipeline,
}

fn resolve_config(cli: &Cli, from_run: bool) -> Result<ExperimentConfig> {
    let stored = cli.out.join(run::CONFIG);
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if from_run && stored.is_file() => ExperimentConfig::load(&stored)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs one command and returns the lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let out: &Path = &cli.out;
    let mut lines = Vec::new();
    match &cli.command {
        Command::Simulate => {
            let cfg = resolve_config(cli, false)?;
            let m = cmd::simulate(&cfg, out)?;
            lines.push(format!(
                "simulated {} settings ({} stream files) into {}",
                m.entries.len(),
                2 * m.entries.len(),
                out.display()
            ));
        }
        Command::Histogram => {
            let cfg = resolve_config(cli, true)?;
            let h = cmd::histogram(&cfg, out)?;
            lines.push(format!("window centre {:.0} ps, width {} ps", h.window_center_ps, h.window_ps));
            for s in &h.settings {
                let acc = match (s.accidental_per_window, &s.accidental_note) {
                    (Some(a), _) => format!("{a:.4}"),
                    (None, Some(note)) => note.clone(),
                    (None, None) => "-".into(),
                };
                lines.push(format!(
                    "{}: window count {}, accidentals per window {}, normalized {:.3} ({:.4} s^-1)",
                    s.setting, s.raw, acc, s.normalized, s.normalized_rate_per_s
                ));
            }
        }
        Command::Tomo { counts } => {
            let cfg = resolve_config(cli, true)?;
            let r = cmd::tomo(&cfg, out, counts.as_deref())?;
            lines.push(format!(
                "C = {:.4} ± {:.4}, P = {:.4} ± {:.4}, F = {:.4} ± {:.4} ({} bootstrap replicas{})",
                r.concurrence.value,
                r.concurrence.std,
                r.purity.value,
                r.purity.std,
                r.fidelity.value,
                r.fidelity.std,
                r.n_bootstrap,
                if r.converged { "" } else { ", not converged" }
            ));
        }
        Command::Chsh { counts, rho, exact } => {
            let cfg = resolve_config(cli, true)?;
            let c = cmd::chsh(&cfg, out, counts.as_deref(), rho.as_deref(), *exact)?;
            let sig = c
                .result
                .violation_sigmas
                .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
            lines.push(format!(
                "S = {:.4} ± {:.4} ({} mode), violation {} sigma",
                c.result.s, c.result.s_std, c.mode, sig
            ));
        }
        Command::Report { runs } => {
            cmd::report(out, runs, cli.reproducible)?;
            lines.push(format!("report written to {}", out.join(run::REPORT_JSON).display()));
        }
        Command::Pipeline => {
            let cfg = resolve_config(cli, false)?;
            let r = cmd::pipeline(&cfg, out, cli.reproducible)?;
            lines.push(serde_json::to_string_pretty(&r["headline"]).expect("json"));
        }
    }
    Ok(lines)
}
