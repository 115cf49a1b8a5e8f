//! Pipeline stages. Each stage reads its inputs from, and writes its
//! outputs to, a run directory.

mod chsh;
mod histogram;
mod report;
mod simulate;
mod tomo;

pub use chsh::{chsh, ChshOutput};
pub use histogram::{histogram, HistogramSummary, SettingSummary};
pub use report::report;
pub use simulate::simulate;
pub use tomo::tomo;

use std::path::Path;

use sunpair::correlator::{read_count_table, CountRecord};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Every stage in order: simulate, histogram, tomo, chsh, report.
pub fn pipeline(cfg: &ExperimentConfig, out: &Path, reproducible: bool) -> Result<serde_json::Value> {
    simulate(cfg, out)?;
    histogram(cfg, out)?;
    tomo(cfg, out, None)?;
    chsh(cfg, out, None, None, false)?;
    report(out, &[], reproducible)
}

fn load_counts(out: &Path, counts: Option<&Path>) -> Result<Vec<CountRecord>> {
    let path = counts.map_or_else(|| out.join(crate::run::COUNTS), Path::to_path_buf);
    Ok(read_count_table(&path)?)
}
