use std::path::Path;

use sunpair::tomography::{reconstruct, TomographyInput, TomographyResult};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::run::{self, write_atomic, write_json};

const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

/// Reconstructs ρ from the 16 tomography settings of a count table.
pub fn tomo(cfg: &ExperimentConfig, out: &Path, counts: Option<&Path>) -> Result<TomographyResult> {
    let records = super::load_counts(out, counts)?;
    let input = TomographyInput::from_records(&records)?;
    let result = reconstruct(&input, cfg.tomography.bootstrap, cfg.seed)?;
    write_json(&out.join(run::TOMOGRAPHY), &result)?;

    let mut csv = String::from("row,col,re,im\n");
    for (r, row) in BASIS_LABELS.iter().enumerate() {
        for (c, col) in BASIS_LABELS.iter().enumerate() {
            let z = result.rho.entry(r, c);
            csv.push_str(&format!("{row},{col},{},{}\n", z.re, z.im));
        }
    }
    write_atomic(&out.join(run::DENSITY_CSV), csv.as_bytes())?;
    Ok(result)
}
