//! Run-directory layout and file helpers.
//!
//! ```text
//! RUN/config.json            effective configuration
//! RUN/manifest.json          one entry per acquired setting
//! RUN/streams/*.ttag         binary time tags, one file per setting and channel
//! RUN/histograms/*.csv       Δt histograms (per setting and aggregate)
//! RUN/histogram_summary.json window centre, accidentals, rates
//! RUN/counts.csv             count table
//! RUN/tomography.json        reconstruction with bootstrap errors
//! RUN/density_matrix.csv     ρ entries for bar charts
//! RUN/chsh.json              correlations, S and its uncertainties
//! RUN/chsh_curve_s*.csv      predicted and measured correlation curves
//! RUN/report.json, report.md
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sunpair::polarization::JointSetting;

use crate::error::{CliError, Result};

pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";
pub const STREAMS: &str = "streams";
pub const HISTOGRAMS: &str = "histograms";
pub const HISTOGRAM_SUMMARY: &str = "histogram_summary.json";
pub const COUNTS: &str = "counts.csv";
pub const TOMOGRAPHY: &str = "tomography.json";
pub const DENSITY_CSV: &str = "density_matrix.csv";
pub const CHSH: &str = "chsh.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// File-name stem for a setting, e.g. `03_H_R` or `17_90_157.5`.
pub fn setting_stem(index: usize, setting: &JointSetting) -> String {
    format!("{index:02}_{}_{}", setting.signal, setting.idler)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub setting: JointSetting,
    pub start_time_s: f64,
    pub duration_s: f64,
    pub mean_power_nw: f64,
    pub emitted_pairs: u64,
    /// Paths relative to the run directory.
    pub signal_file: String,
    pub idler_file: String,
    pub signal_clicks: usize,
    pub idler_clicks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub tdc_resolution_ps: u16,
    pub entries: Vec<ManifestEntry>,
}
