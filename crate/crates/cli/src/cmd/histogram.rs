use std::path::Path;

use serde::{Deserialize, Serialize};
use sunpair::correlator::{analyze_setting, count_table_csv, cross_correlate, Histogram};
use sunpair::polarization::JointSetting;
use sunpair::timetag::{read_stream, Channel};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::run::{self, read_json, setting_stem, write_atomic, write_json, Manifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub setting: JointSetting,
    pub raw: u64,
    /// `None` when the streams cannot support an estimate.
    pub accidental_per_window: Option<f64>,
    pub accidental_note: Option<String>,
    pub normalized: f64,
    pub normalized_rate_per_s: f64,
    pub duration_s: f64,
    pub mean_power_nw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub window_center_ps: f64,
    pub window_ps: f64,
    pub settings: Vec<SettingSummary>,
}

/// Correlates every stream pair in the manifest. The coincidence window is
/// centred on the configured value or, by default, on the peak of the
/// histogram summed over all settings, so every setting shares one window.
pub fn histogram(cfg: &ExperimentConfig, out: &Path) -> Result<HistogramSummary> {
    let manifest: Manifest = read_json(&out.join(run::MANIFEST))?;
    let opts = cfg.correlator;
    let mut streams = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let s = read_stream(&out.join(&e.signal_file))?.timestamps(Channel::Signal);
        let i = read_stream(&out.join(&e.idler_file))?.timestamps(Channel::Idler);
        streams.push((s, i));
    }

    let mut aggregate = Histogram::zeros(opts.bin_width_ps, opts.range_ps)?;
    for (s, i) in &streams {
        aggregate.accumulate(&cross_correlate(s, i, opts.bin_width_ps, opts.range_ps)?)?;
    }
    let center = opts.window_center_ps.unwrap_or_else(|| aggregate.peak_center());
    write_atomic(
        &out.join(run::HISTOGRAMS).join("aggregate.csv"),
        aggregate.to_csv().as_bytes(),
    )?;

    let mut records = Vec::with_capacity(streams.len());
    let mut settings = Vec::with_capacity(streams.len());
    for (e, (s, i)) in manifest.entries.iter().zip(&streams) {
        let a = analyze_setting(e.setting, s, i, e.duration_s, e.mean_power_nw, &opts, Some(center))?;
        write_atomic(
            &out.join(run::HISTOGRAMS).join(format!("{}.csv", setting_stem(e.index, &e.setting))),
            a.histogram.to_csv().as_bytes(),
        )?;
        settings.push(SettingSummary {
            setting: e.setting,
            raw: a.record.raw,
            accidental_per_window: a.accidentals.map(|x| x.per_window),
            accidental_note: a
                .accidentals
                .is_none()
                .then(|| "insufficient data for an accidental estimate".to_string()),
            normalized: a.record.normalized,
            normalized_rate_per_s: a.record.normalized / e.duration_s,
            duration_s: e.duration_s,
            mean_power_nw: e.mean_power_nw,
        });
        records.push(a.record);
    }
    write_atomic(&out.join(run::COUNTS), count_table_csv(&records).as_bytes())?;
    let summary = HistogramSummary {
        window_center_ps: center,
        window_ps: opts.window_ps,
        settings,
    };
    write_json(&out.join(run::HISTOGRAM_SUMMARY), &summary)?;
    Ok(summary)
}
