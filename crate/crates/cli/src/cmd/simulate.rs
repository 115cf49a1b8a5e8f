use std::path::Path;

use sunpair::source::build_state;
use sunpair::timetag::{encode, simulate_acquisition};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::run::{self, setting_stem, write_atomic, write_json, Manifest, ManifestEntry};

/// Simulates every configured setting and writes one time-tag file per
/// setting and channel, the manifest, and the effective configuration.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    let profile = cfg.pump_profile()?;
    let plan = cfg.plan(&profile);
    let rho = build_state(&cfg.source)?;
    let streams = simulate_acquisition(
        &rho,
        &cfg.source,
        &profile,
        &cfg.detectors.signal,
        &cfg.detectors.idler,
        &plan,
    )?;

    let mut entries = Vec::with_capacity(streams.len());
    for (k, s) in streams.iter().enumerate() {
        let stem = setting_stem(k, &s.setting);
        let signal_file = format!("{}/{stem}_signal.ttag", run::STREAMS);
        let idler_file = format!("{}/{stem}_idler.ttag", run::STREAMS);
        write_atomic(&out.join(&signal_file), &encode(&s.signal)?)?;
        write_atomic(&out.join(&idler_file), &encode(&s.idler)?)?;
        entries.push(ManifestEntry {
            index: k,
            setting: s.setting,
            start_time_s: s.start_time_s,
            duration_s: s.duration_s,
            mean_power_nw: s.mean_power_nw,
            emitted_pairs: s.emitted_pairs,
            signal_file,
            idler_file,
            signal_clicks: s.signal.len(),
            idler_clicks: s.idler.len(),
        });
    }
    let manifest = Manifest {
        seed: cfg.seed,
        tdc_resolution_ps: cfg.detectors.signal.tdc_resolution_ps,
        entries,
    };
    write_atomic(&out.join(run::CONFIG), cfg.to_json().as_bytes())?;
    write_json(&out.join(run::MANIFEST), &manifest)?;
    log::info!("simulated {} settings into {}", manifest.entries.len(), out.display());
    Ok(manifest)
}
