//! Event-level simulation of one or more acquisitions.
//!
//! Pairs are emitted as an inhomogeneous Poisson process (thinning against
//! the peak pump power of the window). Each pair gets one of the four joint
//! pass/block outcomes from the Born probabilities, independent detector
//! efficiency draws, channel delay plus Gaussian jitter, and is finally
//! rounded onto the TDC grid. Dark counts are merged per channel.
//!
//! Random streams are keyed by `(seed, setting index)` with substream 0 for
//! pairs and 1/2 for signal/idler dark counts, so the output of each setting
//! does not depend on how settings are scheduled.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use super::{AcquisitionPlan, Channel, DetectorParams, TimeTagStream};
use crate::error::{Error, Result};
use crate::polarization::{joint_probability, DensityMatrix, JointSetting};
use crate::rng::{keyed_rng, streams};
use crate::source::{mean_power, PumpProfile, SourceParams};

const PS_PER_S: f64 = 1e12;

/// Signal and idler streams of one joint setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingStreams {
    pub setting: JointSetting,
    pub start_time_s: f64,
    pub duration_s: f64,
    pub mean_power_nw: f64,
    /// Pairs emitted by the source, before analyzers and detectors.
    pub emitted_pairs: u64,
    pub signal: TimeTagStream,
    pub idler: TimeTagStream,
}

fn snap(t_ps: f64, res: u16) -> Option<u64> {
    let step = f64::from(res);
    let idx = (t_ps / step).round();
    (idx >= 0.0).then(|| idx as u64 * u64::from(res))
}

fn dark_counts(rate: f64, duration_s: f64, res: u16, seed: u64, index: u64, stream: u64, out: &mut Vec<u64>) {
    if rate <= 0.0 {
        return;
    }
    let mut rng = keyed_rng(seed, index, stream);
    let gap = Exp::new(rate).expect("rate > 0");
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= duration_s {
            break;
        }
        if let Some(ts) = snap(t * PS_PER_S, res) {
            out.push(ts);
        }
    }
}

/// Simulates the acquisition of setting number `index` of a plan.
#[allow(clippy::too_many_arguments)]
pub fn simulate_setting(
    rho: &DensityMatrix,
    source: &SourceParams,
    profile: &PumpProfile,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    setting: JointSetting,
    start_time_s: f64,
    duration_s: f64,
    seed: u64,
    index: u64,
) -> Result<SettingStreams> {
    source.validate()?;
    det_s.validate()?;
    det_i.validate()?;
    if det_s.tdc_resolution_ps != det_i.tdc_resolution_ps {
        return Err(Error::invalid("signal and idler must share one TDC resolution"));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid("duration must be > 0"));
    }
    let res = det_s.tdc_resolution_ps;
    let (ps, pi) = setting.projectors()?;
    let (qs, qi) = (ps.orthogonal(), pi.orthogonal());
    // joint outcome probabilities: (pass,pass), (pass,block), (block,pass), (block,block)
    let probs = [
        joint_probability(rho, &ps, &pi),
        joint_probability(rho, &ps, &qi),
        joint_probability(rho, &qs, &pi),
        joint_probability(rho, &qs, &qi),
    ];
    let total: f64 = probs.iter().sum();
    let cdf = [probs[0] / total, (probs[0] + probs[1]) / total, (probs[0] + probs[1] + probs[2]) / total];

    let t_end = start_time_s + duration_s;
    let mean_power_nw = mean_power(profile, start_time_s, t_end)?;
    let lam_max = source.pair_rate(profile.max_power(start_time_s, t_end));

    let mut sig: Vec<u64> = Vec::new();
    let mut idl: Vec<u64> = Vec::new();
    let mut emitted = 0u64;
    if lam_max > 0.0 {
        let mut rng = keyed_rng(seed, index, streams::PAIRS);
        let gap = Exp::new(lam_max).expect("rate > 0");
        let constant = profile.is_constant();
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= duration_s {
                break;
            }
            let accept: f64 = rng.random();
            if !constant && accept * lam_max >= source.pair_rate(profile.power_at(start_time_s + t)) {
                continue;
            }
            emitted += 1;
            let u: f64 = rng.random();
            let (pass_s, pass_i) = if u < cdf[0] {
                (true, true)
            } else if u < cdf[1] {
                (true, false)
            } else if u < cdf[2] {
                (false, true)
            } else {
                (false, false)
            };
            let click_s = pass_s && rng.random::<f64>() < det_s.efficiency;
            let click_i = pass_i && rng.random::<f64>() < det_i.efficiency;
            let js: f64 = rng.sample(StandardNormal);
            let ji: f64 = rng.sample(StandardNormal);
            let t_ps = t * PS_PER_S;
            if click_s {
                if let Some(ts) = snap(t_ps + det_s.channel_delay_ps + det_s.jitter_sigma_ps * js, res) {
                    sig.push(ts);
                }
            }
            if click_i {
                if let Some(ts) = snap(t_ps + det_i.channel_delay_ps + det_i.jitter_sigma_ps * ji, res) {
                    idl.push(ts);
                }
            }
        }
    }
    dark_counts(det_s.dark_rate, duration_s, res, seed, index, streams::SIGNAL_DARK, &mut sig);
    dark_counts(det_i.dark_rate, duration_s, res, seed, index, streams::IDLER_DARK, &mut idl);

    Ok(SettingStreams {
        setting,
        start_time_s,
        duration_s,
        mean_power_nw,
        emitted_pairs: emitted,
        signal: TimeTagStream::from_timestamps(Channel::Signal, res, sig)?,
        idler: TimeTagStream::from_timestamps(Channel::Idler, res, idl)?,
    })
}

/// Simulates every setting of `plan`; settings run concurrently.
pub fn simulate_acquisition(
    rho: &DensityMatrix,
    source: &SourceParams,
    profile: &PumpProfile,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    plan: &AcquisitionPlan,
) -> Result<Vec<SettingStreams>> {
    plan.validate()?;
    plan.settings
        .par_iter()
        .zip(plan.start_times_s.par_iter())
        .enumerate()
        .map(|(k, (setting, &start))| {
            simulate_setting(rho, source, profile, det_s, det_i, *setting, start, plan.duration_s, plan.rng_seed, k as u64)
        })
        .collect()
}
