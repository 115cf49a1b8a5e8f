//! Source imperfection model and pump-power bookkeeping.
//!
//! Power is carried in nW everywhere; the only conversion to mW happens in
//! [`SourceParams::pair_rate`].

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarization::{
    concurrence, fidelity_to_pure, joint_probability, purity, DensityMatrix, Mat4, Projector,
    PureState, C64,
};

/// Reference concurrence; calibration target for the white noise.
pub const TARGET_CONCURRENCE: f64 = 0.905;
/// Reference purity; reported as a residual after calibration.
pub const TARGET_PURITY: f64 = 0.919;
/// Reference fidelity to the singlet; calibration target for the phase error.
pub const TARGET_FIDELITY: f64 = 0.939;
/// Detected pairs per second per mW of pump.
pub const DEFAULT_PAIR_RATE_PER_MW: f64 = 1600.0;

const NW_PER_MW: f64 = 1e6;

/// Scalar model of the two-photon source.
///
/// `pair_rate_per_mw` counts pairs that reach the detectors, so collection
/// and detection losses are folded in; the detector efficiencies then model
/// additional loss on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceParams {
    /// Pairs s⁻¹ mW⁻¹.
    pub pair_rate_per_mw: f64,
    /// Deviation of the HV/VH relative phase from π, radians.
    pub phase_error: f64,
    /// Fraction of HV/VH coherence destroyed, in `[0, 1]`.
    pub dephasing: f64,
    /// Admixture of `I/4`, in `[0, 1]`.
    pub white_noise: f64,
    /// Weight skew between `|HV⟩` and `|VH⟩`, in `[-1, 1]`.
    pub amplitude_imbalance: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams::ideal(DEFAULT_PAIR_RATE_PER_MW)
    }
}

impl SourceParams {
    pub fn ideal(pair_rate_per_mw: f64) -> Self {
        SourceParams {
            pair_rate_per_mw,
            phase_error: 0.0,
            dephasing: 0.0,
            white_noise: 0.0,
            amplitude_imbalance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if !(p.pair_rate_per_mw.is_finite() && p.pair_rate_per_mw >= 0.0) {
            return Err(Error::invalid("pair_rate_per_mw must be finite and >= 0"));
        }
        if !p.phase_error.is_finite() {
            return Err(Error::invalid("phase_error must be finite"));
        }
        if !(0.0..=1.0).contains(&p.dephasing) {
            return Err(Error::invalid("dephasing must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&p.white_noise) {
            return Err(Error::invalid("white_noise must lie in [0, 1]"));
        }
        if !(-1.0..=1.0).contains(&p.amplitude_imbalance) {
            return Err(Error::invalid("amplitude_imbalance must lie in [-1, 1]"));
        }
        Ok(())
    }

    /// Pair emission rate in s⁻¹ at `power_nw`.
    pub fn pair_rate(&self, power_nw: f64) -> f64 {
        self.pair_rate_per_mw * power_nw / NW_PER_MW
    }
}

/// Two-photon state emitted by a source with the given imperfections.
///
/// `ρ = (1−w)·ρ_coh + w·I/4`, where `ρ_coh` is the projector onto
/// `√((1+ε)/2)|HV⟩ + e^{i(π+δ)}√((1−ε)/2)|VH⟩` with its HV/VH coherence scaled
/// by `1−λ`.
pub fn build_state(params: &SourceParams) -> Result<DensityMatrix> {
    params.validate()?;
    let eps = params.amplitude_imbalance;
    let a = ((1.0 + eps) / 2.0).sqrt();
    let b = C64::from_polar(((1.0 - eps) / 2.0).sqrt(), PI + params.phase_error);
    let z = C64::new(0.0, 0.0);
    let psi = nalgebra::Vector4::new(z, C64::new(a, 0.0), b, z);
    let mut coh: Mat4 = psi * psi.adjoint();
    let keep = C64::new(1.0 - params.dephasing, 0.0);
    coh[(1, 2)] *= keep;
    coh[(2, 1)] *= keep;
    let w = params.white_noise;
    let m = coh * C64::new(1.0 - w, 0.0) + Matrix4::identity() * C64::new(w / 4.0, 0.0);
    DensityMatrix::new(m)
}

/// `N̄ = rate·(P/10⁶)·T·η_s·η_i·Tr(ρ Π_s⊗Π_i)` with P in nW.
#[allow(clippy::too_many_arguments)]
pub fn expected_coincidences(
    rho: &DensityMatrix,
    signal: &Projector,
    idler: &Projector,
    params: &SourceParams,
    power_nw: f64,
    duration_s: f64,
    eta_s: f64,
    eta_i: f64,
) -> Result<f64> {
    if !(power_nw.is_finite() && power_nw >= 0.0) {
        return Err(Error::invalid("pump power must be >= 0"));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid("duration must be > 0"));
    }
    for eta in [eta_s, eta_i] {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(format!("efficiency {eta} outside (0, 1]")));
        }
    }
    Ok(params.pair_rate(power_nw) * duration_s * eta_s * eta_i * joint_probability(rho, signal, idler))
}

// ---------------------------------------------------------------------------
// Calibration against reference figures of merit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub concurrence: f64,
    pub purity: f64,
    pub fidelity: f64,
}

impl Metrics {
    pub fn of(rho: &DensityMatrix) -> Self {
        Metrics {
            concurrence: concurrence(rho),
            purity: purity(rho),
            fidelity: fidelity_to_pure(rho, &PureState::singlet()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub params: SourceParams,
    pub achieved: Metrics,
    /// `achieved − target` for each metric.
    pub residual: Metrics,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) and f(hi) bracket a root; 200 halvings exhaust f64 resolution
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// White-noise admixture giving `target` concurrence for an otherwise ideal
/// source.
pub fn white_noise_for_concurrence(target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::invalid("target concurrence must lie in [0, 1]"));
    }
    let c_of = |w: f64| {
        let p = SourceParams {
            white_noise: w,
            ..SourceParams::ideal(0.0)
        };
        concurrence(&build_state(&p).expect("valid params")) - target
    };
    if target == 0.0 {
        return Ok(2.0 / 3.0);
    }
    Ok(bisect(0.0, 2.0 / 3.0, c_of))
}

/// Fits the white noise to the concurrence target and then the phase error to
/// the fidelity target. Purity is not fitted; its mismatch shows up in
/// [`Calibration::residual`].
pub fn calibrate(target_c: f64, target_f: f64, pair_rate_per_mw: f64) -> Result<Calibration> {
    let w = white_noise_for_concurrence(target_c)?;
    let with_phase = |delta: f64| SourceParams {
        pair_rate_per_mw,
        phase_error: delta,
        white_noise: w,
        ..SourceParams::ideal(pair_rate_per_mw)
    };
    let fid = |delta: f64| Metrics::of(&build_state(&with_phase(delta)).expect("valid")).fidelity;
    let delta = if fid(0.0) <= target_f {
        0.0
    } else {
        bisect(0.0, PI, |d| fid(d) - target_f)
    };
    let params = with_phase(delta);
    let achieved = Metrics::of(&build_state(&params)?);
    Ok(Calibration {
        params,
        achieved,
        residual: Metrics {
            concurrence: achieved.concurrence - target_c,
            purity: achieved.purity - TARGET_PURITY,
            fidelity: achieved.fidelity - target_f,
        },
    })
}

/// Source calibrated to the reference concurrence and fidelity.
pub fn reference_calibration(pair_rate_per_mw: f64) -> Calibration {
    calibrate(TARGET_CONCURRENCE, TARGET_FIDELITY, pair_rate_per_mw).expect("targets are valid")
}

// ---------------------------------------------------------------------------
// Pump power profile
// ---------------------------------------------------------------------------

/// Piecewise-linear pump power trace, `(time s, power nW)`.
///
/// A single sample denotes a constant power valid at all times.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpProfile {
    samples: Vec<(f64, f64)>,
}

impl PumpProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("pump profile needs at least one sample"));
        }
        for (k, &(t, p)) in samples.iter().enumerate() {
            if !t.is_finite() || !p.is_finite() {
                return Err(Error::invalid(format!("pump sample {k} is not finite")));
            }
            if p < 0.0 {
                return Err(Error::invalid(format!("pump sample {k} has negative power {p}")));
            }
            if k > 0 && t <= samples[k - 1].0 {
                return Err(Error::invalid(format!("pump sample {k}: times must strictly increase")));
            }
        }
        Ok(PumpProfile { samples })
    }

    pub fn constant(power_nw: f64) -> Result<Self> {
        Self::new(vec![(0.0, power_nw)])
    }

    /// Synthetic clear-sky day: zero at sunrise and sunset, `peak_nw` at solar
    /// noon, sampled every `step_s`.
    pub fn clear_sky_day(sunrise_s: f64, sunset_s: f64, peak_nw: f64, step_s: f64) -> Result<Self> {
        if !(sunset_s > sunrise_s && step_s > 0.0 && peak_nw >= 0.0) {
            return Err(Error::invalid("clear-sky profile needs sunset > sunrise, step > 0, peak >= 0"));
        }
        let n = ((sunset_s - sunrise_s) / step_s).ceil() as usize;
        let samples = (0..=n)
            .map(|k| {
                let t = (sunrise_s + k as f64 * step_s).min(sunset_s);
                let x = (t - sunrise_s) / (sunset_s - sunrise_s);
                (t, peak_nw * (PI * x).sin().max(0.0).powf(1.5))
            })
            .collect::<Vec<_>>();
        let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(samples.len());
        for s in samples {
            if dedup.last().is_none_or(|l| s.0 > l.0) {
                dedup.push(s);
            }
        }
        Self::new(dedup)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn is_constant(&self) -> bool {
        self.samples.len() == 1
    }

    /// `(first, last)` sample time; unbounded for a constant profile.
    pub fn domain(&self) -> (f64, f64) {
        if self.is_constant() {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            (self.samples[0].0, self.samples[self.samples.len() - 1].0)
        }
    }

    /// Interpolated power; held at the end values outside the domain.
    pub fn power_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        if t <= s[0].0 {
            return s[0].1;
        }
        let last = s[s.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = s.partition_point(|&(ts, _)| ts <= t);
        let (t0, p0) = s[k - 1];
        let (t1, p1) = s[k];
        p0 + (p1 - p0) * (t - t0) / (t1 - t0)
    }

    /// Largest interpolated power on `[t0, t1]`.
    pub fn max_power(&self, t0: f64, t1: f64) -> f64 {
        self.samples
            .iter()
            .filter(|(t, _)| *t > t0 && *t < t1)
            .map(|(_, p)| *p)
            .fold(self.power_at(t0).max(self.power_at(t1)), f64::max)
    }

    /// Loads the `time_s,power_nw` CSV format.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let csv_err = |line: u64, message: String| Error::Csv {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => csv_err(1, format!("{other:?}")),
            })?;
        let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != ["time_s", "power_nw"] {
            return Err(csv_err(1, "expected header \"time_s,power_nw\"".into()));
        }
        let mut samples: Vec<(f64, f64)> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                csv_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize, name: &str| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("");
                let v: f64 = raw
                    .parse()
                    .map_err(|_| csv_err(line, format!("{name}: cannot parse {raw:?}")))?;
                if v.is_nan() {
                    return Err(csv_err(line, format!("{name} is NaN")));
                }
                Ok(v)
            };
            let t = field(0, "time_s")?;
            let p = field(1, "power_nw")?;
            if p < 0.0 {
                return Err(csv_err(line, format!("power_nw is negative ({p})")));
            }
            if let Some(&(prev, _)) = samples.last() {
                if t <= prev {
                    return Err(csv_err(line, format!("time_s {t} does not increase")));
                }
            }
            samples.push((t, p));
        }
        Self::new(samples).map_err(|e| csv_err(0, e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("time_s,power_nw\n");
        for (t, p) in &self.samples {
            s.push_str(&format!("{t},{p}\n"));
        }
        s
    }
}

/// Time-weighted mean of the interpolated power over `[t0, t1]` intersected
/// with the profile domain.
pub fn mean_power(profile: &PumpProfile, t0: f64, t1: f64) -> Result<f64> {
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(Error::invalid(format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    if profile.is_constant() {
        return Ok(profile.samples[0].1);
    }
    let (d0, d1) = profile.domain();
    let a = t0.max(d0);
    let b = t1.min(d1);
    if b <= a {
        return Err(Error::OutOfDomain(format!(
            "[{t0}, {t1}] does not overlap the pump profile [{d0}, {d1}]"
        )));
    }
    let mut knots = vec![a];
    knots.extend(profile.samples.iter().map(|s| s.0).filter(|&t| t > a && t < b));
    knots.push(b);
    let integral: f64 = knots
        .windows(2)
        .map(|w| 0.5 * (profile.power_at(w[0]) + profile.power_at(w[1])) * (w[1] - w[0]))
        .sum();
    Ok(integral / (b - a))
}
