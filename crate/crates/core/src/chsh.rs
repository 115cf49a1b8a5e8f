//! Polarization correlation functions and the CHSH parameter.
//!
//! For analyzer angles `θs`, `θi` and their perpendicular complements
//! `θ⊥ = θ + 90°`,
//!
//! ```text
//! E(θs, θi) = (N(θs,θi) + N(θs⊥,θi⊥) − N(θs,θi⊥) − N(θs⊥,θi)) / ΣN
//! S = |E(θs,θi) − E(θs,θi′) + E(θs′,θi) + E(θs′,θi′)|
//! ```

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::CountRecord;
use crate::error::{Error, Result};
use crate::polarization::{joint_probability, linear_projector, Analyzer, DensityMatrix, JointSetting};
use crate::rng::{keyed_rng, streams};
use crate::stats::mean_std;
use crate::tomography::ValueStd;

/// Angle tolerance, degrees, when matching count records to settings.
pub const ANGLE_TOL_DEG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChshSettings {
    pub theta_s: f64,
    pub theta_s_prime: f64,
    pub theta_i: f64,
    pub theta_i_prime: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        ChshSettings {
            theta_s: 0.0,
            theta_s_prime: 45.0,
            theta_i: 22.5,
            theta_i_prime: 67.5,
        }
    }
}

impl ChshSettings {
    pub fn validate(&self) -> Result<()> {
        if [self.theta_s, self.theta_s_prime, self.theta_i, self.theta_i_prime]
            .iter()
            .all(|t| t.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid("CHSH angles must be finite"))
        }
    }

    /// The four `(θs, θi)` pairs in the order they enter S.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.theta_s, self.theta_i),
            (self.theta_s, self.theta_i_prime),
            (self.theta_s_prime, self.theta_i),
            (self.theta_s_prime, self.theta_i_prime),
        ]
    }

    /// The 16 linear settings needed: for each pair, `(θs,θi)`, `(θs⊥,θi⊥)`,
    /// `(θs,θi⊥)`, `(θs⊥,θi)`.
    pub fn settings_16(&self) -> Vec<JointSetting> {
        self.pairs()
            .iter()
            .flat_map(|&(s, i)| quad(s, i))
            .map(|(s, i)| JointSetting::new(Analyzer::Linear(s), Analyzer::Linear(i)))
            .collect()
    }
}

fn quad(s: f64, i: f64) -> [(f64, f64); 4] {
    [(s, i), (s + 90.0, i + 90.0), (s, i + 90.0), (s + 90.0, i)]
}

fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(180.0);
    d < ANGLE_TOL_DEG || 180.0 - d < ANGLE_TOL_DEG
}

fn analyzer_matches(a: &Analyzer, theta: f64) -> bool {
    a.linear_angle().is_some_and(|t| same_angle(t, theta))
}

/// A correlation value with its setting pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub theta_s: f64,
    pub theta_i: f64,
    pub value: f64,
    pub std: f64,
}

/// E and its first-order Poisson standard deviation from four counts
/// `(N(θs,θi), N(θs⊥,θi⊥), N(θs,θi⊥), N(θs⊥,θi))`, each with variance
/// `max(N, 1)`.
pub fn correlation_e(n: [f64; 4]) -> Result<ValueStd> {
    let var = n.map(|x| x.max(1.0));
    correlation_e_with_variance(n, var)
}

/// As [`correlation_e`] with explicit count variances.
pub fn correlation_e_with_variance(n: [f64; 4], var: [f64; 4]) -> Result<ValueStd> {
    if n.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::precondition("counts must be finite and non-negative"));
    }
    let a = n[0] + n[1];
    let b = n[2] + n[3];
    let total = a + b;
    if total <= 0.0 {
        return Err(Error::insufficient("correlation needs a non-zero total count"));
    }
    let value = (a - b) / total;
    // ∂E/∂N₁,₂ = 2b/T², ∂E/∂N₃,₄ = −2a/T²
    let da = 2.0 * b / (total * total);
    let db = -2.0 * a / (total * total);
    let variance = da * da * (var[0] + var[1]) + db * db * (var[2] + var[3]);
    Ok(ValueStd {
        value,
        std: variance.sqrt(),
    })
}

/// `(S, std(S), signed combination)` from the four correlations in
/// [`ChshSettings::pairs`] order.
pub fn chsh_s(e: [ValueStd; 4]) -> (f64, f64, f64) {
    let signed = e[0].value - e[1].value + e[2].value + e[3].value;
    let std = e.iter().map(|x| x.std * x.std).sum::<f64>().sqrt();
    (signed.abs(), std, signed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub correlations: [Correlation; 4],
    pub s: f64,
    /// First-order propagation of Poisson count noise.
    pub s_std: f64,
    /// `(S − 2)/std(S)`; absent when `std(S)` is zero.
    pub violation_sigmas: Option<f64>,
    pub s_signed: f64,
}

impl ChshResult {
    /// Infinite-statistics result for a state: exact correlations, zero
    /// uncertainty.
    pub fn exact(rho: &DensityMatrix, settings: ChshSettings) -> Result<Self> {
        settings.validate()?;
        let mut e = [ValueStd { value: 0.0, std: 0.0 }; 4];
        for (o, (s, i)) in e.iter_mut().zip(settings.pairs()) {
            o.value = exact_correlation(rho, s, i)?;
        }
        Ok(Self::from_correlations(settings, e))
    }

    fn from_correlations(settings: ChshSettings, e: [ValueStd; 4]) -> Self {
        let (s, s_std, s_signed) = chsh_s(e);
        log::debug!("signed CHSH combination {s_signed}");
        let pairs = settings.pairs();
        let correlations = std::array::from_fn(|k| Correlation {
            theta_s: pairs[k].0,
            theta_i: pairs[k].1,
            value: e[k].value,
            std: e[k].std,
        });
        ChshResult {
            settings,
            correlations,
            s,
            s_std,
            violation_sigmas: (s_std > 0.0).then(|| (s - 2.0) / s_std),
            s_signed,
        }
    }
}

/// The 16 count records a CHSH evaluation needs, in
/// [`ChshSettings::settings_16`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChshCounts {
    pub settings: ChshSettings,
    pub records: Vec<CountRecord>,
}

impl ChshCounts {
    /// Matches records by analyzer angle (modulo 180°, within
    /// [`ANGLE_TOL_DEG`]); named linear analyzers count as their angle.
    pub fn from_records(records: &[CountRecord], settings: ChshSettings) -> Result<Self> {
        settings.validate()?;
        let mut picked = Vec::with_capacity(16);
        let mut missing = Vec::new();
        for want in settings.settings_16() {
            let (ts, ti) = (want.signal.linear_angle().unwrap_or(f64::NAN), want.idler.linear_angle().unwrap_or(f64::NAN));
            let hit = records
                .iter()
                .find(|r| analyzer_matches(&r.setting.signal, ts) && analyzer_matches(&r.setting.idler, ti));
            match hit {
                Some(r) => picked.push(*r),
                None => missing.push(want.to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::insufficient(format!("count table lacks CHSH settings: {}", missing.join(", "))));
        }
        Ok(ChshCounts {
            settings,
            records: picked,
        })
    }

    /// Noise-free counts `scale · p` for a state.
    pub fn exact(rho: &DensityMatrix, settings: ChshSettings, scale: f64) -> Result<Self> {
        let records = settings
            .settings_16()
            .into_iter()
            .map(|setting| {
                let (ps, pi) = setting.projectors()?;
                let n = scale * joint_probability(rho, &ps, &pi);
                Ok(CountRecord {
                    setting,
                    raw: n.round() as u64,
                    accidental: 0.0,
                    duration_s: 0.0,
                    mean_power_nw: crate::correlator::REFERENCE_POWER_NW,
                    normalized: n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChshCounts { settings, records })
    }

    fn normalized(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.normalized).collect()
    }

    /// Variance of each normalised count: raw Poisson variance (at least 1)
    /// times the squared normalisation factor.
    fn variances(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| (r.raw as f64).max(1.0) * r.scale().powi(2))
            .collect()
    }

    pub fn evaluate(&self) -> Result<ChshResult> {
        evaluate_counts(self.settings, &self.normalized(), &self.variances())
    }

    /// Standard deviation of S over Poisson resamplings of the raw counts.
    pub fn monte_carlo_std(&self, replicas: usize, seed: u64) -> Result<f64> {
        if replicas < 2 {
            return Err(Error::invalid("Monte Carlo needs at least 2 replicas"));
        }
        let ss: Vec<f64> = (0..replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = keyed_rng(seed, r as u64, streams::MONTE_CARLO);
                let counts: Vec<f64> = self
                    .records
                    .iter()
                    .map(|rec| {
                        if rec.raw == 0 {
                            return 0.0;
                        }
                        let k: f64 = Poisson::new(rec.raw as f64).expect("mean > 0").sample(&mut rng);
                        k * rec.scale()
                    })
                    .collect();
                let e = e_values(&counts, &[1.0; 16])?;
                Ok(chsh_s(e).0)
            })
            .collect::<Result<_>>()?;
        Ok(mean_std(&ss).1)
    }
}

fn e_values(counts: &[f64], var: &[f64]) -> Result<[ValueStd; 4]> {
    let mut out = [ValueStd { value: 0.0, std: 0.0 }; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let n = std::array::from_fn(|j| counts[4 * k + j]);
        let v = std::array::from_fn(|j| var[4 * k + j]);
        *o = correlation_e_with_variance(n, v)?;
    }
    Ok(out)
}

fn evaluate_counts(settings: ChshSettings, counts: &[f64], var: &[f64]) -> Result<ChshResult> {
    Ok(ChshResult::from_correlations(settings, e_values(counts, var)?))
}

/// Exact correlation `E(θs, θi)` of a state.
pub fn exact_correlation(rho: &DensityMatrix, theta_s: f64, theta_i: f64) -> Result<f64> {
    let mut p = [0.0; 4];
    for (k, (s, i)) in quad(theta_s, theta_i).into_iter().enumerate() {
        p[k] = joint_probability(rho, &linear_projector(s)?, &linear_projector(i)?);
    }
    let total: f64 = p.iter().sum();
    Ok((p[0] + p[1] - p[2] - p[3]) / total)
}

/// S of a state at infinite statistics (`std(S) = 0`).
pub fn exact_s(rho: &DensityMatrix, settings: &ChshSettings) -> Result<f64> {
    settings.validate()?;
    let e: Vec<f64> = settings
        .pairs()
        .iter()
        .map(|&(s, i)| exact_correlation(rho, s, i))
        .collect::<Result<_>>()?;
    Ok((e[0] - e[1] + e[2] + e[3]).abs())
}

/// `Tr(ρ Π(θs) ⊗ Π(θi))` along a sweep of idler angles.
pub fn predict_correlation_curve(rho: &DensityMatrix, theta_s: f64, sweep: &[f64]) -> Result<Vec<f64>> {
    let ps = linear_projector(theta_s)?;
    sweep
        .iter()
        .map(|&t| Ok(joint_probability(rho, &ps, &linear_projector(t)?)))
        .collect()
}

/// Visibility `(max − min)/(max + min)` of the idler fringe at fixed `θs`.
///
/// The coincidence probability is `a + b cos 2θ + c sin 2θ` in the idler
/// angle, so the extremes are `a ± √(b² + c²)`.
pub fn fringe_visibility(rho: &DensityMatrix, theta_s: f64) -> Result<f64> {
    let p = predict_correlation_curve(rho, theta_s, &[0.0, 45.0, 90.0, 135.0])?;
    let a = 0.5 * (p[0] + p[2]);
    let b = 0.5 * (p[0] - p[2]);
    let c = 0.5 * (p[1] - p[3]);
    if a <= 0.0 {
        return Err(Error::insufficient("fringe has zero mean"));
    }
    Ok((b * b + c * c).sqrt() / a)
}

/// One row of a correlation-curve table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub theta_i_deg: f64,
    pub p_pred: f64,
    pub count_norm: Option<f64>,
    pub count_std: Option<f64>,
}

/// Predicted fringe at `theta_s` on a regular grid of `step_deg` over
/// `[0, 180]`, merged with the measured idler angles and their normalised
/// counts.
pub fn correlation_curve(
    rho: &DensityMatrix,
    records: &[CountRecord],
    theta_s: f64,
    step_deg: f64,
) -> Result<Vec<CurvePoint>> {
    if !(step_deg.is_finite() && step_deg > 0.0) {
        return Err(Error::invalid("curve step must be > 0"));
    }
    let measured: Vec<&CountRecord> = records
        .iter()
        .filter(|r| analyzer_matches(&r.setting.signal, theta_s) && r.setting.idler.linear_angle().is_some())
        .collect();
    let mut angles: Vec<f64> = (0..)
        .map(|k| k as f64 * step_deg)
        .take_while(|t| *t <= 180.0 + 1e-9)
        .collect();
    for r in &measured {
        let t = r.setting.idler.linear_angle().expect("filtered").rem_euclid(180.0);
        if !angles.iter().any(|a| same_angle(*a, t) && (a - t).abs() < 90.0) {
            angles.push(t);
        }
    }
    angles.sort_by(f64::total_cmp);
    let pred = predict_correlation_curve(rho, theta_s, &angles)?;
    Ok(angles
        .iter()
        .zip(pred)
        .map(|(&t, p)| {
            let hit = measured
                .iter()
                .find(|r| r.setting.idler.linear_angle().is_some_and(|a| (a.rem_euclid(180.0) - t).abs() < ANGLE_TOL_DEG));
            CurvePoint {
                theta_i_deg: t,
                p_pred: p,
                count_norm: hit.map(|r| r.normalized),
                count_std: hit.map(|r| (r.raw as f64).max(1.0).sqrt() * r.scale()),
            }
        })
        .collect())
}

/// Mean S over independent runs with the run-to-run sample standard
/// deviation.
pub fn run_spread(results: &[ChshResult]) -> Result<ValueStd> {
    if results.len() < 2 {
        return Err(Error::invalid("run spread needs at least two runs"));
    }
    let (value, std) = mean_std(&results.iter().map(|r| r.s).collect::<Vec<_>>());
    Ok(ValueStd { value, std })
}
