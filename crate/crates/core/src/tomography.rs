//! Two-photon state reconstruction from 16 projective coincidence counts.
//!
//! The measurement set is the product basis `{H, V, D, R} ⊗ {H, V, D, R}`.
//! Reconstruction starts from a linear inversion in the Pauli operator basis,
//! clipped to the positive cone, and is refined by maximising the Poisson
//! likelihood over the Cholesky-type parametrisation `ρ = T†T / Tr(T†T)` with
//! `T` lower triangular.
//!
//! With the total scale profiled out analytically, the log-likelihood in
//! terms of `A = T†T` and `p_k = Tr(A Π_k)` is
//!
//! ```text
//! L(T) = Σ_k n_k ln p_k − N ln Σ_k p_k,      N = Σ_k n_k
//! ```
//!
//! which is invariant under rescaling of `T`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::CountRecord;
use crate::error::{Error, Result};
use crate::polarization::{
    concurrence, fidelity_to_pure, kron, kron_ket, purity, Analyzer, DensityMatrix, JointSetting, Ket4, Mat2, Mat4,
    Polarization, PureState, C64,
};
use crate::rng::{keyed_rng, streams};
use crate::stats::mean_std;

pub const BASIS_SET_ID: &str = "HVDR-product";
pub const CIRCULAR_CONVENTION: &str = "R = (H - iV)/sqrt(2)";
pub const DEFAULT_BOOTSTRAP: usize = 200;
pub const MAX_ITERATIONS: usize = 10_000;
pub const LIKELIHOOD_TOL: f64 = 1e-9;

/// Weight of the maximally mixed state blended into the initial guess so
/// that its Cholesky factor exists.
const INIT_MIX: f64 = 1e-4;

const SINGLE_BASIS: [Polarization; 4] = [Polarization::H, Polarization::V, Polarization::D, Polarization::R];

/// One joint projector `|a⟩⟨a| ⊗ |b⟩⟨b|`, kept as its product ket.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProjector {
    pub setting: JointSetting,
    pub ket: Ket4,
}

impl JointProjector {
    pub fn new(setting: JointSetting) -> Result<Self> {
        let (ps, pi) = setting.projectors()?;
        Ok(JointProjector {
            setting,
            ket: kron_ket(ps.ket(), pi.ket()),
        })
    }

    pub fn matrix(&self) -> Mat4 {
        self.ket * self.ket.adjoint()
    }
}

/// The 16 settings, signal-major: HH, HV, HD, HR, VH, …, RR.
pub fn basis_settings_16() -> Vec<JointSetting> {
    SINGLE_BASIS
        .iter()
        .flat_map(|&s| {
            SINGLE_BASIS
                .iter()
                .map(move |&i| JointSetting::new(Analyzer::Named(s), Analyzer::Named(i)))
        })
        .collect()
}

pub fn basis_set_16() -> Vec<JointProjector> {
    basis_settings_16()
        .into_iter()
        .map(|s| JointProjector::new(s).expect("named analyzers are valid"))
        .collect()
}

/// `G_kl = Tr(Π_k Π_l) = |⟨v_k|v_l⟩|²`.
pub fn gram_matrix(projectors: &[JointProjector]) -> DMatrix<f64> {
    let n = projectors.len();
    DMatrix::from_fn(n, n, |k, l| projectors[k].ket.dotc(&projectors[l].ket).norm_sqr())
}

/// Ratio of extreme singular values; infinite for a singular matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= max * 1e-14 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn pauli(k: usize) -> Mat2 {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match k {
        0 => Mat2::new(o, z, z, o),
        1 => Mat2::new(z, o, o, z),
        2 => Mat2::new(z, -i, i, z),
        _ => Mat2::new(o, z, z, -o),
    }
}

fn pauli_products() -> Vec<Mat4> {
    (0..16).map(|ab| kron(&pauli(ab / 4), &pauli(ab % 4))).collect()
}

// ---------------------------------------------------------------------------
// Input
// ---------------------------------------------------------------------------

/// Power-normalised counts for the 16 basis settings, in basis order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyInput {
    pub basis_set: String,
    pub records: Vec<CountRecord>,
}

fn same_analyzer(a: &Analyzer, b: &Analyzer) -> bool {
    match (a.projector(), b.projector()) {
        (Ok(pa), Ok(pb)) => pa.ket().dotc(pb.ket()).norm_sqr() > 1.0 - 1e-12,
        _ => false,
    }
}

impl TomographyInput {
    /// Picks the 16 basis settings out of a count table. Analyzers match by
    /// the state they project on, so `0`/`H` and `45`/`D` are interchangeable.
    pub fn from_records(records: &[CountRecord]) -> Result<Self> {
        let mut picked = Vec::with_capacity(16);
        let mut missing = Vec::new();
        for want in basis_settings_16() {
            let mut hits = records
                .iter()
                .filter(|r| same_analyzer(&r.setting.signal, &want.signal) && same_analyzer(&r.setting.idler, &want.idler));
            match (hits.next(), hits.next()) {
                (Some(r), None) => picked.push(*r),
                (Some(_), Some(_)) => {
                    return Err(Error::invalid(format!("setting {want} appears more than once")));
                }
                (None, _) => missing.push(want.to_string()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::insufficient(format!(
                "count table lacks tomography settings: {}",
                missing.join(", ")
            )));
        }
        Self::new(picked)
    }

    /// Records must already be in [`basis_settings_16`] order.
    pub fn new(records: Vec<CountRecord>) -> Result<Self> {
        if records.len() != 16 {
            return Err(Error::invalid(format!("tomography needs 16 records, got {}", records.len())));
        }
        for (r, want) in records.iter().zip(basis_settings_16()) {
            if !(same_analyzer(&r.setting.signal, &want.signal) && same_analyzer(&r.setting.idler, &want.idler)) {
                return Err(Error::invalid(format!("expected setting {want}, found {}", r.setting)));
            }
            if !(r.normalized.is_finite() && r.normalized >= 0.0) {
                return Err(Error::invalid(format!("negative or non-finite count for {}", r.setting)));
            }
        }
        Ok(TomographyInput {
            basis_set: BASIS_SET_ID.to_string(),
            records,
        })
    }

    /// Noise-free counts `scale · Tr(ρ Π_k)` at reference power.
    pub fn exact(rho: &DensityMatrix, scale: f64, duration_s: f64) -> Result<Self> {
        let records = basis_set_16()
            .into_iter()
            .map(|p| {
                let n = scale * p.ket.dotc(&(rho.matrix() * p.ket)).re.max(0.0);
                CountRecord {
                    setting: p.setting,
                    raw: n.round() as u64,
                    accidental: 0.0,
                    duration_s,
                    mean_power_nw: crate::correlator::REFERENCE_POWER_NW,
                    normalized: n,
                }
            })
            .collect();
        Self::new(records)
    }

    pub fn counts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.normalized).collect()
    }

    pub fn total(&self) -> f64 {
        self.records.iter().map(|r| r.normalized).sum()
    }
}

// ---------------------------------------------------------------------------
// Linear inversion
// ---------------------------------------------------------------------------

/// Hermitian `M` reproducing `counts_k / total_scale = Tr(M Π_k)` for an
/// arbitrary informationally complete projector set, trace-normalised.
pub fn invert_counts(projectors: &[JointProjector], counts: &[f64], total_scale: f64) -> Result<Mat4> {
    if projectors.len() != 16 || counts.len() != 16 {
        return Err(Error::invalid("linear inversion needs exactly 16 projectors and counts"));
    }
    if !(total_scale.is_finite() && total_scale > 0.0) {
        return Err(Error::invalid("total scale must be > 0"));
    }
    if !condition_number(&gram_matrix(projectors)).is_finite() {
        return Err(Error::DegenerateBasis("projector Gram matrix is singular".into()));
    }
    let paulis = pauli_products();
    // B_{k,ab} = Tr(Π_k σ_a⊗σ_b) / 4, so that Tr(M Π_k) = Σ_ab B_{k,ab} r_ab
    // for M = Σ_ab r_ab σ_a⊗σ_b / 4.
    let b = DMatrix::from_fn(16, 16, |k, ab| {
        let v = &projectors[k].ket;
        v.dotc(&(paulis[ab] * v)).re / 4.0
    });
    let rhs = DVector::from_iterator(16, counts.iter().map(|n| n / total_scale));
    let r = b
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateBasis("linear system is singular".into()))?;
    let trace = r[0];
    if trace.is_nan() || trace <= 0.0 {
        return Err(Error::insufficient("counts determine a matrix with non-positive trace"));
    }
    let mut m = Mat4::zeros();
    for (ab, p) in paulis.iter().enumerate() {
        m += p * C64::new(r[ab] / 4.0, 0.0);
    }
    m /= C64::new(trace, 0.0);
    Ok((m + m.adjoint()) * C64::new(0.5, 0.0))
}

/// Linear inversion of the 16-setting input.
pub fn linear_inversion(input: &TomographyInput, total_scale: f64) -> Result<Mat4> {
    invert_counts(&basis_set_16(), &input.counts(), total_scale)
}

/// Zeroes negative eigenvalues and renormalises the trace.
pub fn clip_to_psd(m: &Mat4) -> Option<DensityMatrix> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut out = Mat4::zeros();
    let mut tr = 0.0;
    for k in 0..4 {
        let lam = eig.eigenvalues[k].max(0.0);
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * C64::new(lam, 0.0);
        tr += lam;
    }
    if tr <= 0.0 {
        return None;
    }
    out /= C64::new(tr, 0.0);
    let out = (out + out.adjoint()) * C64::new(0.5, 0.0);
    DensityMatrix::new(out).ok()
}

// ---------------------------------------------------------------------------
// T-parametrisation
// ---------------------------------------------------------------------------

/// Position of the off-diagonal entries of `T`, in parameter order.
const LOWER: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// `x[0..4]` are the real diagonal, then (re, im) of each [`LOWER`] entry.
pub fn t_from_params(x: &[f64]) -> Mat4 {
    let mut t = Mat4::zeros();
    for i in 0..4 {
        t[(i, i)] = C64::new(x[i], 0.0);
    }
    for (k, &(i, j)) in LOWER.iter().enumerate() {
        t[(i, j)] = C64::new(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

/// A lower-triangular `T` with `T†T = ρ` for a positive definite `ρ`.
///
/// With `J` the exchange matrix, the Cholesky factor of `JρJ = LL†` gives
/// `T = J L† J`.
pub fn params_from_density(rho: &Mat4) -> Option<[f64; 16]> {
    let j = Mat4::from_fn(|r, c| if r + c == 3 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let l = (j * rho * j).cholesky()?.l();
    let t = j * l.adjoint() * j;
    let mut x = [0.0; 16];
    // make the diagonal real and non-negative; Cholesky already does, but the
    // imaginary parts can carry rounding noise
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (k, &(i, jj)) in LOWER.iter().enumerate() {
        x[4 + 2 * k] = t[(i, jj)].re;
        x[5 + 2 * k] = t[(i, jj)].im;
    }
    Some(x)
}

/// Profiled log-likelihood and its gradient for fixed projectors and counts.
pub struct Likelihood<'a> {
    kets: Vec<Ket4>,
    counts: &'a [f64],
    total: f64,
}

impl<'a> Likelihood<'a> {
    pub fn new(projectors: &[JointProjector], counts: &'a [f64]) -> Self {
        Likelihood {
            kets: projectors.iter().map(|p| p.ket).collect(),
            counts,
            total: counts.iter().sum(),
        }
    }

    fn probs(&self, t: &Mat4) -> Vec<f64> {
        self.kets.iter().map(|v| (t * v).norm_squared()).collect()
    }

    /// `Σ n_k ln p_k − N ln Σ p_k`; `−∞` if a counted outcome has `p_k = 0`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let t = t_from_params(x);
        let p = self.probs(&t);
        let ptot: f64 = p.iter().sum();
        if ptot <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut l = -self.total * ptot.ln();
        for (n, pk) in self.counts.iter().zip(&p) {
            if *n > 0.0 {
                if *pk <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                l += n * pk.ln();
            }
        }
        l
    }

    /// Analytic gradient with respect to the 16 parameters.
    pub fn gradient(&self, x: &[f64]) -> [f64; 16] {
        let t = t_from_params(x);
        let p = self.probs(&t);
        let ptot: f64 = p.iter().sum();
        // G T† = Σ_k w_k v_k (T v_k)†,  w_k = n_k/p_k − N/Σp
        let mut gt = Mat4::zeros();
        for ((v, n), pk) in self.kets.iter().zip(self.counts).zip(&p) {
            let mut w = -self.total / ptot;
            if *n > 0.0 {
                w += n / pk;
            }
            let tv = t * v;
            gt += (v * tv.adjoint()) * C64::new(w, 0.0);
        }
        let mut g = [0.0; 16];
        for i in 0..4 {
            g[i] = 2.0 * gt[(i, i)].re;
        }
        for (k, &(i, j)) in LOWER.iter().enumerate() {
            g[4 + 2 * k] = 2.0 * gt[(j, i)].re;
            g[5 + 2 * k] = -2.0 * gt[(j, i)].im;
        }
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= n);
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub rho: DensityMatrix,
    /// Poisson log-likelihood `Σ n_k ln μ_k − μ_k` (without `ln n_k!`).
    pub log_likelihood: f64,
    /// Fitted scale `s` with `μ_k = s Tr(ρ Π_k)`.
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Profiled log-likelihood after every iteration.
    pub trace: Vec<f64>,
}

/// Quasi-Newton ascent on the profiled likelihood.
///
/// Steps come from a BFGS inverse-Hessian estimate with Armijo backtracking,
/// so every accepted step increases the likelihood. When a step gains less
/// than [`LIKELIHOOD_TOL`], one plain gradient step is tried before
/// declaring convergence.
pub fn maximize_likelihood(projectors: &[JointProjector], counts: &[f64], init: &DensityMatrix) -> Result<MleFit> {
    if counts.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        return Err(Error::precondition("counts must be finite and non-negative"));
    }
    if counts.iter().sum::<f64>() <= 0.0 {
        return Err(Error::insufficient("all counts are zero"));
    }
    let like = Likelihood::new(projectors, counts);

    let mixed = DensityMatrix::mixture(&[(1.0 - INIT_MIX, init.clone()), (INIT_MIX, DensityMatrix::maximally_mixed())])?;
    let mut x = params_from_density(mixed.matrix()).ok_or_else(|| Error::precondition("initial state is not positive definite"))?;
    normalize(&mut x);

    let mut f = like.value(&x);
    if !f.is_finite() {
        return Err(Error::precondition("initial state gives zero probability to an observed outcome"));
    }
    let mut g = like.gradient(&x);
    let mut h = identity16();
    let mut fresh = true;
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if dot(&g, &g).sqrt() < 1e-12 {
            converged = true;
            break;
        }
        // ascent direction d = H g
        let mut d = mat_vec(&h, &g);
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope <= 0.0 {
            h = identity16();
            fresh = true;
            d = g;
            slope = dot(&g, &g);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-20 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let ft = like.value(&trial);
            if ft.is_finite() && ft >= f + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            if fresh {
                converged = true;
                break;
            }
            h = identity16();
            fresh = true;
            continue;
        };
        assert!(ft >= f, "log-likelihood decreased: {f} -> {ft}");
        let gain = ft - f;
        let mut xn = [0.0; 16];
        xn.copy_from_slice(&trial);
        let gn = like.gradient(&xn);

        // BFGS update for maximisation: s = Δx, y = −Δg
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 {
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        x = xn;
        g = gn;
        f = ft;
        trace.push(f);

        let norm = dot(&x, &x).sqrt();
        if (norm - 1.0).abs() > 0.5 {
            // likelihood is scale invariant; keep parameters O(1)
            normalize(&mut x);
            g = like.gradient(&x);
            h = identity16();
            fresh = true;
        }
        if gain < LIKELIHOOD_TOL {
            if fresh {
                converged = true;
                break;
            }
            h = identity16();
            fresh = true;
        }
    }

    let t = t_from_params(&x);
    let a = t.adjoint() * t;
    let tr = a.trace().re;
    let rho_m = a / C64::new(tr, 0.0);
    let rho_m = (rho_m + rho_m.adjoint()) * C64::new(0.5, 0.0);
    let rho = DensityMatrix::new(rho_m)?;

    let probs: Vec<f64> = projectors.iter().map(|p| p.ket.dotc(&(rho.matrix() * p.ket)).re.max(0.0)).collect();
    let n_tot: f64 = counts.iter().sum();
    let scale = n_tot / probs.iter().sum::<f64>();
    let log_likelihood = counts
        .iter()
        .zip(&probs)
        .map(|(n, p)| {
            let mu = scale * p;
            if *n > 0.0 {
                n * mu.ln() - mu
            } else {
                -mu
            }
        })
        .sum();

    Ok(MleFit {
        rho,
        log_likelihood,
        scale,
        iterations,
        converged,
        trace,
    })
}

type Mat16 = [[f64; 16]; 16];

fn identity16() -> Mat16 {
    let mut m = [[0.0; 16]; 16];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mat_vec(m: &Mat16, v: &[f64; 16]) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (o, row) in out.iter_mut().zip(m) {
        *o = dot(row, v);
    }
    out
}

fn bfgs_update(h: &mut Mat16, s: &[f64], y: &[f64], sy: f64) {
    // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ,  ρ = 1/(yᵀs)
    let r = 1.0 / sy;
    let mut hy = [0.0; 16];
    for (o, row) in hy.iter_mut().zip(h.iter()) {
        *o = dot(row, y);
    }
    let yhy = dot(y, &hy);
    for i in 0..16 {
        for j in 0..16 {
            h[i][j] += -r * (s[i] * hy[j] + hy[i] * s[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}

/// Maximum-likelihood state for the 16-setting input. Without `init` the
/// search starts from the PSD-clipped linear inversion.
pub fn mle_reconstruct(input: &TomographyInput, init: Option<&Mat4>) -> Result<MleFit> {
    let counts = input.counts();
    if counts.iter().sum::<f64>() <= 0.0 {
        return Err(Error::insufficient("all counts are zero"));
    }
    let start = match init {
        Some(m) => clip_to_psd(m),
        None => linear_inversion(input, input.total()).ok().and_then(|m| clip_to_psd(&m)),
    }
    .unwrap_or_else(DensityMatrix::maximally_mixed);
    maximize_likelihood(&basis_set_16(), &counts, &start)
}

// ---------------------------------------------------------------------------
// Uncertainties and results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueStd {
    pub value: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStds {
    pub concurrence: f64,
    pub purity: f64,
    pub fidelity: f64,
}

fn metrics(rho: &DensityMatrix) -> [f64; 3] {
    [concurrence(rho), purity(rho), fidelity_to_pure(rho, &PureState::singlet())]
}

/// Parametric bootstrap: every raw count is redrawn from a Poisson law with
/// the observed count as mean, carried through the record's power
/// normalisation, and the state is re-estimated. Replicas run in parallel,
/// each with its own keyed random stream.
pub fn bootstrap_uncertainty(input: &TomographyInput, n: usize, seed: u64) -> Result<MetricStds> {
    if n < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 replicas"));
    }
    let center = mle_reconstruct(input, None)?;
    let samples: Vec<[f64; 3]> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = keyed_rng(seed, r as u64, streams::BOOTSTRAP);
            let counts: Vec<f64> = input
                .records
                .iter()
                .map(|rec| {
                    if rec.raw == 0 {
                        return 0.0;
                    }
                    let k: f64 = Poisson::new(rec.raw as f64).expect("mean > 0").sample(&mut rng);
                    k * rec.normalized / rec.raw as f64
                })
                .collect();
            if counts.iter().sum::<f64>() <= 0.0 {
                return Err(Error::insufficient("bootstrap replica has no counts"));
            }
            let fit = maximize_likelihood(&basis_set_16(), &counts, &center.rho)?;
            Ok(metrics(&fit.rho))
        })
        .collect::<Result<_>>()?;
    let col = |i: usize| mean_std(&samples.iter().map(|m| m[i]).collect::<Vec<_>>()).1;
    Ok(MetricStds {
        concurrence: col(0),
        purity: col(1),
        fidelity: col(2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub basis_set: String,
    pub circular_convention: String,
    pub rho: DensityMatrix,
    pub concurrence: ValueStd,
    pub purity: ValueStd,
    pub fidelity: ValueStd,
    pub n_bootstrap: usize,
    pub bootstrap_seed: u64,
    pub log_likelihood: f64,
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Full reconstruction: MLE state, its metrics, and bootstrap errors.
pub fn reconstruct(input: &TomographyInput, n_bootstrap: usize, seed: u64) -> Result<TomographyResult> {
    let fit = mle_reconstruct(input, None)?;
    if !fit.converged {
        log::warn!("likelihood maximisation stopped after {} iterations without converging", fit.iterations);
    }
    let std = bootstrap_uncertainty(input, n_bootstrap, seed)?;
    let [c, p, f] = metrics(&fit.rho);
    Ok(TomographyResult {
        basis_set: input.basis_set.clone(),
        circular_convention: CIRCULAR_CONVENTION.to_string(),
        rho: fit.rho,
        concurrence: ValueStd { value: c, std: std.concurrence },
        purity: ValueStd { value: p, std: std.purity },
        fidelity: ValueStd { value: f, std: std.fidelity },
        n_bootstrap,
        bootstrap_seed: seed,
        log_likelihood: fit.log_likelihood,
        scale: fit.scale,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Several independent runs combined: metrics of the averaged matrix, with
/// the run-to-run sample standard deviation of each metric as spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub rho: DensityMatrix,
    pub concurrence: ValueStd,
    pub purity: ValueStd,
    pub fidelity: ValueStd,
}

pub fn aggregate_runs(results: &[TomographyResult]) -> Result<RunAggregate> {
    if results.len() < 2 {
        return Err(Error::invalid("aggregation needs at least two runs"));
    }
    let w = 1.0 / results.len() as f64;
    let rho = DensityMatrix::mixture(&results.iter().map(|r| (w, r.rho.clone())).collect::<Vec<_>>())?;
    let [c, p, f] = metrics(&rho);
    let spread = |get: fn(&TomographyResult) -> f64| mean_std(&results.iter().map(get).collect::<Vec<_>>()).1;
    Ok(RunAggregate {
        runs: results.len(),
        concurrence: ValueStd { value: c, std: spread(|r| r.concurrence.value) },
        purity: ValueStd { value: p, std: spread(|r| r.purity.value) },
        fidelity: ValueStd { value: f, std: spread(|r| r.fidelity.value) },
        rho,
    })
}
