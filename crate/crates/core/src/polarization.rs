//! Exact linear algebra on the two-photon polarization space.
//!
//! Two-photon vectors and operators use the product basis ordered
//! `(HH, HV, VH, VV)` with the signal photon as the left tensor factor.
//! This ordering is used everywhere, including serialization.
//!
//! Circular analyzers follow `|R⟩ = (|H⟩ − i|V⟩)/√2` and
//! `|L⟩ = (|H⟩ + i|V⟩)/√2`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Ket2 = Vector2<C64>;
pub type Ket4 = Vector4<C64>;

/// Normalisation tolerance for pure-state amplitudes.
pub const NORM_TOL: f64 = 1e-12;
/// Entrywise Hermiticity and trace tolerance for density matrices.
pub const DENSITY_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;

const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Kronecker product of two single-photon operators, signal on the left.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// Kronecker product of two single-photon kets.
pub fn kron_ket(a: &Ket2, b: &Ket2) -> Ket4 {
    Ket4::from_fn(|r, _| a[r / 2] * b[r % 2])
}

fn trace4(m: &Mat4) -> C64 {
    m[(0, 0)] + m[(1, 1)] + m[(2, 2)] + m[(3, 3)]
}

/// Eigenvalues of a Hermitian 4×4 matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat4) -> [f64; 4] {
    let eig = m.symmetric_eigen();
    let mut v = [0.0; 4];
    for (dst, src) in v.iter_mut().zip(eig.eigenvalues.iter()) {
        *dst = *src;
    }
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues below this are rounding noise of a unit-trace matrix and are
/// zeroed before taking square roots (√1e-17 would otherwise leak 3e-9).
const SQRT_FLOOR: f64 = 1e-14;

/// Square root of a positive semidefinite Hermitian matrix via its
/// eigendecomposition.
fn hermitian_sqrt(m: &Mat4) -> Mat4 {
    let eig = m.symmetric_eigen();
    let mut out = Mat4::zeros();
    for k in 0..4 {
        let mu = eig.eigenvalues[k];
        let lam = if mu > SQRT_FLOOR { mu.sqrt() } else { 0.0 };
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * c(lam, 0.0);
    }
    out
}

// ---------------------------------------------------------------------------
// Pure states
// ---------------------------------------------------------------------------

/// Normalised two-photon polarization ket over `(HH, HV, VH, VV)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amps: Ket4,
}

impl PureState {
    pub fn new(amplitudes: [C64; 4]) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("pure state amplitudes must be finite"));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!(
                "pure state is not normalised: sum |a|^2 = {norm}"
            )));
        }
        Ok(PureState {
            amps: Ket4::from_column_slice(&amplitudes),
        })
    }

    /// Normalises `amplitudes` before construction.
    pub fn normalized(amplitudes: [C64; 4]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("cannot normalise a zero or non-finite vector"));
        }
        Self::new(amplitudes.map(|a| a / norm))
    }

    /// `(|HV⟩ − |VH⟩)/√2`.
    pub fn singlet() -> Self {
        PureState {
            amps: Ket4::new(c(0.0, 0.0), c(FRAC_1_SQRT_2, 0.0), c(-FRAC_1_SQRT_2, 0.0), c(0.0, 0.0)),
        }
    }

    pub fn product(signal: &Ket2, idler: &Ket2) -> Result<Self> {
        let k = kron_ket(signal, idler);
        Self::normalized([k[0], k[1], k[2], k[3]])
    }

    pub fn amplitudes(&self) -> [C64; 4] {
        [self.amps[0], self.amps[1], self.amps[2], self.amps[3]]
    }

    pub fn ket(&self) -> &Ket4 {
        &self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps.dotc(&other.amps)
    }

    /// Equality up to a global phase, `|⟨ψ₁|ψ₂⟩| = 1`.
    pub fn eq_up_to_phase(&self, other: &PureState, tol: f64) -> bool {
        (self.inner(other).norm() - 1.0).abs() <= tol
    }
}

/// `(|HV⟩ + e^{iφ}|VH⟩)/√2`; `φ = π` is the singlet.
pub fn bell_phi(phi: f64) -> Result<PureState> {
    if !phi.is_finite() {
        return Err(Error::invalid(format!("phase must be finite, got {phi}")));
    }
    let phase = C64::from_polar(FRAC_1_SQRT_2, phi);
    Ok(PureState {
        amps: Ket4::new(c(0.0, 0.0), c(FRAC_1_SQRT_2, 0.0), phase, c(0.0, 0.0)),
    })
}

/// `|ψ⟩⟨ψ|`.
pub fn densify(psi: &PureState) -> DensityMatrix {
    DensityMatrix(psi.amps * psi.amps.adjoint())
}

// ---------------------------------------------------------------------------
// Analyzer settings and projectors
// ---------------------------------------------------------------------------

/// Named single-photon polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [Self::H, Self::V, Self::D, Self::A, Self::R, Self::L];

    pub fn ket(self) -> Ket2 {
        let s = FRAC_1_SQRT_2;
        match self {
            Self::H => Ket2::new(c(1.0, 0.0), c(0.0, 0.0)),
            Self::V => Ket2::new(c(0.0, 0.0), c(1.0, 0.0)),
            Self::D => Ket2::new(c(s, 0.0), c(s, 0.0)),
            Self::A => Ket2::new(c(s, 0.0), c(-s, 0.0)),
            Self::R => Ket2::new(c(s, 0.0), c(0.0, -s)),
            Self::L => Ket2::new(c(s, 0.0), c(0.0, s)),
        }
    }

    /// Angle to horizontal for linear polarizations.
    pub fn linear_angle(self) -> Option<f64> {
        match self {
            Self::H => Some(0.0),
            Self::V => Some(90.0),
            Self::D => Some(45.0),
            Self::A => Some(135.0),
            Self::R | Self::L => None,
        }
    }

    fn letter(self) -> &'static str {
        match self {
            Self::H => "H",
            Self::V => "V",
            Self::D => "D",
            Self::A => "A",
            Self::R => "R",
            Self::L => "L",
        }
    }
}

/// Analyzer setting on one arm: a named polarization or a linear polarizer
/// angle in degrees from horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analyzer {
    Named(Polarization),
    Linear(f64),
}

impl Analyzer {
    /// Angle to horizontal in degrees, when the analyzer is linear.
    pub fn linear_angle(&self) -> Option<f64> {
        match *self {
            Analyzer::Named(p) => p.linear_angle(),
            Analyzer::Linear(theta) => Some(theta),
        }
    }

    pub fn projector(&self) -> Result<Projector> {
        match *self {
            Analyzer::Named(p) => Ok(Projector::named(p)),
            Analyzer::Linear(theta) => linear_projector(theta),
        }
    }
}

impl fmt::Display for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Analyzer::Named(p) => f.write_str(p.letter()),
            Analyzer::Linear(theta) => write!(f, "{theta}"),
        }
    }
}

impl FromStr for Analyzer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let named = match t {
            "H" | "h" => Some(Polarization::H),
            "V" | "v" => Some(Polarization::V),
            "D" | "d" => Some(Polarization::D),
            "A" | "a" => Some(Polarization::A),
            "R" | "r" => Some(Polarization::R),
            "L" | "l" => Some(Polarization::L),
            _ => None,
        };
        if let Some(p) = named {
            return Ok(Analyzer::Named(p));
        }
        match t.parse::<f64>() {
            Ok(theta) if theta.is_finite() => Ok(Analyzer::Linear(theta)),
            _ => Err(Error::invalid(format!("invalid analyzer label {s:?}"))),
        }
    }
}

impl Serialize for Analyzer {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Analyzer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rank-1 single-photon projector `|a⟩⟨a|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    ket: Ket2,
    label: Analyzer,
}

impl Projector {
    pub fn named(p: Polarization) -> Self {
        Projector {
            ket: p.ket(),
            label: Analyzer::Named(p),
        }
    }

    pub fn matrix(&self) -> Mat2 {
        self.ket * self.ket.adjoint()
    }

    pub fn ket(&self) -> &Ket2 {
        &self.ket
    }

    pub fn label(&self) -> Analyzer {
        self.label
    }

    /// Projector onto the orthogonal polarization.
    pub fn orthogonal(&self) -> Projector {
        let ket = Ket2::new(-self.ket[1].conj(), self.ket[0].conj());
        let label = match self.label {
            Analyzer::Named(p) => Analyzer::Named(match p {
                Polarization::H => Polarization::V,
                Polarization::V => Polarization::H,
                Polarization::D => Polarization::A,
                Polarization::A => Polarization::D,
                Polarization::R => Polarization::L,
                Polarization::L => Polarization::R,
            }),
            Analyzer::Linear(theta) => Analyzer::Linear(theta + 90.0),
        };
        Projector { ket, label }
    }
}

/// `Π(θ) = |θ⟩⟨θ|` with `|θ⟩ = cos θ |H⟩ + sin θ |V⟩`, θ in degrees.
pub fn linear_projector(theta_deg: f64) -> Result<Projector> {
    if !theta_deg.is_finite() {
        return Err(Error::invalid(format!("analyzer angle must be finite, got {theta_deg}")));
    }
    let (s, co) = theta_deg.to_radians().sin_cos();
    Ok(Projector {
        ket: Ket2::new(c(co, 0.0), c(s, 0.0)),
        label: Analyzer::Linear(theta_deg),
    })
}

/// Analyzer pair for one joint measurement, signal first. Serialised as
/// its `"signal/idler"` label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSetting {
    pub signal: Analyzer,
    pub idler: Analyzer,
}

impl JointSetting {
    pub fn new(signal: Analyzer, idler: Analyzer) -> Self {
        JointSetting { signal, idler }
    }

    pub fn projectors(&self) -> Result<(Projector, Projector)> {
        Ok((self.signal.projector()?, self.idler.projector()?))
    }
}

impl fmt::Display for JointSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.signal, self.idler)
    }
}

impl Serialize for JointSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for JointSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for JointSetting {
    type Err = Error;

    /// Parses `"signal/idler"`, e.g. `"H/V"` or `"0/22.5"`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| Error::invalid(format!("setting {s:?} is not of the form signal/idler")))?;
        Ok(JointSetting::new(a.parse()?, b.parse()?))
    }
}

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

/// Validated two-photon density matrix.
///
/// Construction checks Hermiticity and unit trace to [`DENSITY_TOL`] and the
/// smallest eigenvalue against [`PSD_TOL`]; matrices inside tolerance are kept
/// as given.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        validate_density(&m)?;
        Ok(DensityMatrix(m))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity() * c(0.25, 0.0))
    }

    /// `v·|Ψ⁻⟩⟨Ψ⁻| + (1−v)·I/4`.
    pub fn werner(v: f64) -> Result<Self> {
        if !(-1.0 / 3.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("Werner visibility {v} outside [-1/3, 1]")));
        }
        let singlet = densify(&PureState::singlet()).0;
        Self::new(singlet * c(v, 0.0) + Mat4::identity() * c((1.0 - v) / 4.0, 0.0))
    }

    /// Convex combination `Σ wₖ ρₖ`; weights must be non-negative and sum to 1.
    pub fn mixture(parts: &[(f64, DensityMatrix)]) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture weights must be non-negative and sum to 1"));
        }
        let m = parts
            .iter()
            .fold(Mat4::zeros(), |acc, (w, r)| acc + r.0 * c(*w, 0.0));
        Self::new(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.0)
    }

    /// `(U⊗V) ρ (U⊗V)†`.
    pub fn local_transform(&self, u_signal: &Mat2, u_idler: &Mat2) -> Result<Self> {
        let u = kron(u_signal, u_idler);
        Self::new(u * self.0 * u.adjoint())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density matrix serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Checks the density-matrix invariants on an arbitrary 4×4 matrix.
pub fn validate_density(m: &Mat4) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::precondition("density matrix has non-finite entries"));
    }
    for r in 0..4 {
        for col in 0..4 {
            let d = m[(r, col)] - m[(col, r)].conj();
            if d.re.abs() > DENSITY_TOL || d.im.abs() > DENSITY_TOL {
                return Err(Error::precondition(format!(
                    "density matrix is not Hermitian at ({r},{col})"
                )));
            }
        }
    }
    let tr = trace4(m);
    if (tr.re - 1.0).abs() > DENSITY_TOL || tr.im.abs() > DENSITY_TOL {
        return Err(Error::precondition(format!("density matrix trace is {tr}, expected 1")));
    }
    let hermitian = (m + m.adjoint()) * c(0.5, 0.0);
    let min = hermitian_eigenvalues(&hermitian)[0];
    if min < PSD_TOL {
        return Err(Error::precondition(format!(
            "density matrix has negative eigenvalue {min:e}"
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityJson {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_json(&self.0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DensityJson::deserialize(d)?;
        DensityMatrix::new(matrix_from_json(&raw)).map_err(serde::de::Error::custom)
    }
}

fn matrix_to_json(m: &Mat4) -> DensityJson {
    let mut out = DensityJson {
        re: [[0.0; 4]; 4],
        im: [[0.0; 4]; 4],
    };
    for r in 0..4 {
        for col in 0..4 {
            out.re[r][col] = m[(r, col)].re;
            out.im[r][col] = m[(r, col)].im;
        }
    }
    out
}

fn matrix_from_json(raw: &DensityJson) -> Mat4 {
    Mat4::from_fn(|r, col| c(raw.re[r][col], raw.im[r][col]))
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

/// Born-rule probability `Tr(ρ (Π_s ⊗ Π_i))`, clamped to `[0, 1]`.
pub fn joint_probability(rho: &DensityMatrix, signal: &Projector, idler: &Projector) -> f64 {
    let v = kron_ket(&signal.ket, &idler.ket);
    let p = v.dotc(&(rho.0 * v)).re;
    p.clamp(0.0, 1.0)
}

/// The spin-flipped state `(σy⊗σy) ρ* (σy⊗σy)`.
pub fn spin_flip(rho: &Mat4) -> Mat4 {
    let sy = Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0));
    let yy = kron(&sy, &sy);
    yy * rho.conjugate() * yy
}

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`.
///
/// The λᵢ are the singular values of `√ρ √ρ̃`, with `√ρ̃ = (σy⊗σy)(√ρ)*(σy⊗σy)`.
/// Working with singular values keeps pure and other rank-deficient states
/// accurate to rounding.
pub fn concurrence(rho: &DensityMatrix) -> f64 {
    let s = hermitian_sqrt(&rho.0);
    let r = s * spin_flip(&s);
    let mut lam: Vec<f64> = r.singular_values().iter().copied().collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    (lam[0] - lam[1] - lam[2] - lam[3]).clamp(0.0, 1.0)
}

/// `Tr(ρ²)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
    rho.0.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity_to_pure(rho: &DensityMatrix, target: &PureState) -> f64 {
    target.amps.dotc(&(rho.0 * target.amps)).re.clamp(0.0, 1.0)
}

/// Trace distance `½ Tr|A − B|` between two Hermitian matrices.
pub fn trace_distance(a: &Mat4, b: &Mat4) -> f64 {
    let d = a - b;
    let d = (d + d.adjoint()) * c(0.5, 0.0);
    0.5 * hermitian_eigenvalues(&d).iter().map(|x| x.abs()).sum::<f64>()
}
