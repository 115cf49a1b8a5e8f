//! Polarization-entangled photon pairs from a weakly pumped SPDC source,
//! from detector clicks to figures of merit.
//!
//! The crate is organised along the measurement chain:
//!
//! - [`polarization`]: two-qubit states, analyzer projectors and the
//!   concurrence / purity / fidelity measures.
//! - [`source`]: scalar source imperfections and pump-power bookkeeping.
//! - [`timetag`]: event-level simulation of detector time tags and the
//!   binary/CSV stream formats.
//! - [`correlator`]: time-correlation histograms, windowed coincidences,
//!   accidental estimates and power normalisation.
//! - [`tomography`]: linear-inversion and maximum-likelihood state
//!   reconstruction with Poisson bootstrap errors.
//! - [`chsh`]: correlation functions and the CHSH parameter.
//!
//! The two-photon basis is always ordered `(HH, HV, VH, VV)`, signal first.

pub mod chsh;
pub mod correlator;
pub mod error;
pub mod polarization;
pub mod rng;
pub mod source;
pub mod stats;
pub mod timetag;
pub mod tomography;

pub use error::{Error, Result};
