#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use sunpair::polarization::{DensityMatrix, Mat2, Mat4, C64};

pub fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// Ginibre-distributed random density matrix of full rank.
pub fn random_density<R: Rng>(rng: &mut R) -> DensityMatrix {
    let g = Matrix4::from_fn(|_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m: Mat4 = g * g.adjoint();
    let tr = m.trace();
    let m = m / tr;
    DensityMatrix::new((m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

/// Haar-ish random 2×2 unitary from a normalised complex Gaussian.
pub fn random_unitary<R: Rng>(rng: &mut R) -> Mat2 {
    let mut v = [0.0f64; 4];
    v.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (a, b) = (c(v[0] / n, v[1] / n), c(v[2] / n, v[3] / n));
    Matrix2::new(a, -b.conj(), b, a.conj())
}

/// Werner state `v|Ψ⁻⟩⟨Ψ⁻| + (1−v)I/4` written out entry by entry.
pub fn werner_by_hand(v: f64) -> Mat4 {
    let q = (1.0 - v) / 4.0;
    let mut m = Mat4::zeros();
    m[(0, 0)] = c(q, 0.0);
    m[(3, 3)] = c(q, 0.0);
    m[(1, 1)] = c(q + v / 2.0, 0.0);
    m[(2, 2)] = c(q + v / 2.0, 0.0);
    m[(1, 2)] = c(-v / 2.0, 0.0);
    m[(2, 1)] = c(-v / 2.0, 0.0);
    m
}
