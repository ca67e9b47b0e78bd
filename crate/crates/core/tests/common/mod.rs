#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rmstab::linalg::{CMatrix, C64};
use rmstab::model::{FiniteMarkov, MeasurementAlphabet, MeasurementPair, SystemModel};

pub fn real(rows: &[&[f64]]) -> CMatrix {
    CMatrix::from_real_rows(rows).unwrap()
}

pub fn cm(m: DMatrix<f64>) -> CMatrix {
    CMatrix::from_real(&m).unwrap()
}

/// System with `R = I` for every alphabet entry.
pub fn system(a: CMatrix, cs: Vec<CMatrix>) -> SystemModel {
    let n = a.nrows();
    let p = cs[0].nrows();
    let pairs = cs
        .into_iter()
        .enumerate()
        .map(|(d, c)| MeasurementPair { label: format!("m{d}"), c, r: CMatrix::identity(p) })
        .collect();
    SystemModel::new(a, CMatrix::identity(n), CMatrix::identity(n), MeasurementAlphabet::new(pairs).unwrap()).unwrap()
}

pub fn diag(values: &[C64]) -> CMatrix {
    CMatrix::diag(values)
}

/// Row-stochastic matrix from nonnegative weights.
pub fn stochastic(w: &[Vec<f64>]) -> DMatrix<f64> {
    let n = w.len();
    DMatrix::from_fn(n, n, |i, j| {
        let s: f64 = w[i].iter().sum();
        w[i][j] / s
    })
}

pub fn chain(kernels: Vec<DMatrix<f64>>, emission: Vec<usize>) -> FiniteMarkov {
    let n = emission.len();
    FiniteMarkov::new(kernels, emission, DVector::from_element(n, 1.0 / n as f64)).unwrap()
}

/// Plain Riccati map written out directly, without symmetrization or flooring.
pub fn riccati_reference(p: &DMatrix<C64>, c: &DMatrix<C64>, r: &DMatrix<C64>, a: &DMatrix<C64>, q: &DMatrix<C64>) -> DMatrix<C64> {
    let s = c * p * c.adjoint() + r;
    let s_inv = s.clone().pseudo_inverse(1e-12 * s.norm().max(1e-300)).unwrap();
    let apc = a * p * c.adjoint();
    a * p * a.adjoint() + q - &apc * s_inv * apc.adjoint()
}

pub fn min_eig(m: &DMatrix<C64>) -> f64 {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigen().eigenvalues.min()
}
