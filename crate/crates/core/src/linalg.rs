//! Dense complex linear algebra used throughout the crate: tolerant rank and
//! nullspace, subspace algebra, spectral radius, Kronecker products and Jordan
//! block utilities.

use std::fmt;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Size above which [`spectral_radius`] switches from the dense Schur
/// eigensolver to power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 512;

/// Numerical tolerances shared by every module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub tol_rank: f64,
    /// Orthonormality tolerance for subspace bases.
    pub tol_orth: f64,
    /// Root-of-unity detection tolerance.
    pub tol_angle: f64,
    /// Largest multiplicative order searched for.
    pub n_max_order: u32,
    /// Half-width of the inconclusive band around a unit margin.
    pub eps_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_rank: 1e-9,
            tol_orth: 1e-10,
            tol_angle: 1e-9,
            n_max_order: 64,
            eps_margin: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_rank, self.tol_orth, self.tol_angle, self.eps_margin];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("tolerances must be strictly positive".into()));
        }
        if self.n_max_order < 1 {
            return Err(Error::InvalidArgument("n_max_order must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest principal angle (as its sine) under which two subspaces are
    /// considered equal.
    pub fn angle_tol(&self) -> f64 {
        self.tol_rank.sqrt().max(10.0 * self.tol_orth)
    }
}

/// Dense complex matrix whose entries are all finite.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(CMatrix(m))
        } else {
            Err(Error::NonFinite)
        }
    }

    /// Wraps a matrix produced by internal arithmetic on finite inputs.
    pub(crate) fn wrap(m: DMatrix<C64>) -> Self {
        debug_assert!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        CMatrix(m)
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CMatrix(DMatrix::zeros(nrows, ncols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    pub fn diag(values: &[C64]) -> Self {
        CMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn rows_vec(&self) -> Vec<Vec<C64>> {
        (0..self.0.nrows())
            .map(|i| (0..self.0.ncols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix(self.0.adjoint())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.ncols() != rhs.nrows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows(),
                self.ncols(),
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        Ok(CMatrix(&self.0 * &rhs.0))
    }

    /// Spectral (operator 2-) norm.
    pub fn norm2(&self) -> f64 {
        op_norm(&self.0)
    }

    pub fn is_square(&self) -> bool {
        self.nrows() == self.ncols()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.0.norm().max(1.0);
        (&self.0 - self.0.adjoint()).norm() <= tol * scale
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        if self.nrows() == 0 {
            return 0.0;
        }
        let h = hermitian_part(&self.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol)
            && self.min_hermitian_eigenvalue() >= -tol * self.0.norm().max(1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn select_columns(&self, range: std::ops::Range<usize>) -> CMatrix {
        CMatrix(self.0.columns(range.start, range.len()).into_owned())
    }
}

impl Deref for CMatrix {
    type Target = DMatrix<C64>;
    fn deref(&self) -> &DMatrix<C64> {
        &self.0
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{}x{}{:?}", self.nrows(), self.ncols(), self.rows_vec())
    }
}

pub(crate) fn hermitian_part(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

pub(crate) fn op_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Orthonormal basis of a subspace of `C^ambient_dim`.
#[derive(Clone, Debug)]
pub struct Subspace {
    ambient_dim: usize,
    basis: DMatrix<C64>,
}

impl Subspace {
    pub fn full(n: usize) -> Self {
        Subspace { ambient_dim: n, basis: DMatrix::identity(n, n) }
    }

    pub fn trivial(n: usize) -> Self {
        Subspace { ambient_dim: n, basis: DMatrix::zeros(n, 0) }
    }

    /// Subspace spanned by the columns of `vectors`.
    pub fn span(vectors: &DMatrix<C64>, tol: &Tolerances) -> Self {
        let n = vectors.nrows();
        if vectors.ncols() == 0 {
            return Subspace::trivial(n);
        }
        let svd = vectors.clone().svd(true, false);
        let u = svd.u.expect("requested U");
        let order = sorted_indices(&svd.singular_values);
        let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        if smax == 0.0 {
            return Subspace::trivial(n);
        }
        let cols: Vec<_> = order
            .into_iter()
            .filter(|&i| svd.singular_values[i] > tol.tol_rank * smax)
            .map(|i| u.column(i).into_owned())
            .collect();
        Subspace { ambient_dim: n, basis: columns_to_matrix(n, &cols) }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<C64> {
        &self.basis
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient_dim
    }

    pub fn projector(&self) -> DMatrix<C64> {
        &self.basis * self.basis.adjoint()
    }

    pub fn complement_projector(&self) -> DMatrix<C64> {
        DMatrix::identity(self.ambient_dim, self.ambient_dim) - self.projector()
    }

    /// Sine of the largest principal angle from `other` into `self`; zero iff
    /// `other ⊆ self` in exact arithmetic.
    pub fn gap_from(&self, other: &Subspace) -> f64 {
        if other.dim() == 0 {
            return 0.0;
        }
        op_norm(&(self.complement_projector() * &other.basis))
    }

    pub fn contains(&self, other: &Subspace, tol: &Tolerances) -> bool {
        other.dim() <= self.dim() && self.gap_from(other) <= tol.angle_tol()
    }

    /// Image under an invertible linear map.
    pub fn image(&self, m: &DMatrix<C64>, tol: &Tolerances) -> Subspace {
        Subspace::span(&(m * &self.basis), tol)
    }

    /// Largest deviation of `basisᴴ·basis` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.basis.adjoint() * &self.basis;
        let d = g - DMatrix::identity(self.dim(), self.dim());
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn columns_to_matrix(n: usize, cols: &[DVector<C64>]) -> DMatrix<C64> {
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

fn sorted_indices(values: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    idx
}

/// Orthonormal basis of `{x : m·x ≈ 0}`.
///
/// Rows are scaled to unit norm first (zero rows dropped). The kernel is
/// unchanged, and rows of observability matrices that grow like `|α|^t` no
/// longer swamp the relative singular-value cutoff.
pub fn nullspace(m: &DMatrix<C64>, tol: &Tolerances) -> Subspace {
    let n = m.ncols();
    let rows: Vec<_> = m
        .row_iter()
        .filter_map(|r| {
            let norm = r.norm();
            (norm > 0.0).then(|| r.unscale(norm).into_owned())
        })
        .collect();
    if rows.is_empty() {
        return Subspace::full(n);
    }
    // Pad to at least n rows so the SVD returns a full set of right vectors.
    let mut stacked = DMatrix::<C64>::zeros(rows.len().max(n), n);
    for (i, row) in rows.iter().enumerate() {
        stacked.set_row(i, row);
    }
    svd_kernel(stacked, tol)
}

/// Right singular vectors below the relative cutoff; `m` needs at least as
/// many rows as columns.
fn svd_kernel(m: DMatrix<C64>, tol: &Tolerances) -> Subspace {
    let n = m.ncols();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let order = sorted_indices(&svd.singular_values);
    let smax = svd.singular_values[order[0]];
    if smax == 0.0 {
        return Subspace::full(n);
    }
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > tol.tol_rank * smax)
        .count();
    let cols: Vec<_> = order[rank..]
        .iter()
        .map(|&i| v_t.row(i).adjoint())
        .collect();
    Subspace { ambient_dim: n, basis: columns_to_matrix(n, &cols) }
}

/// Numerical rank with the same row normalization as [`nullspace`].
pub fn rank(m: &DMatrix<C64>, tol: &Tolerances) -> usize {
    m.ncols() - nullspace(m, tol).dim()
}

pub fn has_full_column_rank(m: &DMatrix<C64>, tol: &Tolerances) -> bool {
    nullspace(m, tol).is_trivial()
}

fn check_ambient(a: &Subspace, b: &Subspace) -> Result<()> {
    if a.ambient_dim != b.ambient_dim {
        return Err(Error::Dimension(format!(
            "subspaces live in C^{} and C^{}",
            a.ambient_dim, b.ambient_dim
        )));
    }
    Ok(())
}

/// `a ∩ b`, as the kernel of the stacked complement projectors.
pub fn intersect(a: &Subspace, b: &Subspace, tol: &Tolerances) -> Result<Subspace> {
    check_ambient(a, b)?;
    if a.is_trivial() || b.is_full() {
        return Ok(a.clone());
    }
    if b.is_trivial() || a.is_full() {
        return Ok(b.clone());
    }
    let n = a.ambient_dim;
    let mut stacked = DMatrix::<C64>::zeros(2 * n, n);
    stacked.rows_mut(0, n).copy_from(&a.complement_projector());
    stacked.rows_mut(n, n).copy_from(&b.complement_projector());
    // No row normalization here: projector rows are already unit-scale, and
    // rescaling their rounding noise would invent constraints.
    Ok(svd_kernel(stacked, tol))
}

/// Equality up to principal angles; symmetric and reflexive.
pub fn subspace_equal(a: &Subspace, b: &Subspace, tol: &Tolerances) -> Result<bool> {
    check_ambient(a, b)?;
    Ok(a.dim() == b.dim() && a.gap_from(b) <= tol.angle_tol())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(spectral_radius_dense(m.inner()))
}

pub(crate) fn spectral_radius_dense(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return m[(0, 0)].norm();
    }
    if m.iter().all(|z| z.norm() == 0.0) {
        return 0.0;
    }
    if n <= DENSE_EIGEN_LIMIT {
        if let Some(schur) = Schur::try_new(m.clone(), 1e-15, 10_000 * n) {
            let (_, t) = schur.unpack();
            return (0..n).map(|i| t[(i, i)].norm()).fold(0.0, f64::max);
        }
    }
    power_iteration_radius(m)
}

/// Spectral radius of a real matrix.
pub(crate) fn spectral_radius_real(m: &DMatrix<f64>) -> f64 {
    spectral_radius_dense(&m.map(|x| C64::new(x, 0.0)))
}

/// Growth rate `lim ‖mᵏx‖^{1/k}` from a fixed generic start vector, averaged
/// over the second half of the run so rotating dominant pairs do not bias it.
fn power_iteration_radius(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut x = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * (i % 7) as f64, 0.01 * (i % 3) as f64));
    x.unscale_mut(x.norm());
    let iters = 20_000;
    let mut log_sum = 0.0;
    let mut counted = 0usize;
    for k in 0..iters {
        let y = m * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        if k >= iters / 2 {
            log_sum += norm.ln();
            counted += 1;
        }
        x = y.unscale(norm);
    }
    (log_sum / counted as f64).exp()
}

/// Jordan block `J_size(alpha)`.
pub fn jordan_block(alpha: C64, size: usize) -> CMatrix {
    let mut m = DMatrix::from_diagonal_element(size, size, alpha);
    for i in 0..size.saturating_sub(1) {
        m[(i, i + 1)] = C64::new(1.0, 0.0);
    }
    CMatrix::wrap(m)
}

/// Generalized binomial coefficient `binom(s, j)` for integer `s` (negative
/// allowed) as a float.
fn binom(s: i64, j: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..j {
        acc *= (s - i as i64) as f64 / (i + 1) as f64;
    }
    acc
}

/// `J_size(alpha)^s` from the closed-form binomial entries; `s` may be
/// negative when `alpha ≠ 0`.
pub fn jordan_block_power(alpha: C64, size: usize, s: i64) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(size, size);
    for j in 0..size {
        let exponent = s - j as i64;
        let coef = binom(s, j);
        if coef == 0.0 {
            continue;
        }
        let value = if alpha.norm() == 0.0 {
            if exponent == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        } else {
            alpha.powi(exponent as i32)
        };
        for i in 0..size - j {
            m[(i, i + j)] = value * coef;
        }
    }
    m
}

/// Norm of `J_J(alpha)^t` with the envelopes `|α|ᵗ c₁ t^{J−1}` and
/// `|α|ᵗ c₂ t^{1−J}` bracketing `‖Aᵗ‖` and `‖A^{−t}‖^{−1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerNormBounds {
    pub norm: f64,
    /// `‖A^{−t}‖^{−1}`.
    pub inverse_norm_recip: f64,
    pub upper: f64,
    pub lower: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Sweep length used to fit the envelope constants.
pub const POWER_NORM_SWEEP: usize = 100;

pub fn matrix_power_norm(alpha: C64, jordan_size: usize, t: usize) -> Result<PowerNormBounds> {
    if alpha.norm() == 0.0 {
        return Err(Error::InvalidArgument("alpha must be nonzero".into()));
    }
    if jordan_size == 0 || t == 0 {
        return Err(Error::InvalidArgument("Jordan size and t must be at least 1".into()));
    }
    let a = alpha.norm();
    let poly = |s: usize, e: i32| (s as f64).powi(e);
    let sweep = POWER_NORM_SWEEP.max(t);
    let mut c1: f64 = 0.0;
    let mut c2 = f64::INFINITY;
    for s in 1..=sweep {
        let fwd = op_norm(&jordan_block_power(alpha, jordan_size, s as i64));
        let inv = op_norm(&jordan_block_power(alpha, jordan_size, -(s as i64)));
        let scale = a.powi(s as i32);
        c1 = c1.max(fwd / (scale * poly(s, jordan_size as i32 - 1)));
        c2 = c2.min((1.0 / inv) / (scale * poly(s, 1 - jordan_size as i32)));
    }
    let norm = op_norm(&jordan_block_power(alpha, jordan_size, t as i64));
    let inverse_norm_recip = 1.0 / op_norm(&jordan_block_power(alpha, jordan_size, -(t as i64)));
    let scale = a.powi(t as i32);
    Ok(PowerNormBounds {
        norm,
        inverse_norm_recip,
        upper: scale * c1 * poly(t, jordan_size as i32 - 1),
        lower: scale * c2 * poly(t, 1 - jordan_size as i32),
        c1,
        c2,
    })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix::wrap(a.inner().kronecker(b.inner()))
}

/// Moore–Penrose pseudo-inverse with relative singular-value cutoff.
pub(crate) fn pinv(m: &DMatrix<C64>, tol_rank: f64) -> DMatrix<C64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(c, r);
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol_rank * smax {
            out += v_t.row(k).adjoint() * u.column(k).adjoint() * C64::new(1.0 / s, 0.0);
        }
    }
    out
}
