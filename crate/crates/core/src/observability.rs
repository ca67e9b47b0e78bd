//! Observability matrices of FMO blocks, full-column-rank tests, and the
//! finite lattice of kernels they can produce.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fmo::FmoBlock;
use crate::linalg::{has_full_column_rank, intersect, nullspace, subspace_equal, Subspace, Tolerances, C64};
use crate::model::{jordan_blocks, SystemModel};

/// Powers beyond this use the closed-form Jordan entries instead of repeated
/// multiplication.
pub const REPEATED_POWER_LIMIT: usize = 64;
/// Default cap on `|classes|^N` when enumerating lattice generators.
pub const LATTICE_CAP: f64 = 1e6;
/// Largest number of row subsets [`has_fcr_strength`] enumerates.
pub const FCR_ENUMERATION_CAP: f64 = 1e5;

/// `O(Γ) = [C_0; C_1 A; …; C_{T−1} A^{T−1}]` for a block or the whole system.
#[derive(Clone, Debug)]
pub struct ObsMatrix {
    /// `None` for the whole system.
    pub block: Option<usize>,
    pub gamma: Vec<usize>,
    pub matrix: DMatrix<C64>,
}

/// Stacks `c_of(γ_s)·A^s`. `power(s)` must return `A^s` in closed form; it
/// is used past [`REPEATED_POWER_LIMIT`].
fn stack(
    a: &DMatrix<C64>,
    c_of: impl Fn(usize) -> DMatrix<C64>,
    power: impl Fn(i64) -> DMatrix<C64>,
    gamma: &[usize],
    p: usize,
) -> DMatrix<C64> {
    let n = a.ncols();
    let mut out = DMatrix::zeros(gamma.len() * p, n);
    let mut pow = DMatrix::<C64>::identity(n, n);
    for (s, &g) in gamma.iter().enumerate() {
        if s > 0 {
            pow = if s > REPEATED_POWER_LIMIT { power(s as i64) } else { &pow * a };
        }
        let c = c_of(g);
        let mut rows = &c * &pow;
        // Rows that vanish up to rounding are set to exactly zero, so the
        // row normalization in `nullspace` cannot inflate them.
        let scale = pow.norm();
        for (i, mut row) in rows.row_iter_mut().enumerate() {
            if row.norm() <= 1e-13 * c.row(i).norm() * scale {
                row.fill(C64::new(0.0, 0.0));
            }
        }
        out.rows_mut(s * p, p).copy_from(&rows);
    }
    out
}

/// Observability matrix of one FMO block along `gamma` (alphabet indices).
pub fn build_obs(block: &FmoBlock, gamma: &[usize]) -> Result<ObsMatrix> {
    let d = block.c_parts.len();
    if let Some(bad) = gamma.iter().find(|&&g| g >= d) {
        return Err(Error::InvalidArgument(format!("alphabet index {bad} out of range (alphabet has {d})")));
    }
    let p = block.c_parts.first().map_or(0, |c| c.nrows());
    let matrix = stack(block.a.inner(), |g| block.c_parts[g].inner().clone(), |s| block.power(s), gamma, p);
    Ok(ObsMatrix { block: Some(block.index), gamma: gamma.to_vec(), matrix })
}

/// Observability matrix of the whole system along `gamma`.
pub fn build_obs_system(system: &SystemModel, gamma: &[usize]) -> Result<ObsMatrix> {
    let d = system.alphabet.len();
    if let Some(bad) = gamma.iter().find(|&&g| g >= d) {
        return Err(Error::InvalidArgument(format!("alphabet index {bad} out of range (alphabet has {d})")));
    }
    let jordan = jordan_blocks(&system.a)?;
    let n = system.n();
    let power = |s: i64| {
        let mut m = DMatrix::zeros(n, n);
        for jb in &jordan {
            let pw = crate::linalg::jordan_block_power(jb.eigenvalue, jb.size, s);
            m.view_mut((jb.start, jb.start), (jb.size, jb.size)).copy_from(&pw);
        }
        m
    };
    let matrix = stack(
        system.a.inner(),
        |g| system.alphabet.get(g).c.inner().clone(),
        power,
        gamma,
        system.p(),
    );
    Ok(ObsMatrix { block: None, gamma: gamma.to_vec(), matrix })
}

pub fn has_fcr(o: &ObsMatrix, tol: &Tolerances) -> bool {
    has_full_column_rank(&o.matrix, tol)
}

/// Result of an FCR(q) test. `exact` is false when the enumeration was too
/// large and a sufficient check failed; `holds` is then `false` without
/// being a proof that FCR(q) fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FcrStrength {
    pub holds: bool,
    pub exact: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn rows_have_fcr(m: &DMatrix<C64>, keep: &[usize], tol: &Tolerances) -> bool {
    if keep.len() < m.ncols() {
        return false;
    }
    let sub = DMatrix::from_fn(keep.len(), m.ncols(), |i, j| m[(keep[i], j)]);
    has_full_column_rank(&sub, tol)
}

/// Does `o` keep full column rank after deleting any `q` rows?
///
/// Enumerates deletions when there are at most [`FCR_ENUMERATION_CAP`] of
/// them. Otherwise tries a sufficient certificate: `q + 1` disjoint row
/// groups that each have full column rank.
pub fn has_fcr_strength(o: &ObsMatrix, q: usize, tol: &Tolerances) -> FcrStrength {
    let m = &o.matrix;
    let rows = m.nrows();
    if rows <= q {
        return FcrStrength { holds: false, exact: true };
    }
    if q == 0 {
        return FcrStrength { holds: has_full_column_rank(m, tol), exact: true };
    }
    if binomial(rows, q) <= FCR_ENUMERATION_CAP {
        let mut deleted: Vec<usize> = (0..q).collect();
        loop {
            let keep: Vec<usize> = (0..rows).filter(|r| !deleted.contains(r)).collect();
            if !rows_have_fcr(m, &keep, tol) {
                return FcrStrength { holds: false, exact: true };
            }
            // Next q-combination in lexicographic order.
            let mut i = q;
            loop {
                if i == 0 {
                    return FcrStrength { holds: true, exact: true };
                }
                i -= 1;
                if deleted[i] < rows - q + i {
                    break;
                }
            }
            deleted[i] += 1;
            for j in i + 1..q {
                deleted[j] = deleted[j - 1] + 1;
            }
        }
    }
    // Greedy disjoint cover by full-rank row groups.
    let mut groups = 0;
    let mut current: Vec<usize> = Vec::new();
    for r in 0..rows {
        current.push(r);
        if rows_have_fcr(m, &current, tol) {
            groups += 1;
            current.clear();
            if groups > q {
                return FcrStrength { holds: true, exact: true };
            }
        }
    }
    FcrStrength { holds: false, exact: false }
}

/// The lattice `𝕂` of possible kernels of a block's observability matrices
/// over length-`N` windows, closed under intersection, with the whole block
/// space at index 0 and the trivial subspace last.
#[derive(Clone, Debug)]
pub struct KernelLattice {
    pub block: usize,
    pub order: usize,
    pub num_classes: usize,
    pub elements: Vec<Subspace>,
    pub meet_table: Vec<Vec<usize>>,
    /// Lattice index of `ker O` for every class sequence of length `N`,
    /// encoded base `num_classes` with the first symbol most significant.
    pub psi_table: Vec<usize>,
    /// Alphabet index to class index.
    pub class_of: Vec<usize>,
}

impl KernelLattice {
    /// `I`: index of the trivial subspace.
    pub fn bottom(&self) -> usize {
        self.elements.len() - 1
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn meet(&self, i: usize, j: usize) -> usize {
        self.meet_table[i][j]
    }

    pub fn encode_classes(&self, classes: &[usize]) -> usize {
        classes.iter().fold(0, |acc, &c| acc * self.num_classes + c)
    }

    /// Lattice index of `ψ(Γ)` for a sequence of alphabet indices whose
    /// length is a multiple of `N`.
    pub fn psi(&self, gamma: &[usize]) -> Result<usize> {
        if gamma.len() % self.order != 0 {
            return Err(Error::InvalidArgument(format!(
                "sequence length {} is not a multiple of {}",
                gamma.len(),
                self.order
            )));
        }
        let mut acc = 0;
        for window in gamma.chunks(self.order) {
            let classes: Vec<usize> = window.iter().map(|&g| self.class_of[g]).collect();
            acc = self.meet(acc, self.psi_table[self.encode_classes(&classes)]);
        }
        Ok(acc)
    }

    /// Index of the element equal to `s`, if present.
    pub fn find(&self, s: &Subspace, tol: &Tolerances) -> Option<usize> {
        self.elements
            .iter()
            .position(|e| subspace_equal(e, s, tol).unwrap_or(false))
    }
}

fn insert_unique(elements: &mut Vec<Subspace>, s: Subspace, tol: &Tolerances) -> usize {
    if let Some(i) = elements.iter().position(|e| subspace_equal(e, &s, tol).unwrap_or(false)) {
        return i;
    }
    elements.push(s);
    elements.len() - 1
}

/// Enumerates every class sequence of length `N`, deduplicates the kernels,
/// closes them under intersection and tabulates meets.
///
/// The long-sequence kernel reduces to intersections of window kernels only
/// when every kernel is invariant under `A^N`; otherwise this returns
/// [`Error::NotApplicable`] and callers fall back to Monte Carlo.
pub fn build_lattice(block: &FmoBlock, tol: &Tolerances, cap: f64) -> Result<KernelLattice> {
    let n = block.dim();
    let order = block.order as usize;
    let classes = block.num_classes();
    let count = (classes as f64).powi(order as i32);
    if count > cap {
        return Err(Error::CapExceeded {
            what: format!("kernel lattice of block {} ({classes} distinct C, N = {order})", block.index),
            needed: count,
            cap,
        });
    }
    let count = count as usize;
    let mut elements = vec![Subspace::full(n)];
    let mut generator = Vec::with_capacity(count);
    let mut seq = vec![0usize; order];
    for code in 0..count {
        let mut rest = code;
        for slot in seq.iter_mut().rev() {
            *slot = rest % classes;
            rest /= classes;
        }
        let gamma: Vec<usize> = seq.iter().map(|&c| block.class_reps[c]).collect();
        let kernel = nullspace(&build_obs(block, &gamma)?.matrix, tol);
        generator.push(insert_unique(&mut elements, kernel, tol));
    }

    let a_n = block.power(order as i64);
    for e in &elements {
        if e.is_trivial() || e.is_full() {
            continue;
        }
        let image = e.image(&a_n, tol);
        if !subspace_equal(&image, e, tol)? {
            return Err(Error::NotApplicable(format!(
                "a window kernel of block {} is not invariant under A^N",
                block.index
            )));
        }
    }

    // Close under pairwise intersection.
    let mut done = 0;
    while done < elements.len() {
        let len = elements.len();
        for i in 0..len {
            for j in done.max(i + 1)..len {
                let m = intersect(&elements[i], &elements[j], tol)?;
                insert_unique(&mut elements, m, tol);
            }
        }
        done = len;
    }
    insert_unique(&mut elements, Subspace::trivial(n), tol);

    // Order by dimension descending, so strict containment points to larger
    // indices, with the trivial subspace last.
    let mut perm: Vec<usize> = (0..elements.len()).collect();
    perm.sort_by(|&x, &y| elements[y].dim().cmp(&elements[x].dim()));
    let mut rank = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        rank[old] = new;
    }
    let elements: Vec<Subspace> = perm.iter().map(|&old| elements[old].clone()).collect();
    let psi_table = generator.iter().map(|&g| rank[g]).collect();

    let size = elements.len();
    let mut meet_table = vec![vec![0; size]; size];
    for i in 0..size {
        for j in i..size {
            let m = intersect(&elements[i], &elements[j], tol)?;
            let k = elements
                .iter()
                .position(|e| subspace_equal(e, &m, tol).unwrap_or(false))
                .ok_or_else(|| Error::NotApplicable("lattice is not closed under intersection".into()))?;
            meet_table[i][j] = k;
            meet_table[j][i] = k;
        }
    }
    Ok(KernelLattice {
        block: block.index,
        order,
        num_classes: classes,
        elements,
        meet_table,
        psi_table,
        class_of: block.c_class.clone(),
    })
}
