//! Partition of a Jordan-form state matrix into blocks whose eigenvalues
//! share a common finite multiplicative order.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Tolerances, C64};
use crate::model::{jordan_blocks, JordanBlock, SystemModel};

/// Best rational approximations of `x ∈ [0, 1)` with denominators up to
/// `max_den`, in order of increasing denominator.
fn convergents(x: f64, max_den: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut frac = x;
    for _ in 0..64 {
        let a = frac.floor();
        let ai = a as u64;
        let (p2, q2) = (ai * p1 + p0, ai * q1 + q0);
        if q2 > max_den {
            break;
        }
        out.push((p2, q2));
        let rest = frac - a;
        if rest < 1e-300 {
            break;
        }
        frac = 1.0 / rest;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub(crate) fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Smallest `q ≤ max_order` such that `ratio` is a `q`-th root of unity
/// within `tol`, if any.
fn root_of_unity_order(ratio: C64, tol: &Tolerances) -> Option<u64> {
    if (ratio.norm() - 1.0).abs() > tol.tol_angle {
        return None;
    }
    let turns = (ratio.arg() / TAU).rem_euclid(1.0);
    convergents(turns, tol.n_max_order as u64)
        .into_iter()
        .find(|&(p, q)| (turns - p as f64 / q as f64).abs() <= tol.tol_angle)
        .map(|(_, q)| q)
}

/// Common finite multiplicative order of `values`: the least `N` such that
/// `x^N = α^N` for every value, with `α` the first value.
pub fn cfmo(values: &[C64], tol: &Tolerances) -> Result<Option<(u32, C64)>> {
    let Some(&alpha) = values.first() else {
        return Err(Error::InvalidArgument("cfmo of an empty set".into()));
    };
    if values.iter().any(|v| v.norm() == 0.0) {
        return Err(Error::ZeroValue);
    }
    let mut order = 1u64;
    for &x in values {
        match root_of_unity_order(x / alpha, tol) {
            Some(q) => order = lcm(order, q),
            None => return Ok(None),
        }
        if order > tol.n_max_order as u64 {
            return Ok(None);
        }
    }
    Ok(Some((order as u32, alpha)))
}

/// One FMO block `(A_k, 𝒞_k)`.
#[derive(Clone, Debug)]
pub struct FmoBlock {
    pub index: usize,
    /// Columns of `A_k` inside `A`.
    pub col_range: std::ops::Range<usize>,
    pub alpha: C64,
    pub order: u32,
    pub jbar: usize,
    /// Jordan blocks of `A_k`, with starts relative to the block.
    pub jordan: Vec<JordanBlock>,
    pub a: CMatrix,
    /// `C_k^(d)` for every alphabet entry `d`.
    pub c_parts: Vec<CMatrix>,
    /// Alphabet entries with equal `C_k^(d)` share a class.
    pub c_class: Vec<usize>,
    /// First alphabet entry of each class.
    pub class_reps: Vec<usize>,
}

impl FmoBlock {
    pub fn dim(&self) -> usize {
        self.col_range.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_reps.len()
    }

    pub fn class_matrix(&self, class: usize) -> &CMatrix {
        &self.c_parts[self.class_reps[class]]
    }

    pub fn is_zero_block(&self) -> bool {
        self.alpha.norm() == 0.0
    }

    /// `A_k^s` from the closed form of each Jordan block.
    pub fn power(&self, s: i64) -> nalgebra::DMatrix<C64> {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for jb in &self.jordan {
            let p = crate::linalg::jordan_block_power(jb.eigenvalue, jb.size, s);
            m.view_mut((jb.start, jb.start), (jb.size, jb.size)).copy_from(&p);
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct FmoPartition {
    pub blocks: Vec<FmoBlock>,
    pub jbar_global: usize,
    pub n_lcm: u64,
}

/// Summary line per block, for reports.
#[derive(Clone, Debug, Serialize)]
pub struct BlockSummary {
    pub index: usize,
    pub columns: [usize; 2],
    pub alpha: [f64; 2],
    pub alpha_abs: f64,
    pub order: u32,
    pub jbar: usize,
    pub distinct_c: usize,
}

impl FmoPartition {
    pub fn summary(&self) -> Vec<BlockSummary> {
        self.blocks
            .iter()
            .map(|b| BlockSummary {
                index: b.index,
                columns: [b.col_range.start, b.col_range.end],
                alpha: [b.alpha.re, b.alpha.im],
                alpha_abs: b.alpha.norm(),
                order: b.order,
                jbar: b.jbar,
                distinct_c: b.num_classes(),
            })
            .collect()
    }
}

fn same_matrix(a: &CMatrix, b: &CMatrix) -> bool {
    let scale = a.norm2().max(b.norm2()).max(1e-300);
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= 1e-14 * scale)
}

fn classify(parts: &[CMatrix]) -> (Vec<usize>, Vec<usize>) {
    let mut reps: Vec<usize> = Vec::new();
    let class = parts
        .iter()
        .enumerate()
        .map(|(d, c)| match reps.iter().position(|&r| same_matrix(&parts[r], c)) {
            Some(k) => k,
            None => {
                reps.push(d);
                reps.len() - 1
            }
        })
        .collect();
    (class, reps)
}

/// Groups contiguous runs of Jordan blocks with a common finite
/// multiplicative order and sorts the groups by `|α|`, then `J̄`, both
/// descending.
///
/// Entries that would have to be merged across an intervening block are an
/// error: reorder `A` (and the columns of every `C`) so they are adjacent.
pub fn partition(system: &SystemModel, tol: &Tolerances) -> Result<FmoPartition> {
    tol.validate()?;
    let jordan = jordan_blocks(&system.a)?;
    // Runs of Jordan blocks: (first jordan index, one past last).
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (j, jb) in jordan.iter().enumerate() {
        let joins = runs.last().is_some_and(|&(first, _)| {
            let lead = jordan[first].eigenvalue;
            match (lead.norm() == 0.0, jb.eigenvalue.norm() == 0.0) {
                (true, true) => true,
                (false, false) => cfmo(&[lead, jb.eigenvalue], tol).ok().flatten().is_some(),
                _ => false,
            }
        });
        if joins {
            runs.last_mut().expect("nonempty").1 = j + 1;
        } else {
            runs.push((j, j + 1));
        }
    }
    for (x, &(fx, _)) in runs.iter().enumerate() {
        for &(fy, _) in runs.iter().skip(x + 1) {
            let (a, b) = (jordan[fx].eigenvalue, jordan[fy].eigenvalue);
            if a.norm() == 0.0 || b.norm() == 0.0 {
                continue;
            }
            if cfmo(&[a, b], tol)?.is_some() {
                return Err(Error::InvalidModel(format!(
                    "eigenvalues at columns {} and {} share a finite multiplicative order but are separated; \
                     permute A so that they are adjacent",
                    jordan[fx].start, jordan[fy].start
                )));
            }
        }
    }

    let mut blocks: Vec<FmoBlock> = runs
        .iter()
        .map(|&(first, last)| {
            let start = jordan[first].start;
            let end = jordan[last - 1].start + jordan[last - 1].size;
            let members = &jordan[first..last];
            let alpha = members[0].eigenvalue;
            let order = if alpha.norm() == 0.0 {
                1
            } else {
                let diag: Vec<C64> = members.iter().map(|j| j.eigenvalue).collect();
                cfmo(&diag, tol)?.map_or(1, |(n, _)| n)
            };
            let c_parts: Vec<CMatrix> = system
                .alphabet
                .pairs()
                .iter()
                .map(|p| p.c.select_columns(start..end))
                .collect();
            let (c_class, class_reps) = classify(&c_parts);
            let a = CMatrix::wrap(system.a.view((start, start), (end - start, end - start)).into_owned());
            Ok(FmoBlock {
                index: 0,
                col_range: start..end,
                alpha,
                order,
                jbar: members.iter().map(|j| j.size).max().unwrap_or(1),
                jordan: members
                    .iter()
                    .map(|j| JordanBlock { start: j.start - start, ..*j })
                    .collect(),
                a,
                c_parts,
                c_class,
                class_reps,
            })
        })
        .collect::<Result<_>>()?;
    blocks.sort_by(|x, y| {
        y.alpha
            .norm()
            .total_cmp(&x.alpha.norm())
            .then(y.jbar.cmp(&x.jbar))
    });
    for (k, b) in blocks.iter_mut().enumerate() {
        b.index = k;
    }
    let jbar_global = blocks.iter().map(|b| b.jbar).max().unwrap_or(1);
    let n_lcm = blocks.iter().fold(1u64, |acc, b| lcm(acc, b.order as u64));
    Ok(FmoPartition { blocks, jbar_global, n_lcm })
}
