//! The per-block stability exponent `Φ_k` by three routes (the transition
//! operator `ς`, the single-bad-symbol closed form, and Monte Carlo rate
//! fitting) and the resulting stability verdict.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmo::{lcm, FmoBlock, FmoPartition};
use crate::linalg::{has_full_column_rank, nullspace, spectral_radius_real, Subspace, Tolerances, C64};
use crate::model::{
    chain_properness, rng_for, ChannelModel, ChannelSampler, DiagnosticsReport, FiniteMarkov, MeasurementAlphabet,
};
use crate::observability::{build_obs, KernelLattice};

/// Default cap on path-weight operations in [`build_sigma`].
pub const SIGMA_CAP: f64 = 1e7;
/// Bins with fewer survivors are dropped from the Monte Carlo fit.
pub const MIN_HITS: u64 = 20;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMethod {
    Exact,
    ClosedForm,
    MonteCarlo,
    /// `α = 0`: the block is always on the stable side.
    ZeroBlock,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiResult {
    pub block: usize,
    pub alpha_abs: f64,
    pub phi: f64,
    pub method: PhiMethod,
    /// `|α_k|²·Φ_k`.
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
    pub per_phase: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl PhiResult {
    fn new(block: &FmoBlock, phi: f64, method: PhiMethod, per_phase: Vec<f64>) -> Self {
        let alpha_abs = block.alpha.norm();
        let phi = phi.clamp(0.0, 1.0);
        PhiResult {
            block: block.index,
            alpha_abs,
            phi,
            method,
            margin: alpha_abs * alpha_abs * phi,
            ci: None,
            per_phase,
            flags: Vec::new(),
        }
    }

    pub fn zero_block(block: &FmoBlock) -> Self {
        PhiResult::new(block, 0.0, PhiMethod::ZeroBlock, Vec::new())
    }

    /// Margin interval: the CI scaled by `|α|²` when present.
    pub fn margin_range(&self) -> (f64, f64) {
        let a2 = self.alpha_abs * self.alpha_abs;
        match self.ci {
            Some([lo, hi]) => (a2 * lo, a2 * hi),
            None => (self.margin, self.margin),
        }
    }
}

/// `ς_t(i, j)` for every pair of lattice indices, over the finite hidden
/// states. `matrices[(i, j)][(e', e)]` is the probability, starting from
/// `ϱ_t = e`, of reaching `ϱ_{t+M} = e'` with `ψ(Γ_{t,M}) ∩ 𝒦_j = 𝒦_i`.
#[derive(Clone, Debug)]
pub struct SigmaOperator {
    pub block: usize,
    pub phase: usize,
    pub m: usize,
    pub lattice_size: usize,
    pub matrices: Vec<Vec<DMatrix<f64>>>,
}

impl SigmaOperator {
    pub fn get(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.matrices[i][j]
    }

    /// Largest deviation of `Σ_i ς(i, j)` from the `M`-step kernel, over `j`.
    pub fn conservation_defect(&self, channel: &FiniteMarkov) -> f64 {
        let n = channel.num_states();
        let mut step = DMatrix::<f64>::identity(n, n);
        for s in 1..=self.m {
            step = channel.kernel((self.phase + s) as i64).transpose() * step;
        }
        (0..self.lattice_size)
            .map(|j| {
                let total = (0..self.lattice_size).fold(DMatrix::zeros(n, n), |acc, i| acc + &self.matrices[i][j]);
                (total - &step).amax()
            })
            .fold(0.0, f64::max)
    }
}

/// `M = lcm(N_k, τ)`.
pub fn sigma_period(block: &FmoBlock, period: usize) -> usize {
    lcm(block.order as u64, period as u64) as usize
}

/// Builds `ς_t` by dynamic programming over (hidden state, accumulated
/// kernel, partial window).
pub fn build_sigma(
    block: &FmoBlock,
    lattice: &KernelLattice,
    channel: &FiniteMarkov,
    t: usize,
    cap: f64,
) -> Result<SigmaOperator> {
    let states = channel.num_states();
    let m = sigma_period(block, channel.period());
    let n_win = lattice.order;
    let nc = lattice.num_classes;
    let size = lattice.len();
    let partials = nc.pow((n_win - 1) as u32);
    let layer = states * size * partials;
    let needed = (states * m * layer * states) as f64;
    if needed > cap {
        return Err(Error::CapExceeded {
            what: format!("transition operator of block {} (M = {m}, {states} hidden states)", block.index),
            needed,
            cap,
        });
    }
    let class_of_state: Vec<usize> = channel.emission.iter().map(|&d| lattice.class_of[d]).collect();
    let idx = |h: usize, acc: usize, part: usize| (h * size + acc) * partials + part;

    let columns: Vec<Vec<(usize, usize, f64)>> = (0..states)
        .into_par_iter()
        .map(|start| {
            let mut cur = vec![0.0; layer];
            cur[idx(start, 0, 0)] = 1.0;
            for s in 0..m {
                let kernel = channel.kernel((t + s + 1) as i64);
                let closes = (s + 1) % n_win == 0;
                let mut next = vec![0.0; layer];
                for h in 0..states {
                    for acc in 0..size {
                        for part in 0..partials {
                            let w = cur[idx(h, acc, part)];
                            if w == 0.0 {
                                continue;
                            }
                            let code = part * nc + class_of_state[h];
                            let (acc2, part2) = if closes {
                                (lattice.meet(acc, lattice.psi_table[code]), 0)
                            } else {
                                (acc, code)
                            };
                            for h2 in 0..states {
                                let p = kernel[(h, h2)];
                                if p > 0.0 {
                                    next[idx(h2, acc2, part2)] += w * p;
                                }
                            }
                        }
                    }
                }
                cur = next;
            }
            let mut out = Vec::new();
            for h in 0..states {
                for acc in 0..size {
                    let w = cur[idx(h, acc, 0)];
                    if w > 0.0 {
                        out.push((h, acc, w));
                    }
                }
            }
            out
        })
        .collect();

    let mut matrices = vec![vec![DMatrix::zeros(states, states); size]; size];
    for (start, col) in columns.iter().enumerate() {
        for &(end, acc, w) in col {
            for (j, row) in lattice.meet_table[acc].iter().enumerate() {
                matrices[*row][j][(end, start)] += w;
            }
        }
    }
    Ok(SigmaOperator { block: block.index, phase: t, m, lattice_size: size, matrices })
}

fn restrict(m: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(support.len(), support.len(), |a, b| m[(support[a], support[b])])
}

/// `Φ = max_t max_{i<I} ρ(ς_t(i, i))^{1/M}`, with each `ς_t` restricted to
/// the hidden states reachable at phase `t`.
pub fn phi_exact(block: &FmoBlock, lattice: &KernelLattice, channel: &FiniteMarkov, cap: f64) -> Result<PhiResult> {
    let tau = channel.period();
    let mut per_phase = Vec::with_capacity(tau);

    for t in 0..tau {
        let sigma = build_sigma(block, lattice, channel, t, cap)?;
        let mu = channel.phase_distribution(t);
        let support: Vec<usize> = (0..mu.len()).filter(|&e| mu[e] > 0.0).collect();
        let best = (0..lattice.bottom())
            .map(|i| spectral_radius_real(&restrict(sigma.get(i, i), &support)))
            .fold(0.0, f64::max);
        per_phase.push(best.powf(1.0 / sigma.m as f64));
    }
    let phi = per_phase.iter().copied().fold(0.0, f64::max);
    let mut result = PhiResult::new(block, phi, PhiMethod::Exact, per_phase);
    if !chain_properness(channel).0 {
        result.flags.push("chain_not_proper".into());
    }
    Ok(result)
}

/// Diagnostics of the closed-form detector.
#[derive(Clone, Debug, Serialize)]
pub struct ClosedFormCheck {
    /// Class indices whose constant sequence leaves the block unobservable.
    pub non_observable: Vec<usize>,
    /// Every other class has full column rank on its own.
    pub others_fcr: bool,
    /// The unobservable class is paired with a single noise covariance.
    pub r_unique: bool,
}

fn closed_form_check(block: &FmoBlock, alphabet: &MeasurementAlphabet, tol: &Tolerances) -> Result<ClosedFormCheck> {
    let n = block.dim();
    let mut non_observable = Vec::new();
    let mut others_fcr = true;
    for class in 0..block.num_classes() {
        let rep = block.class_reps[class];
        let o = build_obs(block, &vec![rep; n])?;
        if !has_full_column_rank(&o.matrix, tol) {
            non_observable.push(class);
        } else if !has_full_column_rank(block.class_matrix(class).inner(), tol) {
            others_fcr = false;
        }
    }
    let r_unique = match non_observable.as_slice() {
        [bad] => {
            let members: Vec<usize> = (0..block.c_class.len()).filter(|&d| block.c_class[d] == *bad).collect();
            members.windows(2).all(|w| alphabet.get(w[0]).r == alphabet.get(w[1]).r)
        }
        _ => false,
    };
    Ok(ClosedFormCheck { non_observable, others_fcr, r_unique })
}

/// Limiting conditional probabilities `ℙ(symbol ∈ bad at phase t | bad at all
/// earlier instants)`, one per phase, from the all-bad filter run to
/// convergence.
pub fn all_bad_conditionals(channel: &FiniteMarkov, bad: &dyn Fn(usize) -> bool) -> Vec<f64> {
    let tau = channel.period();
    let mask: Vec<bool> = channel.emission.iter().map(|&d| bad(d)).collect();
    let mut v: DVector<f64> = channel.phase_distribution(0);
    let mut cond = vec![0.0; tau];
    let mut last_log = f64::NAN;
    let mut history: Vec<f64> = Vec::new();
    for _period in 0..200_000 {
        let mut log_prod = 0.0;
        for (t, c) in cond.iter_mut().enumerate() {
            let before = v.sum();
            for (e, x) in v.iter_mut().enumerate() {
                if !mask[e] {
                    *x = 0.0;
                }
            }
            let after = v.sum();
            if before <= 0.0 || after <= 0.0 {
                *c = 0.0;
                return cond;
            }
            *c = after / before;
            log_prod += c.ln();
            v /= after;
            v = channel.kernel((t + 1) as i64).transpose() * v;
        }
        if (log_prod - last_log).abs() <= 1e-15 * log_prod.abs().max(1.0) {
            return cond;
        }
        last_log = log_prod;
        history.push(log_prod);
    }
    // No convergence (oscillating filter): use the long-run average rate
    // with the last period's shape.
    let tail = &history[history.len() / 2..];
    let avg = tail.iter().sum::<f64>() / tail.len() as f64;
    let shift = (avg - last_log) / tau as f64;
    cond.iter().map(|c| c * shift.exp()).collect()
}

/// Closed form `Φ = ∏_{t<τ} ℙ(C_t = C^α | C_s = C^α, s < t)^{1/τ}` when
/// exactly one class of block measurements is unobservable and every other
/// class has full column rank. Returns `None` otherwise.
pub fn phi_closed_form(
    block: &FmoBlock,
    alphabet: &MeasurementAlphabet,
    channel: &FiniteMarkov,
    tol: &Tolerances,
) -> Result<Option<PhiResult>> {
    let check = closed_form_check(block, alphabet, tol)?;
    let [bad] = check.non_observable.as_slice() else {
        return Ok(None);
    };
    if !check.others_fcr {
        return Ok(None);
    }
    let bad = *bad;
    let cond = all_bad_conditionals(channel, &|d| block.c_class[d] == bad);
    let tau = cond.len() as f64;
    let phi = cond.iter().map(|c| c.powf(1.0 / tau)).product::<f64>();
    let mut result = PhiResult::new(block, phi, PhiMethod::ClosedForm, vec![phi]);
    result.flags.push(format!(
        "conditionals=[{}]",
        cond.iter().map(|c| format!("{c:.12}")).collect::<Vec<_>>().join(", ")
    ));
    if !check.r_unique {
        result.flags.push("unobservable_class_has_several_r".into());
    }
    Ok(Some(result))
}

#[derive(Clone, Debug)]
pub struct MonteCarloOptions {
    pub trials: usize,
    /// Horizons `T`; defaults to `{M, 2M, …, 40M}`.
    pub t_grid: Option<Vec<usize>>,
    pub seed: u64,
    pub min_hits: u64,
    pub chunks: usize,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions { trials: 100_000, t_grid: None, seed: 0, min_hits: MIN_HITS, chunks: 64 }
    }
}

#[derive(Clone)]
enum ClassKind {
    Zero,
    Observing,
    Partial(DMatrix<C64>),
}

/// Survival counts `#{trials : 𝒩^{t,T}}` for every `T` in `grid`.
fn survival_counts(
    block: &FmoBlock,
    sampler: &ChannelSampler,
    t: usize,
    grid: &[usize],
    opts: &MonteCarloOptions,
    stream_base: u64,
    tol: &Tolerances,
) -> Vec<u64> {
    let kinds: Vec<ClassKind> = (0..block.num_classes())
        .map(|c| {
            let m = block.class_matrix(c);
            if m.is_zero() {
                ClassKind::Zero
            } else if has_full_column_rank(m.inner(), tol) {
                ClassKind::Observing
            } else {
                ClassKind::Partial(m.inner().clone())
            }
        })
        .collect();
    let n = block.dim();
    let scaled_a = block.a.inner().unscale(block.alpha.norm());
    let t_max = *grid.last().unwrap_or(&0);
    let chunks = opts.chunks.max(1).min(opts.trials.max(1));
    let per_chunk: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = opts.trials * chunk / chunks;
            let hi = opts.trials * (chunk + 1) / chunks;
            let mut rng = rng_for(opts.seed, stream_base + chunk as u64);
            let mut counts = vec![0u64; grid.len()];
            for _ in lo..hi {
                let mut state = sampler.start(t, &mut rng);
                let mut basis = DMatrix::<C64>::identity(n, n);
                let mut hit = usize::MAX;
                for s in 0..t_max {
                    if s > 0 {
                        sampler.advance(t + s, &mut state, &mut rng);
                    }
                    let class = block.c_class[sampler.symbol(&state)];
                    match &kinds[class] {
                        ClassKind::Zero => {}
                        ClassKind::Observing => basis = DMatrix::zeros(n, 0),
                        ClassKind::Partial(c) => {
                            let k = nullspace(&(c * &basis), tol);
                            basis = &basis * k.basis();
                        }
                    }
                    if basis.ncols() == 0 {
                        hit = s + 1;
                        break;
                    }
                    basis = Subspace::span(&(&scaled_a * &basis), tol).basis().clone();
                }
                for (g, &tg) in grid.iter().enumerate() {
                    if hit > tg {
                        counts[g] += 1;
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; grid.len()];
    for c in per_chunk {
        for (a, b) in total.iter_mut().zip(c) {
            *a += b;
        }
    }
    total
}

/// Per-phase rate fit: `(Φ̂, log-slope SE, bins used)`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub phi: f64,
    pub slope: f64,
    pub se: f64,
    pub bins: usize,
    pub ci: [f64; 2],
}

/// Least-squares slope of `log(n_T / trials)` against `T` over the leading
/// bins with at least `min_hits` survivors. The standard error comes from
/// the delta method on the nested survival ratios.
pub fn fit_rate(grid: &[usize], counts: &[u64], trials: u64, min_hits: u64) -> Option<RateFit> {
    let used = counts.iter().take_while(|&&c| c >= min_hits).count();
    if used == 0 {
        return None;
    }
    let ts: Vec<f64> = grid[..used].iter().map(|&t| t as f64).collect();
    let logs: Vec<f64> = counts[..used].iter().map(|&c| (c as f64 / trials as f64).ln()).collect();
    let (slope, se) = if used == 1 {
        let p = counts[0] as f64 / trials as f64;
        let var = (1.0 - p) / (trials as f64 * p);
        (logs[0] / ts[0], var.sqrt() / ts[0])
    } else {
        let mean_t = ts.iter().sum::<f64>() / used as f64;
        let sxx: f64 = ts.iter().map(|t| (t - mean_t).powi(2)).sum();
        let w: Vec<f64> = ts.iter().map(|t| (t - mean_t) / sxx).collect();
        let slope = w.iter().zip(&logs).map(|(a, b)| a * b).sum::<f64>();
        // log p̂_m = Σ_{l≤m} log r_l with r_l = n_l / n_{l−1}, n_0 = trials.
        let mut var = 0.0;
        let mut prev = trials as f64;
        for l in 0..used {
            let big_w: f64 = w[l..].iter().sum();
            let n_l = counts[l] as f64;
            let r = n_l / prev;
            var += big_w * big_w * (1.0 - r) / (prev * r);
            prev = n_l;
        }
        (slope, var.sqrt())
    };
    let phi = slope.exp();
    Some(RateFit {
        phi,
        slope,
        se,
        bins: used,
        ci: [(slope - Z95 * se).exp(), (slope + Z95 * se).exp()],
    })
}

/// Monte Carlo `Φ̂`: per phase, the decay rate of the probability that the
/// block observability matrix still lacks full column rank.
pub fn phi_monte_carlo(
    block: &FmoBlock,
    channel: &ChannelModel,
    opts: &MonteCarloOptions,
    tol: &Tolerances,
) -> Result<PhiResult> {
    if opts.trials < 1000 {
        return Err(Error::InvalidArgument(format!("Monte Carlo needs at least 1000 trials, got {}", opts.trials)));
    }
    let tau = channel.period();
    let m = sigma_period(block, tau);
    let grid = match &opts.t_grid {
        Some(g) => {
            let mut g = g.clone();
            g.sort_unstable();
            g.dedup();
            g.retain(|&t| t > 0);
            g
        }
        None => (1..=40).map(|k| k * m).collect(),
    };
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty horizon grid".into()));
    }
    let sampler = ChannelSampler::new(channel)?;
    let mut per_phase = Vec::with_capacity(tau);
    let mut fits = Vec::with_capacity(tau);
    for t in 0..tau {
        let stream_base = ((block.index as u64) << 40) | ((t as u64) << 20);
        let counts = survival_counts(block, &sampler, t, &grid, opts, stream_base, tol);
        let fit = fit_rate(&grid, &counts, opts.trials as u64, opts.min_hits);
        per_phase.push(fit.as_ref().map_or(0.0, |f| f.phi.min(1.0)));
        fits.push((fit, counts[0]));
    }
    let phi = per_phase.iter().copied().fold(0.0, f64::max);
    let mut result = PhiResult::new(block, phi, PhiMethod::MonteCarlo, per_phase);
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    for (t, (fit, first)) in fits.iter().enumerate() {
        match fit {
            Some(f) => {
                lo = lo.max(f.ci[0]);
                hi = hi.max(f.ci[1]);
                if f.bins < 2 {
                    result.flags.push(format!("phase {t}: single bin"));
                }
            }
            None => {
                // Rule-of-three upper bound from the first horizon.
                let upper = ((*first as f64 + 3.0) / opts.trials as f64).powf(1.0 / grid[0] as f64);
                hi = hi.max(upper);
                result.flags.push(format!("phase {t}: fewer than {} survivors at T = {}", opts.min_hits, grid[0]));
            }
        }
    }
    result.ci = Some([lo.min(1.0), hi.min(1.0)]);
    Ok(result)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub blocks: Vec<PhiResult>,
    pub verdict: Verdict,
    pub eps_margin: f64,
    pub diagnostics: DiagnosticsReport,
}

/// Stable iff every margin is below `1 − eps`; unstable iff some margin
/// exceeds `1 + eps`. Monte Carlo results use their confidence interval.
pub fn verdict(
    partition: &FmoPartition,
    results: &[PhiResult],
    eps_margin: f64,
    diagnostics: DiagnosticsReport,
) -> Result<StabilityReport> {
    let mut blocks = Vec::with_capacity(partition.blocks.len());
    for b in &partition.blocks {
        match results.iter().find(|r| r.block == b.index) {
            Some(r) => blocks.push(r.clone()),
            None if b.is_zero_block() => blocks.push(PhiResult::zero_block(b)),
            None => return Err(Error::MissingBlock(b.index)),
        }
    }
    let all_below = blocks.iter().all(|r| r.margin_range().1 < 1.0 - eps_margin);
    let some_above = blocks.iter().any(|r| r.margin_range().0 > 1.0 + eps_margin);
    let verdict = if all_below {
        Verdict::Stable
    } else if some_above {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityReport { blocks, verdict, eps_margin, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fmo::partition;
    use crate::linalg::CMatrix;
    use crate::model::{IidChannel, MeasurementPair, SystemModel};
    use crate::observability::{build_lattice, LATTICE_CAP};
    use approx::assert_abs_diff_eq;

    fn scalar(a: f64, cs: &[f64]) -> (SystemModel, FmoPartition) {
        let one = CMatrix::from_real_rows(&[&[1.0]]).unwrap();
        let alphabet = MeasurementAlphabet::new(
            cs.iter()
                .map(|&c| MeasurementPair { label: String::new(), c: CMatrix::from_real_rows(&[&[c]]).unwrap(), r: one.clone() })
                .collect(),
        )
        .unwrap();
        let sys = SystemModel::new(CMatrix::from_real_rows(&[&[a]]).unwrap(), one.clone(), one, alphabet).unwrap();
        let p = partition(&sys, &Tolerances::default()).unwrap();
        (sys, p)
    }

    fn iid(p_loss: f64) -> FiniteMarkov {
        ChannelModel::Iid(IidChannel { probs: vec![vec![p_loss, 1.0 - p_loss]] }).to_finite().unwrap()
    }

    #[test]
    fn scalar_iid_exact_equals_loss_probability() {
        let (_, p) = scalar(2.0, &[0.0, 1.0]);
        let l = build_lattice(&p.blocks[0], &Tolerances::default(), LATTICE_CAP).unwrap();
        for loss in [0.1, 0.3, 0.7] {
            let r = phi_exact(&p.blocks[0], &l, &iid(loss), SIGMA_CAP).unwrap();
            assert_abs_diff_eq!(r.phi, loss, epsilon = 1e-12);
            assert_abs_diff_eq!(r.margin, 4.0 * loss, epsilon = 1e-12);
        }
    }

    #[test]
    fn always_observing_channel_has_zero_phi() {
        let (_, p) = scalar(2.0, &[1.0]);
        let l = build_lattice(&p.blocks[0], &Tolerances::default(), LATTICE_CAP).unwrap();
        let ch = FiniteMarkov::constant(0);
        let s = build_sigma(&p.blocks[0], &l, &ch, 0, SIGMA_CAP).unwrap();
        assert_eq!(s.get(0, 0)[(0, 0)], 0.0);
        assert_eq!(s.get(1, 0)[(0, 0)], 1.0);
        assert_eq!(phi_exact(&p.blocks[0], &l, &ch, SIGMA_CAP).unwrap().phi, 0.0);
    }

    #[test]
    fn closed_form_matches_exact_scalar() {
        let (sys, p) = scalar(1.5, &[0.0, 1.0]);
        let tol = Tolerances::default();
        let l = build_lattice(&p.blocks[0], &tol, LATTICE_CAP).unwrap();
        let ch = iid(0.35);
        let closed = phi_closed_form(&p.blocks[0], &sys.alphabet, &ch, &tol).unwrap().unwrap();
        let exact = phi_exact(&p.blocks[0], &l, &ch, SIGMA_CAP).unwrap();
        assert_abs_diff_eq!(closed.phi, exact.phi, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_declines_two_unobservable_classes() {
        let a = CMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 2.0]]).unwrap();
        let cs = [
            CMatrix::from_real_rows(&[&[1.0, 0.0]]).unwrap(),
            CMatrix::from_real_rows(&[&[0.0, 1.0]]).unwrap(),
        ];
        let alphabet = MeasurementAlphabet::new(
            cs.iter()
                .map(|c| MeasurementPair { label: String::new(), c: c.clone(), r: CMatrix::identity(1) })
                .collect(),
        )
        .unwrap();
        let sys = SystemModel::new(a, CMatrix::identity(2), CMatrix::identity(2), alphabet).unwrap();
        let tol = Tolerances::default();
        let p = partition(&sys, &tol).unwrap();
        let ch = ChannelModel::Iid(IidChannel { probs: vec![vec![0.5, 0.5]] }).to_finite().unwrap();
        assert!(phi_closed_form(&p.blocks[0], &sys.alphabet, &ch, &tol).unwrap().is_none());
    }

    #[test]
    fn sigma_cap_is_enforced() {
        let (_, p) = scalar(2.0, &[0.0, 1.0]);
        let l = build_lattice(&p.blocks[0], &Tolerances::default(), LATTICE_CAP).unwrap();
        assert!(matches!(build_sigma(&p.blocks[0], &l, &iid(0.5), 0, 1.0), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn fit_rate_recovers_exact_geometric_counts() {
        let grid: Vec<usize> = (1..=6).collect();
        let trials = 1_000_000u64;
        let counts: Vec<u64> = grid.iter().map(|&t| (trials as f64 * 0.3f64.powi(t as i32)).round() as u64).collect();
        let fit = fit_rate(&grid, &counts, trials, 20).unwrap();
        assert!((fit.phi - 0.3).abs() < 1e-3);
        assert!(fit.ci[0] < 0.3 && 0.3 < fit.ci[1]);
        assert!(fit_rate(&grid, &[5, 1, 0, 0, 0, 0], trials, 20).is_none());
    }

    #[test]
    fn monte_carlo_scalar_iid() {
        let (_, p) = scalar(2.0, &[0.0, 1.0]);
        let ch = ChannelModel::Iid(IidChannel { probs: vec![vec![0.3, 0.7]] });
        let opts = MonteCarloOptions { trials: 50_000, seed: 1, ..Default::default() };
        let r = phi_monte_carlo(&p.blocks[0], &ch, &opts, &Tolerances::default()).unwrap();
        let [lo, hi] = r.ci.unwrap();
        assert!(lo < 0.3 && 0.3 < hi, "{lo} {hi}");
        assert!((r.phi - 0.3).abs() < 0.02);
    }

    #[test]
    fn monte_carlo_always_observed_reports_zero() {
        let (_, p) = scalar(2.0, &[1.0]);
        let ch = ChannelModel::FiniteMarkov(FiniteMarkov::constant(0));
        let opts = MonteCarloOptions { trials: 2000, seed: 1, ..Default::default() };
        let r = phi_monte_carlo(&p.blocks[0], &ch, &opts, &Tolerances::default()).unwrap();
        assert_eq!(r.phi, 0.0);
        assert!(!r.flags.is_empty());
        assert!(phi_monte_carlo(&p.blocks[0], &ch, &MonteCarloOptions { trials: 10, ..opts }, &Tolerances::default()).is_err());
    }

    #[test]
    fn verdict_bands() {
        let (_, p) = scalar(2.0, &[0.0, 1.0]);
        let b = &p.blocks[0];
        let mk = |phi: f64| PhiResult::new(b, phi, PhiMethod::Exact, vec![phi]);
        let v = |phi| verdict(&p, &[mk(phi)], 1e-6, DiagnosticsReport::default()).unwrap().verdict;
        assert_eq!(v(0.2), Verdict::Stable);
        assert_eq!(v(0.3), Verdict::Unstable);
        assert_eq!(v(0.25), Verdict::Inconclusive);
        assert!(matches!(verdict(&p, &[], 1e-6, DiagnosticsReport::default()), Err(Error::MissingBlock(0))));
    }
}
