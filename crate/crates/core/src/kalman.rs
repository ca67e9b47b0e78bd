//! The randomized Riccati recursion, its finite-horizon compositions, and
//! estimators of the growth of the expected error covariance.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, pinv, CMatrix, Tolerances, C64};
use crate::model::{rng_for, sample_with, ChannelModel, ChannelSampler, ChannelTrace, FiniteMarkov, SystemModel};

/// Largest enumeration accepted by [`exhaustive_expectation`].
pub const EXHAUSTIVE_CAP: f64 = 1e6;

fn check_square(name: &str, m: &DMatrix<C64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
    }
    Ok(())
}

/// Symmetrizes and clips negative eigenvalues to zero.
fn psd_clean(m: DMatrix<C64>) -> DMatrix<C64> {
    let h = hermitian_part(&m);
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return h;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0)));
    hermitian_part(&(&eig.eigenvectors * d * eig.eigenvectors.adjoint()))
}

/// `A P A* + Q' − A P C*(C P C* + R')⁺ C P A*` with `Q' = qs·Q`, `R' = rs·R`.
fn riccati_raw(
    p: &DMatrix<C64>,
    c: &DMatrix<C64>,
    r: &DMatrix<C64>,
    a: &DMatrix<C64>,
    q: &DMatrix<C64>,
    noise_scale: f64,
    tol_rank: f64,
) -> DMatrix<C64> {
    let ap = a * p;
    let apa = &ap * a.adjoint();
    let base = apa + q.scale(noise_scale);
    if c.iter().all(|z| z.norm() == 0.0) {
        return base;
    }
    let pc = p * c.adjoint();
    let s = c * &pc + r.scale(noise_scale);
    let apc = a * &pc;
    let gain_term = &apc * pinv(&s, tol_rank) * apc.adjoint();
    base - gain_term
}

/// One Riccati update `ψ_γ(P)`. The innovation covariance is inverted with
/// the pseudo-inverse, so singular `CPC* + R` is allowed.
pub fn riccati_step(p: &CMatrix, c: &CMatrix, r: &CMatrix, a: &CMatrix, q: &CMatrix, tol: &Tolerances) -> Result<CMatrix> {
    let n = a.nrows();
    check_square("A", a, n)?;
    check_square("P", p, n)?;
    check_square("Q", q, n)?;
    if c.ncols() != n {
        return Err(Error::Dimension(format!("C has {} columns, expected {n}", c.ncols())));
    }
    check_square("R", r, c.nrows())?;
    let out = riccati_raw(p, c, r, a, q, 1.0, tol.tol_rank);
    CMatrix::new(psd_clean(out))
}

/// Covariance `e^{log_scale}·unit` with `‖unit‖_F = 1` (or zero).
#[derive(Clone, Debug)]
pub struct ScaledCov {
    pub log_scale: f64,
    pub unit: DMatrix<C64>,
}

impl ScaledCov {
    pub fn new(p: &DMatrix<C64>) -> Self {
        let norm = p.norm();
        if norm == 0.0 {
            return ScaledCov { log_scale: 0.0, unit: p.clone() };
        }
        ScaledCov { log_scale: norm.ln(), unit: p.unscale(norm) }
    }

    pub fn log_norm(&self) -> f64 {
        if self.unit.norm() == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_scale
        }
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        self.unit.scale(self.log_scale.exp())
    }

    /// `ψ_γ` in log-domain form: `ψ(e^s P̃) = e^s ψ̃(P̃)` where `ψ̃` uses
    /// `e^{−s}Q` and `e^{−s}R`.
    pub fn step(&self, c: &DMatrix<C64>, r: &DMatrix<C64>, a: &DMatrix<C64>, q: &DMatrix<C64>, tol_rank: f64) -> ScaledCov {
        let noise = (-self.log_scale).exp();
        let out = psd_clean(riccati_raw(&self.unit, c, r, a, q, noise, tol_rank));
        let norm = out.norm();
        if norm == 0.0 || !norm.is_finite() {
            return ScaledCov { log_scale: self.log_scale, unit: out };
        }
        ScaledCov { log_scale: self.log_scale + norm.ln(), unit: out.unscale(norm) }
    }
}

#[derive(Clone, Debug)]
pub struct CovTrajectory {
    pub t0: usize,
    pub p_seq: Vec<CMatrix>,
    pub gamma_used: ChannelTrace,
}

/// `Ψ(P0, Γ)` together with every intermediate `P_t`.
pub fn compose(p0: &CMatrix, trace: &ChannelTrace, system: &SystemModel, tol: &Tolerances) -> Result<CovTrajectory> {
    let mut p_seq = Vec::with_capacity(trace.len() + 1);
    p_seq.push(p0.clone());
    for &g in &trace.gamma {
        let pair = system.alphabet.get(g);
        let next = riccati_step(p_seq.last().expect("nonempty"), &pair.c, &pair.r, &system.a, &system.q, tol)?;
        p_seq.push(next);
    }
    Ok(CovTrajectory { t0: trace.t0, p_seq, gamma_used: trace.clone() })
}

/// `E Ψ(P0, Γ_{t0,T})` by summing over every sequence of length `T`.
pub fn exhaustive_expectation(
    system: &SystemModel,
    channel: &FiniteMarkov,
    p0: &CMatrix,
    t0: usize,
    horizon: usize,
    tol: &Tolerances,
) -> Result<CMatrix> {
    let d = system.alphabet.len();
    let count = (d as f64).powi(horizon as i32) * channel.num_states() as f64;
    if count > EXHAUSTIVE_CAP {
        return Err(Error::CapExceeded { what: "exhaustive expectation".into(), needed: count, cap: EXHAUSTIVE_CAP });
    }
    let mu = channel.phase_distribution(t0);
    let n = system.n();
    let mut total = DMatrix::<C64>::zeros(n, n);
    // Depth-first over sequences, carrying the forward vector and P.
    fn recurse(
        system: &SystemModel,
        channel: &FiniteMarkov,
        t: usize,
        left: usize,
        fwd: DVector<f64>,
        p: DMatrix<C64>,
        tol: &Tolerances,
        total: &mut DMatrix<C64>,
    ) {
        let mass = fwd.sum();
        if mass <= 0.0 {
            return;
        }
        if left == 0 {
            *total += p.scale(mass);
            return;
        }
        for g in 0..system.alphabet.len() {
            let mut emit = fwd.clone();
            for (e, v) in emit.iter_mut().enumerate() {
                if channel.emission[e] != g {
                    *v = 0.0;
                }
            }
            if emit.sum() <= 0.0 {
                continue;
            }
            let pair = system.alphabet.get(g);
            let next_p = psd_clean(riccati_raw(&p, &pair.c, &pair.r, &system.a, &system.q, 1.0, tol.tol_rank));
            let next_fwd = channel.kernel((t + 1) as i64).transpose() * emit;
            recurse(system, channel, t + 1, left - 1, next_fwd, next_p, tol, total);
        }
    }
    recurse(system, channel, t0, horizon, mu, p0.inner().clone(), tol, &mut total);
    CMatrix::new(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMode {
    /// Sample mean over independent traces.
    Plain,
    /// Interacting particle system weighted by covariance growth, which keeps
    /// sampling the rare long outages that dominate the mean.
    Particle,
}

#[derive(Clone, Debug)]
pub struct GrowthOptions {
    pub horizons: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub mode: GrowthMode,
    pub batches: usize,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            horizons: (1..=20).map(|k| 10 * k).collect(),
            trials: 2000,
            seed: 0,
            mode: GrowthMode::Particle,
            batches: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthEstimate {
    pub horizons: Vec<usize>,
    /// `log ‖Ê Ψ‖₂` per horizon.
    pub log_mean_norms: Vec<f64>,
    pub mean_norms: Vec<f64>,
    /// Standard error of each `‖Ê Ψ‖₂`.
    pub norm_se: Vec<f64>,
    /// Least-squares slope of `log ‖Ê Ψ‖` over the upper half of the grid.
    pub slope: f64,
    pub slope_se: f64,
    pub ci: [f64; 2],
    pub trials: usize,
    pub seed: u64,
    pub mode: GrowthMode,
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn upper_half_slope(horizons: &[usize], logs: &[f64]) -> f64 {
    let start = horizons.len() / 2;
    let start = start.min(horizons.len().saturating_sub(2));
    let x: Vec<f64> = horizons[start..].iter().map(|&h| h as f64).collect();
    ls_slope(&x, &logs[start..])
}

/// Weighted average of scaled matrices in log domain: `Σ w_i e^{s_i} M_i`
/// returned as `(log scale, matrix)`.
fn log_mix(items: &[(f64, f64, &DMatrix<C64>)], n: usize) -> (f64, DMatrix<C64>) {
    let top = items
        .iter()
        .filter(|(w, _, _)| *w > 0.0)
        .map(|(_, s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut acc = DMatrix::zeros(n, n);
    if !top.is_finite() {
        return (0.0, acc);
    }
    for (w, s, m) in items {
        if *w > 0.0 {
            acc += m.scale(w * (s - top).exp());
        }
    }
    (top, acc)
}

/// One horizon's estimate: `e^{log_scale}·matrix`.
type Snapshot = (f64, DMatrix<C64>);

fn particle_batch(
    system: &SystemModel,
    sampler: &ChannelSampler,
    p0: &DMatrix<C64>,
    t0: usize,
    horizons: &[usize],
    particles: usize,
    seed: u64,
    stream: u64,
    tol_rank: f64,
) -> Vec<Snapshot> {
    let mut rng = rng_for(seed, stream);
    let n = system.n();
    let start = ScaledCov::new(p0);
    let mut hidden: Vec<_> = (0..particles).map(|_| sampler.start(t0, &mut rng)).collect();
    let mut covs: Vec<ScaledCov> = vec![start.clone(); particles];
    let mut log_z = start.log_norm();
    let t_max = *horizons.last().unwrap_or(&0);
    let mut out = Vec::with_capacity(horizons.len());
    let mut next_h = 0;
    let (a, q) = (system.a.inner(), system.q.inner());
    for step in 0..t_max {
        let mut logg = Vec::with_capacity(particles);
        for (h, cov) in hidden.iter().zip(covs.iter_mut()) {
            let pair = system.alphabet.get(sampler.symbol(h));
            let next = cov.step(pair.c.inner(), pair.r.inner(), a, q, tol_rank);
            logg.push(next.log_norm() - cov.log_norm());
            *cov = next;
        }
        let top = logg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logg.iter().map(|l| (l - top).exp()).collect();
        let wsum: f64 = w.iter().sum();
        log_z += top + (wsum / particles as f64).ln();
        if next_h < horizons.len() && horizons[next_h] == step + 1 {
            let mut mean = DMatrix::zeros(n, n);
            for (wi, c) in w.iter().zip(&covs) {
                mean += c.unit.scale(wi / wsum);
            }
            out.push((log_z, mean));
            next_h += 1;
        }
        // Systematic resampling proportional to the growth potentials.
        let u0: f64 = rng.gen::<f64>() / particles as f64;
        let mut picks = Vec::with_capacity(particles);
        let mut cum = 0.0;
        let mut k = 0;
        for i in 0..particles {
            let target = (u0 + i as f64 / particles as f64) * wsum;
            while k + 1 < particles && cum + w[k] < target {
                cum += w[k];
                k += 1;
            }
            picks.push(k);
        }
        let old_h = hidden.clone();
        let old_c = covs.clone();
        for (i, &src) in picks.iter().enumerate() {
            hidden[i] = old_h[src].clone();
            covs[i] = old_c[src].clone();
        }
        for h in hidden.iter_mut() {
            sampler.advance(t0 + step + 1, h, &mut rng);
        }
    }
    out
}

/// Per-trial scaled covariances at each horizon.
fn plain_batch(
    system: &SystemModel,
    sampler: &ChannelSampler,
    p0: &DMatrix<C64>,
    t0: usize,
    horizons: &[usize],
    trials: usize,
    seed: u64,
    stream: u64,
    tol_rank: f64,
) -> Vec<Vec<ScaledCov>> {
    let mut rng = rng_for(seed, stream);
    let t_max = *horizons.last().unwrap_or(&0);
    let (a, q) = (system.a.inner(), system.q.inner());
    (0..trials)
        .map(|_| {
            let trace = sample_with(sampler, t0, t_max, seed, &mut rng);
            let mut cov = ScaledCov::new(p0);
            let mut snaps = Vec::with_capacity(horizons.len());
            let mut next_h = 0;
            for (s, &g) in trace.gamma.iter().enumerate() {
                let pair = system.alphabet.get(g);
                cov = cov.step(pair.c.inner(), pair.r.inner(), a, q, tol_rank);
                if next_h < horizons.len() && horizons[next_h] == s + 1 {
                    snaps.push(cov.clone());
                    next_h += 1;
                }
            }
            snaps
        })
        .collect()
}

fn op_norm_real(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn log_op_norm(s: &Snapshot) -> f64 {
    s.0 + op_norm_real(&s.1).ln()
}

/// Estimates `‖E Ψ(P0, Γ_{t0,T})‖` over the horizon grid and fits its
/// exponential growth rate.
pub fn estimate_growth(
    system: &SystemModel,
    channel: &ChannelModel,
    p0: &CMatrix,
    t0: usize,
    opts: &GrowthOptions,
    tol: &Tolerances,
) -> Result<GrowthEstimate> {
    if opts.trials < 100 {
        return Err(Error::InvalidArgument(format!("growth estimation needs at least 100 trials, got {}", opts.trials)));
    }
    let mut horizons = opts.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    horizons.retain(|&h| h > 0);
    if horizons.len() < 2 {
        return Err(Error::InvalidArgument("need at least two positive horizons".into()));
    }
    let batches = opts.batches.clamp(2, opts.trials / 10);
    let sampler = ChannelSampler::new(channel)?;
    let n = system.n();
    let sizes: Vec<usize> = (0..batches)
        .map(|b| opts.trials * (b + 1) / batches - opts.trials * b / batches)
        .collect();

    // Per batch, per horizon: (batch size, snapshot of the batch mean).
    let (batch_means, plain_trials): (Vec<Vec<Snapshot>>, Option<Vec<Vec<ScaledCov>>>) = match opts.mode {
        GrowthMode::Particle => {
            let means = sizes
                .par_iter()
                .enumerate()
                .map(|(b, &size)| {
                    particle_batch(system, &sampler, p0.inner(), t0, &horizons, size, opts.seed, b as u64, tol.tol_rank)
                })
                .collect();
            (means, None)
        }
        GrowthMode::Plain => {
            let per_batch: Vec<Vec<Vec<ScaledCov>>> = sizes
                .par_iter()
                .enumerate()
                .map(|(b, &size)| {
                    plain_batch(system, &sampler, p0.inner(), t0, &horizons, size, opts.seed, b as u64, tol.tol_rank)
                })
                .collect();
            let means = per_batch
                .iter()
                .map(|trials| {
                    (0..horizons.len())
                        .map(|h| {
                            let items: Vec<(f64, f64, &DMatrix<C64>)> = trials
                                .iter()
                                .map(|t| (1.0 / trials.len() as f64, t[h].log_scale, &t[h].unit))
                                .collect();
                            log_mix(&items, n)
                        })
                        .collect()
                })
                .collect();
            (means, Some(per_batch.into_iter().flatten().collect()))
        }
    };

    let total = opts.trials as f64;
    let pooled: Vec<Snapshot> = (0..horizons.len())
        .map(|h| {
            let items: Vec<(f64, f64, &DMatrix<C64>)> = batch_means
                .iter()
                .zip(&sizes)
                .map(|(bm, &size)| (size as f64 / total, bm[h].0, &bm[h].1))
                .collect();
            log_mix(&items, n)
        })
        .collect();
    let log_mean_norms: Vec<f64> = pooled.iter().map(log_op_norm).collect();
    let mean_norms: Vec<f64> = log_mean_norms.iter().map(|l| l.exp()).collect();
    let slope = upper_half_slope(&horizons, &log_mean_norms);

    let batch_slopes: Vec<f64> = batch_means
        .iter()
        .map(|bm| {
            let logs: Vec<f64> = bm.iter().map(log_op_norm).collect();
            upper_half_slope(&horizons, &logs)
        })
        .collect();
    let bmean = batch_slopes.iter().sum::<f64>() / batches as f64;
    let bvar = batch_slopes.iter().map(|s| (s - bmean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let slope_se = (bvar / batches as f64).sqrt();

    let norm_se = match &plain_trials {
        // Per-trial spread of the quadratic form along the top singular
        // direction of the pooled mean.
        Some(trials) => pooled
            .iter()
            .enumerate()
            .map(|(h, snap)| {
                let svd = snap.1.clone().svd(true, false);
                let k = svd.singular_values.imax();
                let v = svd.u.expect("requested U").column(k).into_owned();
                let vals: Vec<f64> = trials
                    .iter()
                    .map(|t| ((v.adjoint() * t[h].to_matrix() * &v)[(0, 0)]).re)
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
                (var / vals.len() as f64).sqrt()
            })
            .collect(),
        None => (0..horizons.len())
            .map(|h| {
                let norms: Vec<f64> = batch_means.iter().map(|bm| log_op_norm(&bm[h]).exp()).collect();
                let m = norms.iter().sum::<f64>() / batches as f64;
                let var = norms.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
                (var / batches as f64).sqrt()
            })
            .collect(),
    };

    Ok(GrowthEstimate {
        horizons,
        log_mean_norms,
        mean_norms,
        norm_se,
        slope,
        slope_se,
        ci: [slope - crate::phi::Z95 * slope_se, slope + crate::phi::Z95 * slope_se],
        trials: opts.trials,
        seed: opts.seed,
        mode: opts.mode,
    })
}

/// Co-simulated plant, measurements and one-step-ahead filter.
#[derive(Clone, Debug)]
pub struct FilterRun {
    pub states: Vec<DVector<C64>>,
    pub measurements: Vec<DVector<C64>>,
    /// `x̂_{t|t−1}` for `t = 0..=horizon`.
    pub estimates: Vec<DVector<C64>>,
    pub covariance: CovTrajectory,
}

fn noise_factor(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

/// Draws `L z` with `E[(Lz)(Lz)*] = L L*`; complex-proper when `complex`.
fn gaussian(factor: &DMatrix<C64>, complex: bool, rng: &mut impl Rng) -> DVector<C64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| {
        if complex {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            C64::new(s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
        } else {
            C64::new(rng.sample::<f64, _>(StandardNormal), 0.0)
        }
    });
    factor * z
}

fn is_complex(system: &SystemModel) -> bool {
    let any = |m: &CMatrix| m.iter().any(|z| z.im != 0.0);
    any(&system.a) || any(&system.q) || any(&system.p0) || system.alphabet.pairs().iter().any(|p| any(&p.c) || any(&p.r))
}

/// Simulates `x_{t+1} = A x_t + w_t`, `y_t = C_t x_t + v_t` under a sampled
/// measurement sequence, with the Kalman predictor running alongside.
pub fn simulate_filter(
    system: &SystemModel,
    channel: &ChannelModel,
    horizon: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<FilterRun> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let sampler = ChannelSampler::new(channel)?;
    let mut rng = rng_for(seed, 0);
    let trace = sample_with(&sampler, 0, horizon, seed, &mut rng);
    let mut noise_rng = rng_for(seed, 1);
    simulate_on_trace(system, &trace, tol, &mut noise_rng)
}

pub(crate) fn simulate_on_trace(
    system: &SystemModel,
    trace: &ChannelTrace,
    tol: &Tolerances,
    rng: &mut impl Rng,
) -> Result<FilterRun> {
    let complex = is_complex(system);
    let a = system.a.inner();
    let q_factor = noise_factor(system.q.inner());
    let mut x = gaussian(&noise_factor(system.p0.inner()), complex, rng);
    let mut xhat = DVector::<C64>::zeros(system.n());
    let mut p = system.p0.inner().clone();
    let mut states = vec![x.clone()];
    let mut estimates = vec![xhat.clone()];
    let mut measurements = Vec::with_capacity(trace.len());
    let mut p_seq = vec![system.p0.clone()];
    for &g in &trace.gamma {
        let pair = system.alphabet.get(g);
        let (c, r) = (pair.c.inner(), pair.r.inner());
        let y = c * &x + gaussian(&noise_factor(r), complex, rng);
        let pc = &p * c.adjoint();
        let s = c * &pc + r;
        let gain = a * &pc * pinv(&s, tol.tol_rank);
        xhat = a * &xhat + &gain * (&y - c * &xhat);
        p = psd_clean(riccati_raw(&p, c, r, a, system.q.inner(), 1.0, tol.tol_rank));
        x = a * &x + gaussian(&q_factor, complex, rng);
        measurements.push(y);
        states.push(x.clone());
        estimates.push(xhat.clone());
        p_seq.push(CMatrix::new(p.clone())?);
    }
    Ok(FilterRun {
        states,
        measurements,
        estimates,
        covariance: CovTrajectory { t0: trace.t0, p_seq, gamma_used: trace.clone() },
    })
}

/// Writes `t,norm_P,log_norm_P,trial_id` rows for each trajectory.
pub fn write_trajectory_csv<W: Write>(out: &mut W, trajectories: &[(usize, &CovTrajectory)]) -> std::io::Result<()> {
    writeln!(out, "t,norm_P,log_norm_P,trial_id")?;
    for (trial, traj) in trajectories {
        for (i, p) in traj.p_seq.iter().enumerate() {
            let norm = p.norm2();
            writeln!(out, "{},{:.12e},{:.12e},{}", traj.t0 + i, norm, norm.ln(), trial)?;
        }
    }
    Ok(())
}
