//! Multi-sensor systems with scheduling and packet loss, aggregated into a
//! single random-measurement system.
//!
//! At every instant `R` slots are filled by distinct sensors (the schedule)
//! and each slot's packet is received or lost (the loss pattern). The
//! aggregated measurement matrix stacks the selected sensors' rows, zeroing
//! those of lost slots, so `p = R·p_s` is constant.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fmo::{cfmo, lcm};
use crate::linalg::{nullspace, CMatrix, Tolerances, C64};
use crate::model::{
    jordan_blocks, ChannelModel, FiniteMarkov, IidChannel, MeasurementAlphabet, MeasurementPair, SystemModel,
};

/// Condition number of the eigenvector matrix above which a warning is
/// attached to the aggregation.
pub const CONDITION_WARNING: f64 = 1e8;

#[derive(Clone, Debug)]
pub struct Sensor {
    pub h: CMatrix,
    pub e: CMatrix,
}

#[derive(Clone, Debug)]
pub struct SensorSuite {
    pub f: CMatrix,
    pub n_cov: CMatrix,
    pub p0: CMatrix,
    pub sensors: Vec<Sensor>,
    /// Transmission slots per instant.
    pub slots: usize,
}

/// Which sensor fills each slot.
#[derive(Clone, Debug)]
pub enum Schedule {
    /// `selections[t mod τ][slot]`.
    TimeBased(Vec<Vec<usize>>),
    /// `channel` emits an index into `choices`.
    Random { choices: Vec<Vec<usize>>, channel: ChannelModel },
}

/// Loss process: `channel` emits an index into `patterns`; `patterns[i][r]`
/// is true when slot `r` is received.
#[derive(Clone, Debug)]
pub struct LossModel {
    pub patterns: Vec<Vec<bool>>,
    pub channel: ChannelModel,
}

impl LossModel {
    pub fn lossless(slots: usize) -> Self {
        LossModel { patterns: vec![vec![true; slots]], channel: ChannelModel::FiniteMarkov(FiniteMarkov::constant(0)) }
    }

    /// All slots share one loss event; `channel` emits 0 for lost and 1 for
    /// received.
    pub fn shared(slots: usize, channel: ChannelModel) -> Self {
        LossModel { patterns: vec![vec![false; slots], vec![true; slots]], channel }
    }

    /// Independent losses with probability `p_loss` in every slot.
    pub fn independent(slots: usize, p_loss: f64) -> Self {
        let count = 1usize << slots;
        let patterns: Vec<Vec<bool>> = (0..count).map(|code| (0..slots).map(|r| code >> r & 1 == 1).collect()).collect();
        let probs = patterns
            .iter()
            .map(|p| p.iter().map(|&rx| if rx { 1.0 - p_loss } else { p_loss }).product())
            .collect();
        LossModel { patterns, channel: ChannelModel::Iid(IidChannel { probs: vec![probs] }) }
    }
}

#[derive(Clone, Debug)]
pub struct SchedulePlan {
    pub schedule: Schedule,
    pub loss: LossModel,
}

#[derive(Clone, Debug)]
pub struct Aggregated {
    pub system: SystemModel,
    pub channel: ChannelModel,
    /// `V⁻¹`: columns are the eigenvectors used for the Jordan transform
    /// (identity when `F` was already in Jordan form).
    pub v_inv: CMatrix,
    pub warnings: Vec<String>,
}

fn finite(channel: &ChannelModel, what: &str) -> Result<FiniteMarkov> {
    channel
        .to_finite()
        .ok_or_else(|| Error::InvalidModel(format!("{what} channel must be finite-state")))
}

fn cyclic(period: usize) -> FiniteMarkov {
    let kernel = DMatrix::from_fn(period, period, |i, j| if j == (i + 1) % period { 1.0 } else { 0.0 });
    let mut mu0 = DVector::zeros(period);
    mu0[0] = 1.0;
    // One kernel per phase: the phase-0 start law is only invariant under
    // the full cycle.
    FiniteMarkov { kernels: vec![kernel; period], emission: (0..period).collect(), mu0 }
}

/// Eigen-decomposition `F = W D W⁻¹` with `D` ordered by modulus and with
/// eigenvalues of a common multiplicative order adjacent.
fn diagonalize(f: &CMatrix, tol: &Tolerances) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = f.nrows();
    let schur = nalgebra::Schur::new(f.inner().clone());
    let raw: Vec<C64> = schur.eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_else(|| {
        let (_, t) = schur.clone().unpack();
        (0..n).map(|i| t[(i, i)]).collect()
    });
    let scale = f.norm2().max(1e-300);
    let mut distinct: Vec<C64> = Vec::new();
    for v in raw {
        if !distinct.iter().any(|d| (d - v).norm() <= 1e-8 * scale) {
            distinct.push(v);
        }
    }
    // Order: modulus descending, then group eigenvalues sharing a finite
    // multiplicative order.
    distinct.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut ordered: Vec<C64> = Vec::new();
    let mut used = vec![false; distinct.len()];
    for i in 0..distinct.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        ordered.push(distinct[i]);
        for j in i + 1..distinct.len() {
            if !used[j]
                && distinct[i].norm() > 0.0
                && distinct[j].norm() > 0.0
                && cfmo(&[distinct[i], distinct[j]], tol)?.is_some()
            {
                used[j] = true;
                ordered.push(distinct[j]);
            }
        }
    }
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for lambda in ordered {
        let shifted = f.inner() - DMatrix::identity(n, n) * lambda;
        let loose = Tolerances { tol_rank: 1e-8, ..*tol };
        let k = nullspace(&shifted, &loose);
        for col in k.basis().column_iter() {
            values.push(lambda);
            vectors.push(col.into_owned());
        }
    }
    if vectors.len() != n {
        return Err(Error::InvalidModel(
            "F is not diagonalizable; supply it in Jordan form with matching sensor matrices".into(),
        ));
    }
    Ok((values, DMatrix::from_columns(&vectors)))
}

fn entry_key(c: &DMatrix<C64>, r: &DMatrix<C64>) -> String {
    let fmt = |z: &C64| format!("{:.11e},{:.11e};", z.re + 0.0, z.im + 0.0);
    c.iter().chain(r.iter()).map(fmt).collect()
}

/// Builds the aggregated system and the product channel over
/// (schedule state, loss state).
pub fn aggregate(suite: &SensorSuite, plan: &SchedulePlan, tol: &Tolerances) -> Result<Aggregated> {
    let n = suite.f.nrows();
    if !suite.f.is_square() {
        return Err(Error::Dimension("F must be square".into()));
    }
    for (name, m) in [("N", &suite.n_cov), ("P0", &suite.p0)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension(format!("{name} must be {n}x{n}")));
        }
    }
    let Some(first) = suite.sensors.first() else {
        return Err(Error::InvalidModel("sensor suite is empty".into()));
    };
    let ps = first.h.nrows();
    for (s, sensor) in suite.sensors.iter().enumerate() {
        if sensor.h.nrows() != ps || sensor.h.ncols() != n {
            return Err(Error::Dimension(format!("H of sensor {s} must be {ps}x{n}")));
        }
        if sensor.e.nrows() != ps || sensor.e.ncols() != ps {
            return Err(Error::Dimension(format!("E of sensor {s} must be {ps}x{ps}")));
        }
        if !sensor.e.is_psd(1e-10) {
            return Err(Error::InvalidModel(format!("E of sensor {s} is not Hermitian PSD")));
        }
    }
    let slots = suite.slots;
    if slots == 0 {
        return Err(Error::InvalidModel("at least one slot is required".into()));
    }
    let check_selection = |sel: &Vec<usize>| -> Result<()> {
        if sel.len() != slots {
            return Err(Error::InvalidModel(format!("a selection names {} sensors for {slots} slots", sel.len())));
        }
        for (i, &s) in sel.iter().enumerate() {
            if s >= suite.sensors.len() {
                return Err(Error::InvalidModel(format!("selection refers to sensor {s}")));
            }
            if sel[..i].contains(&s) {
                return Err(Error::InvalidModel(format!("sensor {s} selected twice in one instant")));
            }
        }
        Ok(())
    };
    let (choices, sched) = match &plan.schedule {
        Schedule::TimeBased(list) => {
            if list.is_empty() {
                return Err(Error::InvalidModel("time-based schedule is empty".into()));
            }
            (list.clone(), cyclic(list.len()))
        }
        Schedule::Random { choices, channel } => (choices.clone(), finite(channel, "schedule")?),
    };
    for sel in &choices {
        check_selection(sel)?;
    }
    if sched.emission.iter().any(|&e| e >= choices.len()) {
        return Err(Error::InvalidModel("schedule channel emits an unknown selection".into()));
    }
    let loss = finite(&plan.loss.channel, "loss")?;
    for p in &plan.loss.patterns {
        if p.len() != slots {
            return Err(Error::InvalidModel(format!("a loss pattern has {} entries for {slots} slots", p.len())));
        }
    }
    if loss.emission.iter().any(|&e| e >= plan.loss.patterns.len()) {
        return Err(Error::InvalidModel("loss channel emits an unknown pattern".into()));
    }

    let mut warnings = Vec::new();
    let (a, w) = if jordan_blocks(&suite.f).is_ok() {
        (suite.f.inner().clone(), DMatrix::identity(n, n))
    } else {
        let (values, w) = diagonalize(&suite.f, tol)?;
        let svd = w.clone().svd(false, false);
        let cond = svd.singular_values.max() / svd.singular_values.min();
        if cond > CONDITION_WARNING {
            warnings.push(format!("eigenvector matrix condition number {cond:.3e} exceeds {CONDITION_WARNING:e}"));
        }
        (DMatrix::from_diagonal(&DVector::from_vec(values)), w)
    };
    let w_inv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidModel("eigenvector matrix is singular".into()))?;
    let q = &w_inv * suite.n_cov.inner() * w_inv.adjoint();
    let p0 = &w_inv * suite.p0.inner() * w_inv.adjoint();
    let h_t: Vec<DMatrix<C64>> = suite.sensors.iter().map(|s| s.h.inner() * &w).collect();

    let p = slots * ps;
    let states_s = sched.num_states();
    let states_l = loss.num_states();
    let mut pairs: Vec<MeasurementPair> = Vec::new();
    let mut index: HashMap<String, Vec<usize>> = HashMap::new();
    let mut emission = Vec::with_capacity(states_s * states_l);
    for s in 0..states_s {
        for l in 0..states_l {
            let sel = &choices[sched.emission[s]];
            let pattern = &plan.loss.patterns[loss.emission[l]];
            let mut c = DMatrix::<C64>::zeros(p, n);
            let mut r = DMatrix::<C64>::zeros(p, p);
            for (slot, (&sensor, &rx)) in sel.iter().zip(pattern).enumerate() {
                if rx {
                    c.rows_mut(slot * ps, ps).copy_from(&h_t[sensor]);
                    r.view_mut((slot * ps, slot * ps), (ps, ps)).copy_from(suite.sensors[sensor].e.inner());
                }
            }
            let key = entry_key(&c, &r);
            let bucket = index.entry(key).or_default();
            let found = bucket.iter().copied().find(|&d| {
                let e = &pairs[d];
                (e.c.inner() - &c).camax() <= 1e-12 * c.camax().max(1.0) && (e.r.inner() - &r).camax() <= 1e-12 * r.camax().max(1.0)
            });
            let d = match found {
                Some(d) => d,
                None => {
                    let label = sel
                        .iter()
                        .zip(pattern)
                        .map(|(s, &rx)| if rx { format!("s{s}") } else { format!("s{s}-lost") })
                        .collect::<Vec<_>>()
                        .join("+");
                    pairs.push(MeasurementPair { label, c: CMatrix::new(c)?, r: CMatrix::new(r)? });
                    bucket.push(pairs.len() - 1);
                    pairs.len() - 1
                }
            };
            emission.push(d);
        }
    }

    let tau = lcm(sched.period() as u64, loss.period() as u64) as usize;
    let kernels = (0..tau)
        .map(|k| sched.kernel(k as i64 + 1).kronecker(loss.kernel(k as i64 + 1)))
        .collect();
    let mu0 = sched.mu0.kronecker(&loss.mu0);
    let channel = ChannelModel::FiniteMarkov(FiniteMarkov::new(kernels, emission, mu0)?);
    let system = SystemModel::new(
        CMatrix::new(a)?,
        CMatrix::new(crate::linalg::hermitian_part(&q))?,
        CMatrix::new(crate::linalg::hermitian_part(&p0))?,
        MeasurementAlphabet::new(pairs)?,
    )?;
    Ok(Aggregated { system, channel, v_inv: CMatrix::new(w)?, warnings })
}

/// The two-sensor example: `A = diag(J₂(α₁), α₂)`, sensor 1 measures
/// `[2 1 0; 0 1 0]`, sensor 2 measures `[0 0 1; 0 0 2]`, one slot that
/// alternates between them, and `loss` emitting 0 (lost) or 1 (received).
pub fn two_sensor_example(alpha1: f64, alpha2: f64, loss: ChannelModel, tol: &Tolerances) -> Result<Aggregated> {
    if !(alpha1 > alpha2 && alpha2 > 0.0) {
        return Err(Error::InvalidArgument(format!("need alpha1 > alpha2 > 0, got {alpha1}, {alpha2}")));
    }
    let f = CMatrix::from_real_rows(&[&[alpha1, 1.0, 0.0], &[0.0, alpha1, 0.0], &[0.0, 0.0, alpha2]])?;
    let suite = SensorSuite {
        f,
        n_cov: CMatrix::identity(3),
        p0: CMatrix::identity(3),
        sensors: vec![
            Sensor { h: CMatrix::from_real_rows(&[&[2.0, 1.0, 0.0], &[0.0, 1.0, 0.0]])?, e: CMatrix::identity(2) },
            Sensor { h: CMatrix::from_real_rows(&[&[0.0, 0.0, 1.0], &[0.0, 0.0, 2.0]])?, e: CMatrix::identity(2) },
        ],
        slots: 1,
    };
    let plan = SchedulePlan { schedule: Schedule::TimeBased(vec![vec![0], vec![1]]), loss: LossModel::shared(1, loss) };
    aggregate(&suite, &plan, tol)
}

/// `two_sensor_example` with i.i.d. losses of probability `lambda`.
pub fn two_sensor_example_iid(alpha1: f64, alpha2: f64, lambda: f64, tol: &Tolerances) -> Result<Aggregated> {
    let loss = ChannelModel::Iid(IidChannel { probs: vec![vec![lambda, 1.0 - lambda]] });
    two_sensor_example(alpha1, alpha2, loss, tol)
}
