//! System model, measurement alphabet and the hidden-Markov channel that
//! draws the measurement pair `γ_t = (C_t, R_t)` at every instant.
//!
//! Every channel variant except [`GaussianHidden`] lifts to a
//! [`FiniteMarkov`] chain, which is the representation the exact analysis
//! works with. Kernels are row-stochastic: `kernels[s][(e, e')]` is the
//! probability of moving from `e` to `e'`. The kernel drawing `ϱ_t` from
//! `ϱ_{t−1}` is `kernels[(t − 1) mod τ]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius_real, CMatrix, C64};

/// Tolerance on kernel row sums and initial-distribution mass.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Total-variation tolerance of the cyclostationary invariance check.
pub const CYCLO_TOL: f64 = 1e-10;
/// Hermitian / PSD tolerance for covariances.
pub const PSD_TOL: f64 = 1e-10;
/// Samples drawn when checking that Gaussian regions cover the hidden space.
pub const COVERAGE_SAMPLES: usize = 100_000;

/// Seedable generator for stream `stream` of a run seeded with `seed`.
/// Distinct streams are independent, so parallel tasks can each take one.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One element `(C, R)` of the measurement alphabet.
#[derive(Clone, Debug)]
pub struct MeasurementPair {
    pub label: String,
    pub c: CMatrix,
    pub r: CMatrix,
}

/// The finite set of measurement pairs that actually occur.
#[derive(Clone, Debug)]
pub struct MeasurementAlphabet {
    pairs: Vec<MeasurementPair>,
}

impl MeasurementAlphabet {
    pub fn new(pairs: Vec<MeasurementPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidModel("measurement alphabet is empty".into()));
        }
        let (p, n) = (pairs[0].c.nrows(), pairs[0].c.ncols());
        for (d, pair) in pairs.iter().enumerate() {
            if pair.c.nrows() != p || pair.c.ncols() != n {
                return Err(Error::Dimension(format!(
                    "C of alphabet entry {d} is {}x{}, expected {p}x{n} (zero-pad shorter measurements)",
                    pair.c.nrows(),
                    pair.c.ncols()
                )));
            }
            if pair.r.nrows() != p || pair.r.ncols() != p {
                return Err(Error::Dimension(format!(
                    "R of alphabet entry {d} is {}x{}, expected {p}x{p}",
                    pair.r.nrows(),
                    pair.r.ncols()
                )));
            }
        }
        Ok(MeasurementAlphabet { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[MeasurementPair] {
        &self.pairs
    }

    pub fn get(&self, d: usize) -> &MeasurementPair {
        &self.pairs[d]
    }

    pub fn measurement_dim(&self) -> usize {
        self.pairs[0].c.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.pairs[0].c.ncols()
    }
}

/// `x_{t+1} = A x_t + w_t`, `y_t = C_t x_t + v_t` with `A` in Jordan form.
#[derive(Clone, Debug)]
pub struct SystemModel {
    pub a: CMatrix,
    pub q: CMatrix,
    pub p0: CMatrix,
    pub alphabet: MeasurementAlphabet,
}

impl SystemModel {
    /// Checks dimensions only; structural properties are reported by
    /// [`validate`].
    pub fn new(a: CMatrix, q: CMatrix, p0: CMatrix, alphabet: MeasurementAlphabet) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        for (name, m) in [("Q", &q), ("P0", &p0)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if alphabet.state_dim() != n {
            return Err(Error::Dimension(format!(
                "measurement matrices have {} columns, A is {n}x{n}",
                alphabet.state_dim()
            )));
        }
        Ok(SystemModel { a, q, p0, alphabet })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.alphabet.measurement_dim()
    }
}

/// A maximal Jordan block of `A`: rows/columns `start..start + size`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JordanBlock {
    pub start: usize,
    pub size: usize,
    pub eigenvalue: C64,
}

/// Splits a Jordan-form matrix into its Jordan blocks.
pub fn jordan_blocks(a: &CMatrix) -> Result<Vec<JordanBlock>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::NotJordan("matrix is not square".into()));
    }
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tiny = 1e-12 * scale;
    for i in 0..n {
        for j in 0..n {
            if j != i && j != i + 1 && a[(i, j)].norm() > tiny {
                return Err(Error::NotJordan(format!("nonzero entry at ({i}, {j})")));
            }
        }
    }
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 0..n {
        let closes = if i + 1 < n {
            let sup = a[(i, i + 1)];
            if sup.norm() <= tiny {
                true
            } else if (sup - C64::new(1.0, 0.0)).norm() <= 1e-12 {
                if (a[(i, i)] - a[(i + 1, i + 1)]).norm() > tiny {
                    return Err(Error::NotJordan(format!(
                        "superdiagonal 1 at ({i}, {}) joins different eigenvalues",
                        i + 1
                    )));
                }
                false
            } else {
                return Err(Error::NotJordan(format!(
                    "superdiagonal entry at ({i}, {}) is neither 0 nor 1",
                    i + 1
                )));
            }
        } else {
            true
        };
        if closes {
            blocks.push(JordanBlock { start, size: i + 1 - start, eigenvalue: a[(start, start)] });
            start = i + 1;
        }
    }
    Ok(blocks)
}

/// Finite hidden-Markov channel with a deterministic emission map.
#[derive(Clone, Debug)]
pub struct FiniteMarkov {
    /// `κ_1..κ_τ`, each row-stochastic.
    pub kernels: Vec<DMatrix<f64>>,
    /// `h(e)`: alphabet index emitted in hidden state `e`.
    pub emission: Vec<usize>,
    /// Law of `ϱ_0`.
    pub mu0: DVector<f64>,
}

impl FiniteMarkov {
    pub fn new(kernels: Vec<DMatrix<f64>>, emission: Vec<usize>, mu0: DVector<f64>) -> Result<Self> {
        let states = emission.len();
        if states == 0 || kernels.is_empty() {
            return Err(Error::InvalidModel("finite channel needs states and at least one kernel".into()));
        }
        for (s, k) in kernels.iter().enumerate() {
            if k.nrows() != states || k.ncols() != states {
                return Err(Error::Dimension(format!(
                    "kernel {} is {}x{}, expected {states}x{states}",
                    s + 1,
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        if mu0.len() != states {
            return Err(Error::Dimension(format!("mu0 has {} entries, expected {states}", mu0.len())));
        }
        Ok(FiniteMarkov { kernels, emission, mu0 })
    }

    /// Deterministic single-state channel always emitting `symbol`.
    pub fn constant(symbol: usize) -> Self {
        FiniteMarkov {
            kernels: vec![DMatrix::from_element(1, 1, 1.0)],
            emission: vec![symbol],
            mu0: DVector::from_element(1, 1.0),
        }
    }

    pub fn period(&self) -> usize {
        self.kernels.len()
    }

    pub fn num_states(&self) -> usize {
        self.emission.len()
    }

    /// `κ_t`, the kernel that draws `ϱ_t` from `ϱ_{t−1}`.
    pub fn kernel(&self, t: i64) -> &DMatrix<f64> {
        let tau = self.period() as i64;
        &self.kernels[(t - 1).rem_euclid(tau) as usize]
    }

    /// Lifts an order-`order` Markov source over `symbols` symbols to a
    /// first-order chain on histories. `conditional[h]` is the law of the
    /// next symbol given history `h`, encoded base `symbols` with the oldest
    /// symbol most significant. The initial law is the stationary law of the
    /// lifted chain.
    pub fn from_order_l(symbols: usize, order: usize, conditional: &[Vec<f64>]) -> Result<Self> {
        if symbols == 0 || order == 0 {
            return Err(Error::InvalidArgument("need at least one symbol and order >= 1".into()));
        }
        let states = symbols.pow(order as u32);
        if conditional.len() != states || conditional.iter().any(|r| r.len() != symbols) {
            return Err(Error::Dimension(format!(
                "order-{order} table over {symbols} symbols needs {states} rows of length {symbols}"
            )));
        }
        let mut kernel = DMatrix::zeros(states, states);
        for (h, row) in conditional.iter().enumerate() {
            for (s, &p) in row.iter().enumerate() {
                let next = (h * symbols + s) % states;
                kernel[(h, next)] += p;
            }
        }
        let emission = (0..states).map(|h| h % symbols).collect();
        let mu0 = stationary_of(&kernel);
        FiniteMarkov::new(vec![kernel], emission, mu0)
    }
}

/// Independent draws with a `τ`-periodic law over the alphabet.
#[derive(Clone, Debug)]
pub struct IidChannel {
    /// `probs[phase][d]`.
    pub probs: Vec<Vec<f64>>,
}

/// Two-state (good/bad) Markov channel with a per-state emission law.
#[derive(Clone, Debug)]
pub struct GilbertElliott {
    pub p_good_to_bad: f64,
    pub p_bad_to_good: f64,
    /// Emission law over the alphabet while in the good state.
    pub emission_good: Vec<f64>,
    /// Emission law over the alphabet while in the bad state.
    pub emission_bad: Vec<f64>,
}

/// Axis-aligned box of the hidden space mapped to an alphabet entry. `None`
/// bounds are unbounded.
#[derive(Clone, Debug)]
pub struct BoxRegion {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub symbol: usize,
}

impl BoxRegion {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            self.lower[i].map_or(true, |lo| v >= lo) && self.upper[i].map_or(true, |hi| v < hi)
        })
    }

    fn distance(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let below = self.lower[i].map_or(0.0, |lo| (lo - v).max(0.0));
                let above = self.upper[i].map_or(0.0, |hi| (v - hi).max(0.0));
                below.max(above).powi(2)
            })
            .sum()
    }
}

/// `ϱ_t = K ϱ_{t−1} + ε_t`, `ε_t ∼ N(0, Σ)`, with the emitted symbol chosen
/// by the box containing `ϱ_t`.
#[derive(Clone, Debug)]
pub struct GaussianHidden {
    pub k: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub regions: Vec<BoxRegion>,
}

impl GaussianHidden {
    /// Stationary covariance `Σ∞ = K Σ∞ Kᵀ + Σ`.
    pub fn stationary_covariance(&self) -> Result<DMatrix<f64>> {
        if spectral_radius_real(&self.k) >= 1.0 {
            return Err(Error::InvalidModel("Gaussian hidden chain needs rho(K) < 1".into()));
        }
        let mut s = self.sigma.clone();
        for _ in 0..100_000 {
            let next = &self.k * &s * self.k.transpose() + &self.sigma;
            let diff = (&next - &s).norm();
            s = next;
            if diff <= 1e-14 * s.norm().max(1e-300) {
                break;
            }
        }
        Ok(s)
    }

    pub fn symbol(&self, x: &DVector<f64>) -> Option<usize> {
        self.regions.iter().find(|r| r.contains(x)).map(|r| r.symbol)
    }

    /// Symbol of the containing box, or of the nearest box when none
    /// contains `x`.
    fn symbol_or_nearest(&self, x: &DVector<f64>) -> usize {
        self.symbol(x).unwrap_or_else(|| {
            self.regions
                .iter()
                .min_by(|a, b| a.distance(x).total_cmp(&b.distance(x)))
                .map_or(0, |r| r.symbol)
        })
    }
}

#[derive(Clone, Debug)]
pub enum ChannelModel {
    FiniteMarkov(FiniteMarkov),
    Iid(IidChannel),
    GilbertElliott(GilbertElliott),
    GaussianHidden(GaussianHidden),
}

impl ChannelModel {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ChannelModel::FiniteMarkov(_) => "finite_markov",
            ChannelModel::Iid(_) => "iid",
            ChannelModel::GilbertElliott(_) => "gilbert_elliott",
            ChannelModel::GaussianHidden(_) => "gaussian_hidden",
        }
    }

    pub fn period(&self) -> usize {
        match self {
            ChannelModel::FiniteMarkov(f) => f.period(),
            ChannelModel::Iid(c) => c.probs.len(),
            ChannelModel::GilbertElliott(_) | ChannelModel::GaussianHidden(_) => 1,
        }
    }

    /// The equivalent finite chain, or `None` for the Gaussian variant.
    pub fn to_finite(&self) -> Option<FiniteMarkov> {
        match self {
            ChannelModel::FiniteMarkov(f) => Some(f.clone()),
            ChannelModel::Iid(c) => {
                let d = c.probs.first().map_or(0, Vec::len);
                let tau = c.probs.len();
                // kernels[s] draws ϱ_{s+1}.
                let kernels = (0..tau)
                    .map(|s| {
                        let p = &c.probs[(s + 1) % tau];
                        DMatrix::from_fn(d, d, |_, j| p.get(j).copied().unwrap_or(0.0))
                    })
                    .collect();
                let mu0 = DVector::from_vec(c.probs[0].clone());
                Some(FiniteMarkov { kernels, emission: (0..d).collect(), mu0 })
            }
            ChannelModel::GilbertElliott(ge) => {
                let d = ge.emission_good.len();
                let chain = [
                    [1.0 - ge.p_good_to_bad, ge.p_good_to_bad],
                    [ge.p_bad_to_good, 1.0 - ge.p_bad_to_good],
                ];
                let emit = [&ge.emission_good, &ge.emission_bad];
                let total = ge.p_good_to_bad + ge.p_bad_to_good;
                let pi = if total > 0.0 {
                    [ge.p_bad_to_good / total, ge.p_good_to_bad / total]
                } else {
                    [1.0, 0.0]
                };
                // Lifted state (g, s) = chain state g currently emitting s.
                let states = 2 * d;
                let kernel = DMatrix::from_fn(states, states, |i, j| {
                    let (g, gp, sp) = (i / d, j / d, j % d);
                    chain[g][gp] * emit[gp].get(sp).copied().unwrap_or(0.0)
                });
                let mu0 = DVector::from_fn(states, |i, _| pi[i / d] * emit[i / d].get(i % d).copied().unwrap_or(0.0));
                Some(FiniteMarkov {
                    kernels: vec![kernel],
                    emission: (0..states).map(|i| i % d).collect(),
                    mu0,
                })
            }
            ChannelModel::GaussianHidden(_) => None,
        }
    }

    fn finite_or_err(&self) -> Result<FiniteMarkov> {
        self.to_finite().ok_or(Error::UnsupportedChannel(self.variant_name()))
    }
}

fn tv_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.5 * (a - b).iter().map(|x| x.abs()).sum::<f64>()
}

/// Stationary law of a single row-stochastic kernel by Cesàro-averaged
/// iteration from the uniform law.
fn stationary_of(kernel: &DMatrix<f64>) -> DVector<f64> {
    let n = kernel.nrows();
    let kt = kernel.transpose();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..100_000 {
        let next = (&kt * &v + &v) * 0.5;
        let diff = tv_distance(&next, &v);
        v = next;
        if diff < 1e-16 {
            break;
        }
    }
    let s = v.sum();
    v / s
}

impl FiniteMarkov {
    /// Law of `ϱ_t` obtained by pushing `μ0` through `κ_1..κ_t`.
    fn pushforward(&self, t: usize) -> DVector<f64> {
        let mut mu = self.mu0.clone();
        for s in 1..=t {
            mu = self.kernel(s as i64).transpose() * mu;
        }
        mu
    }

    /// Law of `ϱ_t` under cyclostationarity, `t` taken modulo the period.
    ///
    /// Starts from the pushforward of `μ0` and iterates the `τ`-step product
    /// (with Cesàro damping) to its fixed point, which is a left Perron
    /// vector of that product. For a cyclostationary `μ0` the iteration is a
    /// no-op.
    pub fn phase_distribution(&self, t: usize) -> DVector<f64> {
        let tau = self.period();
        let t = t % tau;
        let mut mu = self.pushforward(t);
        let step = self.period_product_transposed(t);
        for _ in 0..100_000 {
            let pushed = &step * &mu;
            if tv_distance(&pushed, &mu) <= 1e-15 {
                break;
            }
            mu = (pushed + &mu) * 0.5;
        }
        let s = mu.sum();
        if s > 0.0 {
            mu / s
        } else {
            mu
        }
    }

    /// `(κ_{t+1} ⋯ κ_{t+τ})ᵀ`, acting on column distributions.
    fn period_product_transposed(&self, t: usize) -> DMatrix<f64> {
        let n = self.num_states();
        let mut prod = DMatrix::identity(n, n);
        for s in 1..=self.period() {
            prod = self.kernel((t + s) as i64).transpose() * prod;
        }
        prod
    }
}

/// Law of `ϱ_t` at phase `t` of a cyclostationary finite channel.
pub fn stationary_phase_distribution(channel: &ChannelModel, t: usize) -> Result<DVector<f64>> {
    Ok(channel.finite_or_err()?.phase_distribution(t))
}

/// Realized stretch `Γ_{t0,T}` with the hidden path that produced it.
#[derive(Clone, Debug)]
pub struct ChannelTrace {
    pub t0: usize,
    pub gamma: Vec<usize>,
    pub hidden: HiddenPath,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum HiddenPath {
    Finite(Vec<usize>),
    Gaussian(Vec<DVector<f64>>),
}

impl ChannelTrace {
    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// A trace with no hidden information, for replaying a fixed sequence.
    pub fn from_symbols(t0: usize, gamma: Vec<usize>) -> Self {
        ChannelTrace { t0, gamma, hidden: HiddenPath::Finite(Vec::new()), seed: 0 }
    }
}

fn cumulative(p: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    p.map(|x| {
        acc += x.max(0.0);
        acc
    })
    .collect()
}

fn draw(cum: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cum.last().unwrap_or(&0.0);
    let u = rng.gen::<f64>() * total;
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// Precomputed sampling tables for a channel.
#[derive(Clone, Debug)]
pub enum ChannelSampler {
    Finite {
        chain: FiniteMarkov,
        /// Cumulative rows per kernel phase.
        rows: Vec<Vec<Vec<f64>>>,
        /// Cumulative phase laws.
        starts: Vec<Vec<f64>>,
    },
    Gaussian {
        model: GaussianHidden,
        step_chol: DMatrix<f64>,
        start_chol: DMatrix<f64>,
    },
}

/// Current hidden state of a sampled channel.
#[derive(Clone, Debug)]
pub enum HiddenState {
    Finite(usize),
    Gaussian(DVector<f64>),
}

fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    // Eigen-based square root tolerates singular covariances.
    let eig = m.clone().symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

impl ChannelSampler {
    pub fn new(channel: &ChannelModel) -> Result<Self> {
        if let ChannelModel::GaussianHidden(g) = channel {
            let stat = g.stationary_covariance()?;
            return Ok(ChannelSampler::Gaussian {
                model: g.clone(),
                step_chol: psd_factor(&g.sigma),
                start_chol: psd_factor(&stat),
            });
        }
        let chain = channel.finite_or_err()?;
        let rows = chain
            .kernels
            .iter()
            .map(|k| k.row_iter().map(|r| cumulative(r.iter().copied())).collect())
            .collect();
        let starts = (0..chain.period())
            .map(|t| cumulative(chain.phase_distribution(t).iter().copied()))
            .collect();
        Ok(ChannelSampler::Finite { chain, rows, starts })
    }

    /// Draws `ϱ_t` from the phase-`t` law.
    pub fn start(&self, t: usize, rng: &mut impl Rng) -> HiddenState {
        match self {
            ChannelSampler::Finite { starts, .. } => {
                HiddenState::Finite(draw(&starts[t % starts.len()], rng))
            }
            ChannelSampler::Gaussian { start_chol, .. } => {
                HiddenState::Gaussian(gaussian(start_chol, rng))
            }
        }
    }

    /// Draws `ϱ_t` given `ϱ_{t−1}` (held in `state`).
    pub fn advance(&self, t: usize, state: &mut HiddenState, rng: &mut impl Rng) {
        match (self, state) {
            (ChannelSampler::Finite { rows, .. }, HiddenState::Finite(e)) => {
                let phase = (t as i64 - 1).rem_euclid(rows.len() as i64) as usize;
                *e = draw(&rows[phase][*e], rng);
            }
            (ChannelSampler::Gaussian { model, step_chol, .. }, HiddenState::Gaussian(x)) => {
                *x = &model.k * &*x + gaussian(step_chol, rng);
            }
            _ => unreachable!("hidden state does not match sampler"),
        }
    }

    pub fn symbol(&self, state: &HiddenState) -> usize {
        match (self, state) {
            (ChannelSampler::Finite { chain, .. }, HiddenState::Finite(e)) => chain.emission[*e],
            (ChannelSampler::Gaussian { model, .. }, HiddenState::Gaussian(x)) => {
                model.symbol_or_nearest(x)
            }
            _ => unreachable!("hidden state does not match sampler"),
        }
    }
}

fn gaussian(factor: &DMatrix<f64>, rng: &mut impl Rng) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

/// Samples `Γ_{t0,T}`: `ϱ_{t0}` from the phase-`t0` law, then through the
/// phase-indexed kernels. Deterministic given `seed`.
pub fn sample_trace(channel: &ChannelModel, t0: usize, len: usize, seed: u64) -> Result<ChannelTrace> {
    if len == 0 {
        return Err(Error::InvalidArgument("trace length must be at least 1".into()));
    }
    let sampler = ChannelSampler::new(channel)?;
    let mut rng = rng_for(seed, 0);
    Ok(sample_with(&sampler, t0, len, seed, &mut rng))
}

pub(crate) fn sample_with(
    sampler: &ChannelSampler,
    t0: usize,
    len: usize,
    seed: u64,
    rng: &mut impl Rng,
) -> ChannelTrace {
    let mut state = sampler.start(t0, rng);
    let mut gamma = Vec::with_capacity(len);
    let mut finite = Vec::new();
    let mut gauss = Vec::new();
    for i in 0..len {
        if i > 0 {
            sampler.advance(t0 + i, &mut state, rng);
        }
        gamma.push(sampler.symbol(&state));
        match &state {
            HiddenState::Finite(e) => finite.push(*e),
            HiddenState::Gaussian(x) => gauss.push(x.clone()),
        }
    }
    let hidden = if gauss.is_empty() { HiddenPath::Finite(finite) } else { HiddenPath::Gaussian(gauss) };
    ChannelTrace { t0, gamma, hidden, seed }
}

/// Exact `ℙ(Γ_{t0,T} = gamma)` by the forward algorithm.
pub fn sequence_probability(channel: &ChannelModel, t0: usize, gamma: &[usize]) -> Result<f64> {
    let chain = channel.finite_or_err()?;
    Ok(chain.sequence_probability(t0, gamma))
}

impl FiniteMarkov {
    pub fn sequence_probability(&self, t0: usize, gamma: &[usize]) -> f64 {
        let Some((&first, rest)) = gamma.split_first() else {
            return 1.0;
        };
        let mu = self.phase_distribution(t0);
        let mut fwd = DVector::from_fn(self.num_states(), |e, _| {
            if self.emission[e] == first {
                mu[e]
            } else {
                0.0
            }
        });
        for (i, &g) in rest.iter().enumerate() {
            let k = self.kernel((t0 + i + 1) as i64);
            let mut next = k.transpose() * &fwd;
            for (e, v) in next.iter_mut().enumerate() {
                if self.emission[e] != g {
                    *v = 0.0;
                }
            }
            fwd = next;
        }
        fwd.sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

/// Outcome of [`validate`]: structural problems are listed rather than
/// raised.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticsReport {
    pub diagnostics: Vec<Diagnostic>,
    pub period: usize,
    /// Phase-wise properness of a finite chain.
    pub proper: Option<bool>,
    /// Upper bound on `ζ` from `max 1/ℙ(ϱ)` over reachable states.
    pub zeta_bound: Option<f64>,
}

impl DiagnosticsReport {
    pub fn is_valid(&self) -> bool {
        self.diagnostics.iter().all(|d| d.severity != Severity::Error)
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }

    fn push(&mut self, severity: Severity, code: &'static str, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic { severity, code, message: message.into() });
    }
}

fn check_law(report: &mut DiagnosticsReport, what: &str, law: &[f64]) {
    if law.iter().any(|p| !p.is_finite() || *p < 0.0) {
        report.push(Severity::Error, "negative_probability", format!("{what} has a negative entry"));
    }
    let sum: f64 = law.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        report.push(Severity::Error, "not_normalized", format!("{what} sums to {sum}"));
    }
}

/// Checks the model against the assumptions of the stability theorem.
///
/// Malformed dimensions are hard errors; everything else is reported as a
/// diagnostic. Inputs are not modified.
pub fn validate(system: &SystemModel, channel: &ChannelModel) -> Result<DiagnosticsReport> {
    let mut report = DiagnosticsReport { period: channel.period(), ..Default::default() };
    let d = system.alphabet.len();

    if let Err(e) = jordan_blocks(&system.a) {
        report.push(Severity::Error, "not_jordan", e.to_string());
    }
    for (name, m) in [("Q", &system.q), ("P0", &system.p0)] {
        if !m.is_psd(PSD_TOL) {
            report.push(Severity::Error, "not_psd", format!("{name} is not Hermitian PSD"));
        }
    }
    for (i, pair) in system.alphabet.pairs().iter().enumerate() {
        if !pair.r.is_psd(PSD_TOL) {
            report.push(Severity::Error, "not_psd", format!("R of alphabet entry {i} is not Hermitian PSD"));
        }
    }

    match channel {
        ChannelModel::FiniteMarkov(f) => {
            if let Some(bad) = f.emission.iter().find(|&&s| s >= d) {
                return Err(Error::Dimension(format!("emission refers to alphabet entry {bad}, alphabet has {d}")));
            }
            for (s, k) in f.kernels.iter().enumerate() {
                for (e, row) in k.row_iter().enumerate() {
                    let row: Vec<f64> = row.iter().copied().collect();
                    let before = report.diagnostics.len();
                    check_law(&mut report, &format!("row {e} of kernel {}", s + 1), &row);
                    if report.diagnostics.len() > before {
                        report.push(Severity::Error, "not_row_stochastic", format!("kernel {} is not row-stochastic", s + 1));
                    }
                }
            }
            check_law(&mut report, "mu0", f.mu0.as_slice());
            finite_chain_checks(&mut report, f);
        }
        ChannelModel::Iid(c) => {
            if c.probs.is_empty() {
                return Err(Error::InvalidModel("iid channel needs at least one phase".into()));
            }
            for (t, p) in c.probs.iter().enumerate() {
                if p.len() != d {
                    return Err(Error::Dimension(format!("iid phase {t} law has {} entries, alphabet has {d}", p.len())));
                }
                check_law(&mut report, &format!("iid phase {t} law"), p);
            }
            finite_chain_checks(&mut report, &channel.to_finite().expect("finite variant"));
        }
        ChannelModel::GilbertElliott(ge) => {
            for (name, p) in [("p_good_to_bad", ge.p_good_to_bad), ("p_bad_to_good", ge.p_bad_to_good)] {
                if !(0.0..=1.0).contains(&p) {
                    report.push(Severity::Error, "bad_probability", format!("{name} = {p} outside [0, 1]"));
                }
            }
            for (name, law) in [("good-state emission", &ge.emission_good), ("bad-state emission", &ge.emission_bad)] {
                if law.len() != d {
                    return Err(Error::Dimension(format!("{name} has {} entries, alphabet has {d}", law.len())));
                }
                check_law(&mut report, name, law);
            }
            finite_chain_checks(&mut report, &channel.to_finite().expect("finite variant"));
        }
        ChannelModel::GaussianHidden(g) => {
            let dim = g.k.nrows();
            if g.k.ncols() != dim || g.sigma.nrows() != dim || g.sigma.ncols() != dim {
                return Err(Error::Dimension("K and Sigma must be square of equal size".into()));
            }
            for (i, r) in g.regions.iter().enumerate() {
                if r.lower.len() != dim || r.upper.len() != dim {
                    return Err(Error::Dimension(format!("region {i} bounds do not match hidden dimension {dim}")));
                }
                if r.symbol >= d {
                    return Err(Error::Dimension(format!("region {i} emits entry {}, alphabet has {d}", r.symbol)));
                }
            }
            let rho = spectral_radius_real(&g.k);
            if rho >= 1.0 {
                report.push(Severity::Error, "unstable_hidden_chain", format!("rho(K) = {rho} >= 1"));
            }
            let sym = (&g.sigma - g.sigma.transpose()).norm() <= PSD_TOL * g.sigma.norm().max(1.0);
            let min_eig = g.sigma.clone().symmetric_eigenvalues().min();
            if !sym || min_eig < -PSD_TOL * g.sigma.norm().max(1.0) {
                report.push(Severity::Error, "not_psd", "Sigma is not symmetric PSD");
            }
            if report.is_valid() {
                let sampler = ChannelSampler::new(channel)?;
                let mut rng = rng_for(0x5eed, 0);
                let uncovered = (0..COVERAGE_SAMPLES)
                    .filter(|_| match sampler.start(0, &mut rng) {
                        HiddenState::Gaussian(x) => g.symbol(&x).is_none(),
                        HiddenState::Finite(_) => false,
                    })
                    .count();
                if uncovered > 0 {
                    report.push(
                        Severity::Error,
                        "regions_do_not_cover",
                        format!("{uncovered} of {COVERAGE_SAMPLES} stationary samples fall outside every region"),
                    );
                }
            }
            report.push(
                Severity::Info,
                "gaussian_hidden",
                "Gaussian hidden Markov channel: the theorem's assumptions hold for this class; only Monte Carlo exponents are available",
            );
        }
    }
    Ok(report)
}

/// Phase-wise properness of a finite chain and its `ζ` bound.
pub fn chain_properness(f: &FiniteMarkov) -> (bool, f64) {
    let mut report = DiagnosticsReport::default();
    finite_chain_checks(&mut report, f);
    (report.proper.unwrap_or(false), report.zeta_bound.unwrap_or(f64::INFINITY))
}

fn finite_chain_checks(report: &mut DiagnosticsReport, f: &FiniteMarkov) {
    let tau = f.period();
    let mut pushed = f.mu0.clone();
    for s in 1..=tau {
        pushed = f.kernel(s as i64).transpose() * pushed;
    }
    let tv = tv_distance(&pushed, &f.mu0);
    if tv > CYCLO_TOL {
        report.push(
            Severity::Error,
            "not_cyclostationary",
            format!("mu0 is not invariant under the {tau}-step kernel product (TV distance {tv:.3e})"),
        );
    }
    // Phase-wise properness: every transition between states reachable at
    // consecutive phases has positive probability.
    let laws: Vec<DVector<f64>> = (0..tau).map(|t| f.pushforward(t)).collect();
    let mut proper = true;
    let mut zeta: f64 = 1.0;
    for t in 0..tau {
        let prev = &laws[t];
        let next = &laws[(t + 1) % tau];
        let k = f.kernel(t as i64 + 1);
        for e in 0..f.num_states() {
            if prev[e] <= 0.0 {
                continue;
            }
            zeta = zeta.max(1.0 / prev[e]);
            for ep in 0..f.num_states() {
                if next[ep] > 0.0 && k[(e, ep)] <= 0.0 {
                    proper = false;
                }
            }
        }
    }
    if !proper {
        report.push(
            Severity::Warning,
            "not_proper",
            "some transition between reachable states has zero probability; the exact exponent assumes the restricted and full spectral radii agree",
        );
    }
    report.proper = Some(proper);
    report.zeta_bound = Some(zeta);
}
