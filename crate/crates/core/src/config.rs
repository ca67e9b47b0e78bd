//! JSON analysis configuration.
//!
//! Complex entries are written as a number or `[re, im]`. Any number in the
//! model sections may instead be a string starting with `=`, evaluated
//! against `parameters` (see [`crate::expr`]).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr;
use crate::kalman::GrowthMode;
use crate::linalg::{CMatrix, Tolerances, C64};
use crate::model::{
    BoxRegion, ChannelModel, FiniteMarkov, GaussianHidden, GilbertElliott, IidChannel, MeasurementAlphabet,
    MeasurementPair, SystemModel,
};
use crate::observability::LATTICE_CAP;
use crate::phi::{MIN_HITS, SIGMA_CAP};
use crate::schedule::{aggregate, LossModel, Schedule, SchedulePlan, Sensor, SensorSuite};

/// A literal or an `=`-prefixed expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Expr(String),
}

impl From<f64> for Num {
    fn from(v: f64) -> Self {
        Num::Value(v)
    }
}

/// A real or `[re, im]` matrix entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(Num),
    Complex([Num; 2]),
}

/// Row-major matrix; rows must have equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Entry>>", into = "Vec<Vec<Entry>>")]
pub struct Matrix(Vec<Vec<Entry>>);

impl TryFrom<Vec<Vec<Entry>>> for Matrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<Entry>>) -> std::result::Result<Self, String> {
        if rows.is_empty() {
            return Err("matrix has no rows".into());
        }
        let width = rows[0].len();
        if width == 0 {
            return Err("matrix has empty rows".into());
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(format!("row {i} has {} entries, row 0 has {width}", r.len()));
        }
        Ok(Matrix(rows))
    }
}

impl From<Matrix> for Vec<Vec<Entry>> {
    fn from(m: Matrix) -> Self {
        m.0
    }
}

impl Matrix {
    pub fn from_cmatrix(m: &CMatrix) -> Self {
        Matrix(m.rows_vec().iter().map(|r| r.iter().map(|&z| entry_of(z)).collect()).collect())
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        Matrix((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Entry::Real(m[(i, j)].into())).collect()).collect())
    }
}

fn entry_of(z: C64) -> Entry {
    if z.im == 0.0 {
        Entry::Real(z.re.into())
    } else {
        Entry::Complex([z.re.into(), z.im.into()])
    }
}

/// Evaluation context: parameter values plus the current config path for
/// error messages.
struct Ctx<'a> {
    params: &'a BTreeMap<String, f64>,
}

fn at(path: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{path}: {m}")),
        other => Error::Config(format!("{path}: {other}")),
    }
}

impl Ctx<'_> {
    fn num(&self, n: &Num, path: &str) -> Result<f64> {
        match n {
            Num::Value(v) => Ok(*v),
            Num::Expr(s) => match s.strip_prefix('=') {
                Some(src) => expr::eval(src, self.params).map_err(|e| at(path, e)),
                None => Err(Error::Config(format!("{path}: expected a number or '=expression', got \"{s}\""))),
            },
        }
    }

    fn vec(&self, v: &[Num], path: &str) -> Result<Vec<f64>> {
        v.iter().enumerate().map(|(i, n)| self.num(n, &format!("{path}[{i}]"))).collect()
    }

    fn cmatrix(&self, m: &Matrix, path: &str) -> Result<CMatrix> {
        let rows = m
            .0
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, e)| {
                        let p = format!("{path}[{i}][{j}]");
                        match e {
                            Entry::Real(n) => Ok(C64::new(self.num(n, &p)?, 0.0)),
                            Entry::Complex([re, im]) => Ok(C64::new(self.num(re, &p)?, self.num(im, &p)?)),
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        CMatrix::from_rows(&rows).map_err(|e| at(path, e))
    }

    fn real_matrix(&self, m: &Matrix, path: &str) -> Result<DMatrix<f64>> {
        let c = self.cmatrix(m, path)?;
        if c.iter().any(|z| z.im != 0.0) {
            return Err(Error::Config(format!("{path}: entries must be real")));
        }
        Ok(c.map(|z| z.re))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub c: Matrix,
    pub r: Matrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub a: Matrix,
    pub q: Matrix,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Matrix>,
    pub alphabet: Vec<PairSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub h: Matrix,
    pub e: Matrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSection {
    TimeBased { sets: Vec<Vec<usize>> },
    Random { choices: Vec<Vec<usize>>, channel: ChannelSection },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSection {
    #[default]
    Lossless,
    Independent { p_loss: Num },
    /// One loss event for all slots; the channel emits 0 (lost) or 1.
    Shared { channel: ChannelSection },
    Patterns { patterns: Vec<Vec<bool>>, channel: ChannelSection },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub f: Matrix,
    pub q: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Matrix>,
    pub sensors: Vec<SensorSection>,
    #[serde(default = "one")]
    pub slots: usize,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub loss: LossSection,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub lower: Vec<Option<Num>>,
    pub upper: Vec<Option<Num>>,
    pub symbol: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSection {
    /// `probs[phase][d]`.
    Iid { probs: Vec<Vec<Num>> },
    GilbertElliott { p_good_to_bad: Num, p_bad_to_good: Num, emission_good: Vec<Num>, emission_bad: Vec<Num> },
    Markov { kernels: Vec<Matrix>, emission: Vec<usize>, mu0: Vec<Num> },
    MarkovOrder { symbols: usize, order: usize, conditional: Vec<Vec<Num>> },
    GaussianHidden { k: Matrix, sigma: Matrix, regions: Vec<RegionSection> },
}

impl ChannelSection {
    fn build(&self, ctx: &Ctx, path: &str) -> Result<ChannelModel> {
        let p = |f: &str| format!("{path}.{f}");
        Ok(match self {
            ChannelSection::Iid { probs } => ChannelModel::Iid(IidChannel {
                probs: probs
                    .iter()
                    .enumerate()
                    .map(|(t, row)| ctx.vec(row, &format!("{path}.probs[{t}]")))
                    .collect::<Result<_>>()?,
            }),
            ChannelSection::GilbertElliott { p_good_to_bad, p_bad_to_good, emission_good, emission_bad } => {
                ChannelModel::GilbertElliott(GilbertElliott {
                    p_good_to_bad: ctx.num(p_good_to_bad, &p("p_good_to_bad"))?,
                    p_bad_to_good: ctx.num(p_bad_to_good, &p("p_bad_to_good"))?,
                    emission_good: ctx.vec(emission_good, &p("emission_good"))?,
                    emission_bad: ctx.vec(emission_bad, &p("emission_bad"))?,
                })
            }
            ChannelSection::Markov { kernels, emission, mu0 } => {
                let kernels = kernels
                    .iter()
                    .enumerate()
                    .map(|(s, k)| ctx.real_matrix(k, &format!("{path}.kernels[{s}]")))
                    .collect::<Result<Vec<_>>>()?;
                let mu0 = DVector::from_vec(ctx.vec(mu0, &p("mu0"))?);
                ChannelModel::FiniteMarkov(FiniteMarkov::new(kernels, emission.clone(), mu0).map_err(|e| at(path, e))?)
            }
            ChannelSection::MarkovOrder { symbols, order, conditional } => {
                let table = conditional
                    .iter()
                    .enumerate()
                    .map(|(h, row)| ctx.vec(row, &format!("{path}.conditional[{h}]")))
                    .collect::<Result<Vec<_>>>()?;
                ChannelModel::FiniteMarkov(FiniteMarkov::from_order_l(*symbols, *order, &table).map_err(|e| at(path, e))?)
            }
            ChannelSection::GaussianHidden { k, sigma, regions } => {
                let k = ctx.real_matrix(k, &p("k"))?;
                let sigma = ctx.real_matrix(sigma, &p("sigma"))?;
                let bound = |v: &[Option<Num>], rp: String| -> Result<Vec<Option<f64>>> {
                    v.iter()
                        .enumerate()
                        .map(|(i, b)| b.as_ref().map(|n| ctx.num(n, &format!("{rp}[{i}]"))).transpose())
                        .collect()
                };
                let regions = regions
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let rp = format!("{path}.regions[{i}]");
                        let region = BoxRegion {
                            lower: bound(&r.lower, format!("{rp}.lower"))?,
                            upper: bound(&r.upper, format!("{rp}.upper"))?,
                            symbol: r.symbol,
                        };
                        if region.lower.len() != k.nrows() || region.upper.len() != k.nrows() {
                            return Err(Error::Config(format!("{rp}: bounds need {} entries", k.nrows())));
                        }
                        Ok(region)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if k.nrows() != k.ncols() || sigma.shape() != k.shape() {
                    return Err(Error::Config(format!("{path}: k and sigma must be square of equal size")));
                }
                ChannelModel::GaussianHidden(GaussianHidden { k, sigma, regions })
            }
        })
    }

    /// Section describing `channel`, for audit output.
    pub fn from_model(channel: &ChannelModel) -> Self {
        let nums = |v: &[f64]| v.iter().map(|&x| Num::Value(x)).collect::<Vec<_>>();
        match channel {
            ChannelModel::Iid(c) => ChannelSection::Iid { probs: c.probs.iter().map(|r| nums(r)).collect() },
            ChannelModel::GilbertElliott(g) => ChannelSection::GilbertElliott {
                p_good_to_bad: g.p_good_to_bad.into(),
                p_bad_to_good: g.p_bad_to_good.into(),
                emission_good: nums(&g.emission_good),
                emission_bad: nums(&g.emission_bad),
            },
            ChannelModel::FiniteMarkov(f) => ChannelSection::Markov {
                kernels: f.kernels.iter().map(Matrix::from_real).collect(),
                emission: f.emission.clone(),
                mu0: nums(f.mu0.as_slice()),
            },
            ChannelModel::GaussianHidden(g) => ChannelSection::GaussianHidden {
                k: Matrix::from_real(&g.k),
                sigma: Matrix::from_real(&g.sigma),
                regions: g
                    .regions
                    .iter()
                    .map(|r| RegionSection {
                        lower: r.lower.iter().map(|b| b.map(Num::Value)).collect(),
                        upper: r.upper.iter().map(|b| b.map(Num::Value)).collect(),
                        symbol: r.symbol,
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ClosedForm,
    Exact,
    MonteCarlo,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ClosedForm => "closed_form",
            Strategy::Exact => "exact",
            Strategy::MonteCarlo => "monte_carlo",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(Strategy::ClosedForm),
            "exact" => Ok(Strategy::Exact),
            "monte_carlo" | "monte-carlo" | "mc" => Ok(Strategy::MonteCarlo),
            _ => Err(Error::Config(format!("unknown strategy '{s}' (closed_form, exact, monte_carlo)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub tol_rank: f64,
    pub tol_orth: f64,
    pub tol_angle: f64,
    pub n_max_order: u32,
    pub eps_margin: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        let t = Tolerances::default();
        ToleranceSection {
            tol_rank: t.tol_rank,
            tol_orth: t.tol_orth,
            tol_angle: t.tol_angle,
            n_max_order: t.n_max_order,
            eps_margin: t.eps_margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub trials: usize,
    /// Survival horizons run over `M, 2M, …, horizon_factor·M`.
    pub horizon_factor: usize,
    pub min_hits: u64,
    pub chunks: usize,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection { trials: 100_000, horizon_factor: 40, min_hits: MIN_HITS, chunks: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub strategy: Vec<Strategy>,
    pub sigma_cap: f64,
    pub lattice_cap: f64,
    pub tolerances: ToleranceSection,
    pub monte_carlo: MonteCarloSection,
    pub seed: u64,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            strategy: vec![Strategy::ClosedForm, Strategy::Exact, Strategy::MonteCarlo],
            sigma_cap: SIGMA_CAP,
            lattice_cap: LATTICE_CAP,
            tolerances: ToleranceSection::default(),
            monte_carlo: MonteCarloSection::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizons: Vec<usize>,
    pub trials: usize,
    pub mode: GrowthMode,
    pub batches: usize,
    pub t0: usize,
    /// Initial covariances to probe; empty means the system `P0`.
    pub p0_grid: Vec<Matrix>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            horizons: (1..=20).map(|k| 10 * k).collect(),
            trials: 2000,
            mode: GrowthMode::Particle,
            batches: 10,
            t0: 0,
            p0_grid: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_suite: Option<SuiteSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSection>,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub simulation: SimulationSection,
}

/// The model a config describes, after expression evaluation and, for
/// sensor suites, aggregation.
#[derive(Clone, Debug)]
pub struct ResolvedModel {
    pub system: SystemModel,
    pub channel: ChannelModel,
    /// Eigenvector matrix of an aggregated suite.
    pub v_inv: Option<CMatrix>,
    pub warnings: Vec<String>,
}

impl AnalysisConfig {
    /// Parses and checks a config. Schema errors name the JSON path and the
    /// line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: AnalysisConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                Error::Config(inner.to_string())
            } else {
                Error::Config(format!("{path}: {inner}"))
            }
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check(&self) -> Result<()> {
        match (&self.system, &self.sensor_suite) {
            (Some(_), None) => {
                if self.channel.is_none() {
                    return Err(Error::Config("a 'system' config needs a 'channel' section".into()));
                }
            }
            (None, Some(_)) => {
                if self.channel.is_some() {
                    return Err(Error::Config(
                        "'channel' is not used with 'sensor_suite'; put channels under schedule or loss".into(),
                    ));
                }
            }
            _ => return Err(Error::Config("exactly one of 'system' and 'sensor_suite' must be present".into())),
        }
        if self.engine.strategy.is_empty() {
            return Err(Error::Config("engine.strategy: at least one strategy is required".into()));
        }
        self.tolerances()?;
        Ok(())
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let t = &self.engine.tolerances;
        let tol = Tolerances {
            tol_rank: t.tol_rank,
            tol_orth: t.tol_orth,
            tol_angle: t.tol_angle,
            n_max_order: t.n_max_order,
            eps_margin: t.eps_margin,
        };
        tol.validate().map_err(|e| at("engine.tolerances", e))?;
        Ok(tol)
    }

    /// Builds the model with `overrides` replacing entries of `parameters`.
    /// Overriding a name not declared in `parameters` is an error.
    pub fn resolve(&self, overrides: &BTreeMap<String, f64>) -> Result<ResolvedModel> {
        let mut params = self.parameters.clone();
        for (k, v) in overrides {
            match params.get_mut(k) {
                Some(slot) => *slot = *v,
                None => return Err(Error::Config(format!("unknown parameter '{k}'"))),
            }
        }
        let ctx = Ctx { params: &params };
        let tol = self.tolerances()?;
        if let Some(sys) = &self.system {
            let a = ctx.cmatrix(&sys.a, "system.a")?;
            let q = ctx.cmatrix(&sys.q, "system.q")?;
            let p0 = match &sys.p0 {
                Some(m) => ctx.cmatrix(m, "system.p0")?,
                None => CMatrix::identity(a.nrows()),
            };
            let pairs = sys
                .alphabet
                .iter()
                .enumerate()
                .map(|(d, p)| {
                    Ok(MeasurementPair {
                        label: p.label.clone().unwrap_or_else(|| format!("m{d}")),
                        c: ctx.cmatrix(&p.c, &format!("system.alphabet[{d}].c"))?,
                        r: ctx.cmatrix(&p.r, &format!("system.alphabet[{d}].r"))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let alphabet = MeasurementAlphabet::new(pairs).map_err(|e| at("system.alphabet", e))?;
            let system = SystemModel::new(a, q, p0, alphabet).map_err(|e| at("system", e))?;
            let channel = self.channel.as_ref().expect("checked on parse").build(&ctx, "channel")?;
            return Ok(ResolvedModel { system, channel, v_inv: None, warnings: Vec::new() });
        }
        let s = self.sensor_suite.as_ref().expect("checked on parse");
        let f = ctx.cmatrix(&s.f, "sensor_suite.f")?;
        let n_cov = ctx.cmatrix(&s.q, "sensor_suite.q")?;
        let p0 = match &s.p0 {
            Some(m) => ctx.cmatrix(m, "sensor_suite.p0")?,
            None => CMatrix::identity(f.nrows()),
        };
        let sensors = s
            .sensors
            .iter()
            .enumerate()
            .map(|(i, x)| {
                Ok(Sensor {
                    h: ctx.cmatrix(&x.h, &format!("sensor_suite.sensors[{i}].h"))?,
                    e: ctx.cmatrix(&x.e, &format!("sensor_suite.sensors[{i}].e"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let schedule = match &s.schedule {
            ScheduleSection::TimeBased { sets } => Schedule::TimeBased(sets.clone()),
            ScheduleSection::Random { choices, channel } => Schedule::Random {
                choices: choices.clone(),
                channel: channel.build(&ctx, "sensor_suite.schedule.channel")?,
            },
        };
        let loss = match &s.loss {
            LossSection::Lossless => LossModel::lossless(s.slots),
            LossSection::Independent { p_loss } => {
                LossModel::independent(s.slots, ctx.num(p_loss, "sensor_suite.loss.p_loss")?)
            }
            LossSection::Shared { channel } => {
                LossModel::shared(s.slots, channel.build(&ctx, "sensor_suite.loss.channel")?)
            }
            LossSection::Patterns { patterns, channel } => LossModel {
                patterns: patterns.clone(),
                channel: channel.build(&ctx, "sensor_suite.loss.channel")?,
            },
        };
        let suite = SensorSuite { f, n_cov, p0, sensors, slots: s.slots };
        let agg = aggregate(&suite, &SchedulePlan { schedule, loss }, &tol).map_err(|e| at("sensor_suite", e))?;
        Ok(ResolvedModel { system: agg.system, channel: agg.channel, v_inv: Some(agg.v_inv), warnings: agg.warnings })
    }

    /// The initial covariances to probe in simulation.
    pub fn p0_grid(&self, model: &ResolvedModel, overrides: &BTreeMap<String, f64>) -> Result<Vec<CMatrix>> {
        if self.simulation.p0_grid.is_empty() {
            return Ok(vec![model.system.p0.clone()]);
        }
        let mut params = self.parameters.clone();
        params.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        let ctx = Ctx { params: &params };
        let n = model.system.n();
        self.simulation
            .p0_grid
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let path = format!("simulation.p0_grid[{i}]");
                let p = ctx.cmatrix(m, &path)?;
                if p.nrows() != n || p.ncols() != n {
                    return Err(Error::Config(format!("{path}: expected {n}x{n}")));
                }
                Ok(p)
            })
            .collect()
    }
}

/// A `system` config equivalent to `model`, with all expressions evaluated.
/// Used to audit what an aggregated sensor suite turned into.
pub fn resolved_config(base: &AnalysisConfig, model: &ResolvedModel) -> AnalysisConfig {
    let sys = &model.system;
    AnalysisConfig {
        parameters: BTreeMap::new(),
        system: Some(SystemSection {
            a: Matrix::from_cmatrix(&sys.a),
            q: Matrix::from_cmatrix(&sys.q),
            p0: Some(Matrix::from_cmatrix(&sys.p0)),
            alphabet: sys
                .alphabet
                .pairs()
                .iter()
                .map(|p| PairSection { label: Some(p.label.clone()), c: Matrix::from_cmatrix(&p.c), r: Matrix::from_cmatrix(&p.r) })
                .collect(),
        }),
        sensor_suite: None,
        channel: Some(ChannelSection::from_model(&model.channel)),
        engine: base.engine.clone(),
        simulation: SimulationSection { p0_grid: Vec::new(), ..base.simulation.clone() },
    }
}
