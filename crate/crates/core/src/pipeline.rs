//! End-to-end runs behind the command-line verbs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{AnalysisConfig, ResolvedModel, Strategy};
use crate::error::{Error, Result};
use crate::fmo::{partition, BlockSummary, FmoBlock};
use crate::kalman::{estimate_growth, GrowthEstimate, GrowthOptions};
use crate::linalg::Tolerances;
use crate::model::{validate, DiagnosticsReport, FiniteMarkov, Severity};
use crate::observability::build_lattice;
use crate::phi::{
    phi_closed_form, phi_exact, phi_monte_carlo, sigma_period, verdict, MonteCarloOptions, PhiResult, StabilityReport,
    Verdict,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Monte Carlo trials for `analyze`, simulation trials for `simulate`.
    pub trials: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub strategy: Option<Vec<Strategy>>,
    pub eps_margin: Option<f64>,
    pub parameters: BTreeMap<String, f64>,
    /// Attach a growth estimate to the analysis report.
    pub growth: bool,
}

impl Verdict {
    /// Process exit code: 0 stable, 10 unstable, 20 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Stable => 0,
            Verdict::Unstable => 10,
            Verdict::Inconclusive => 20,
        }
    }
}

pub fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockNotes {
    pub block: usize,
    /// Strategies tried before the one that produced the result, and why
    /// each was skipped.
    pub fallbacks: Vec<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub phi_ms: f64,
    pub growth_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub tool: &'static str,
    pub version: &'static str,
    /// SHA-256 of the config text.
    pub input_digest: String,
    pub parameters: BTreeMap<String, f64>,
    pub seed: u64,
    pub strategy: Vec<Strategy>,
    pub partition: Vec<BlockSummary>,
    pub notes: Vec<BlockNotes>,
    pub stability: StabilityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthEstimate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub timings: Timings,
}

impl ReportDocument {
    pub fn exit_code(&self) -> i32 {
        self.stability.verdict.exit_code()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the timings zeroed, for reproducibility checks.
    pub fn to_json_without_timings(&self) -> String {
        let mut copy = self.clone();
        copy.timings = Timings::default();
        copy.to_json()
    }

    /// One line per block plus the verdict.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,alpha_abs,phi,margin,method,ci_lo,ci_hi\n");
        for b in &self.stability.blocks {
            let (lo, hi) = b.ci.map_or((String::new(), String::new()), |c| (c[0].to_string(), c[1].to_string()));
            let method = serde_json::to_value(b.method).expect("method serializes");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{lo},{hi}",
                b.block,
                b.alpha_abs,
                b.phi,
                b.margin,
                method.as_str().unwrap_or_default()
            );
        }
        let _ = writeln!(out, "# verdict,{:?}", self.stability.verdict);
        out
    }
}

struct Engine<'a> {
    cfg: &'a AnalysisConfig,
    opts: &'a RunOptions,
    tol: Tolerances,
    strategy: Vec<Strategy>,
    seed: u64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a AnalysisConfig, opts: &'a RunOptions) -> Result<Self> {
        let mut tol = cfg.tolerances()?;
        if let Some(eps) = opts.eps_margin {
            tol.eps_margin = eps;
            tol.validate()?;
        }
        let strategy = opts.strategy.clone().unwrap_or_else(|| cfg.engine.strategy.clone());
        if strategy.is_empty() {
            return Err(Error::InvalidArgument("no strategy given".into()));
        }
        Ok(Engine { cfg, opts, tol, strategy, seed: opts.seed.unwrap_or(cfg.engine.seed) })
    }

    fn mc_options(&self, block: &FmoBlock, tau: usize) -> MonteCarloOptions {
        let mc = &self.cfg.engine.monte_carlo;
        let m = sigma_period(block, tau);
        MonteCarloOptions {
            trials: self.opts.trials.unwrap_or(mc.trials),
            t_grid: Some((1..=mc.horizon_factor.max(1)).map(|k| k * m).collect()),
            seed: self.seed,
            min_hits: mc.min_hits,
            chunks: mc.chunks,
        }
    }

    fn try_strategy(
        &self,
        s: Strategy,
        block: &FmoBlock,
        model: &ResolvedModel,
        finite: Option<&FiniteMarkov>,
    ) -> Result<std::result::Result<PhiResult, String>> {
        let need_finite = || format!("{s}: channel '{}' is not finite-state", model.channel.variant_name());
        match s {
            Strategy::ClosedForm => {
                let Some(f) = finite else { return Ok(Err(need_finite())) };
                Ok(phi_closed_form(block, &model.system.alphabet, f, &self.tol)?
                    .ok_or_else(|| "closed_form: block does not have exactly one unobservable class".to_string()))
            }
            Strategy::Exact => {
                let Some(f) = finite else { return Ok(Err(need_finite())) };
                let lattice = match build_lattice(block, &self.tol, self.cfg.engine.lattice_cap) {
                    Ok(l) => l,
                    Err(e @ (Error::CapExceeded { .. } | Error::NotApplicable(_))) => return Ok(Err(format!("exact: {e}"))),
                    Err(e) => return Err(e),
                };
                match phi_exact(block, &lattice, f, self.cfg.engine.sigma_cap) {
                    Ok(r) => Ok(Ok(r)),
                    Err(e @ Error::CapExceeded { .. }) => Ok(Err(format!("exact: {e}"))),
                    Err(e) => Err(e),
                }
            }
            Strategy::MonteCarlo => {
                let opts = self.mc_options(block, model.channel.period());
                Ok(Ok(phi_monte_carlo(block, &model.channel, &opts, &self.tol)?))
            }
        }
    }

    /// Φ for every block, trying strategies in order.
    fn phi_all(&self, model: &ResolvedModel) -> Result<(crate::fmo::FmoPartition, Vec<PhiResult>, Vec<BlockNotes>)> {
        let part = partition(&model.system, &self.tol)?;
        let finite = model.channel.to_finite();
        let mut results = Vec::with_capacity(part.blocks.len());
        let mut notes = Vec::with_capacity(part.blocks.len());
        for block in &part.blocks {
            let mut fallbacks = Vec::new();
            if block.is_zero_block() {
                results.push(PhiResult::zero_block(block));
                notes.push(BlockNotes { block: block.index, fallbacks });
                continue;
            }
            let mut found = None;
            for &s in &self.strategy {
                match self.try_strategy(s, block, model, finite.as_ref())? {
                    Ok(r) => {
                        found = Some(r);
                        break;
                    }
                    Err(why) => fallbacks.push(why),
                }
            }
            let r = found.ok_or_else(|| {
                Error::NotApplicable(format!("no strategy applies to block {}: {}", block.index, fallbacks.join("; ")))
            })?;
            results.push(r);
            notes.push(BlockNotes { block: block.index, fallbacks });
        }
        Ok((part, results, notes))
    }

    fn growth(&self, model: &ResolvedModel, p0: &crate::linalg::CMatrix) -> Result<GrowthEstimate> {
        let sim = &self.cfg.simulation;
        let opts = GrowthOptions {
            horizons: self.opts.horizons.clone().unwrap_or_else(|| sim.horizons.clone()),
            trials: self.opts.trials.unwrap_or(sim.trials),
            seed: self.seed,
            mode: sim.mode,
            batches: sim.batches,
        };
        estimate_growth(&model.system, &model.channel, p0, sim.t0, &opts, &self.tol)
    }
}

fn checked(model: &ResolvedModel) -> Result<DiagnosticsReport> {
    let diag = validate(&model.system, &model.channel)?;
    if !diag.is_valid() {
        let msgs: Vec<String> = diag
            .diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| format!("{}: {}", d.code, d.message))
            .collect();
        return Err(Error::InvalidModel(msgs.join("; ")));
    }
    Ok(diag)
}

fn effective_parameters(cfg: &AnalysisConfig, opts: &RunOptions) -> BTreeMap<String, f64> {
    let mut p = cfg.parameters.clone();
    p.extend(opts.parameters.iter().map(|(k, v)| (k.clone(), *v)));
    p
}

/// Partition, Φ per block with strategy fallback, verdict, and optionally a
/// growth estimate.
pub fn run_analyze(cfg: &AnalysisConfig, text: &str, opts: &RunOptions) -> Result<ReportDocument> {
    let start = Instant::now();
    let engine = Engine::new(cfg, opts)?;
    let model = cfg.resolve(&opts.parameters)?;
    let diag = checked(&model)?;

    let t = Instant::now();
    let (part, results, notes) = engine.phi_all(&model)?;
    let phi_ms = ms(t);
    let stability = verdict(&part, &results, engine.tol.eps_margin, diag)?;

    let t = Instant::now();
    let growth = if opts.growth { Some(engine.growth(&model, &model.system.p0)?) } else { None };
    let growth_ms = ms(t);

    Ok(ReportDocument {
        tool: "rmstab",
        version: VERSION,
        input_digest: digest(text),
        parameters: effective_parameters(cfg, opts),
        seed: engine.seed,
        strategy: engine.strategy.clone(),
        partition: part.summary(),
        notes,
        stability,
        growth,
        warnings: model.warnings.clone(),
        timings: Timings { phi_ms, growth_ms, total_ms: ms(start) },
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Sign of a fitted growth slope: positive when it clears three standard
/// errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeSign {
    Positive,
    NonPositive,
}

impl SlopeSign {
    pub fn of(slope: f64, se: f64) -> Self {
        if slope - 3.0 * se > 0.0 {
            SlopeSign::Positive
        } else {
            SlopeSign::NonPositive
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub estimates: Vec<GrowthEstimate>,
    /// Largest slope over the probed initial covariances.
    pub slope: f64,
    pub slope_se: f64,
    pub sign: SlopeSign,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agrees: Option<bool>,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    /// `p0,horizon,mean_norm,log_mean_norm,norm_se` rows.
    pub csv: String,
    pub summary: SimulationSummary,
}

/// Growth of `‖E Ψ‖` over the simulation horizons for each probed `P0`;
/// with `compare`, the analytic verdict is computed and checked against the
/// sign of the slope.
pub fn run_simulate(cfg: &AnalysisConfig, text: &str, opts: &RunOptions, compare: bool) -> Result<SimulationOutput> {
    let engine = Engine::new(cfg, opts)?;
    let model = cfg.resolve(&opts.parameters)?;
    checked(&model)?;
    let grid = cfg.p0_grid(&model, &opts.parameters)?;

    let mut csv = String::from("p0,horizon,mean_norm,log_mean_norm,norm_se\n");
    let mut estimates = Vec::with_capacity(grid.len());
    for (i, p0) in grid.iter().enumerate() {
        let g = engine.growth(&model, p0)?;
        for k in 0..g.horizons.len() {
            let _ = writeln!(
                csv,
                "{i},{},{:e},{:.12},{:e}",
                g.horizons[k], g.mean_norms[k], g.log_mean_norms[k], g.norm_se[k]
            );
        }
        estimates.push(g);
    }
    let worst = estimates
        .iter()
        .max_by(|a, b| a.slope.total_cmp(&b.slope))
        .ok_or_else(|| Error::InvalidArgument("no initial covariance to simulate".into()))?;
    let (slope, slope_se) = (worst.slope, worst.slope_se);
    let sign = SlopeSign::of(slope, slope_se);

    let (verdict, agrees) = if compare {
        let report = run_analyze(cfg, text, &RunOptions { growth: false, trials: None, ..opts.clone() })?;
        let v = report.stability.verdict;
        let agrees = match (v, sign) {
            (Verdict::Stable, SlopeSign::NonPositive) | (Verdict::Unstable, SlopeSign::Positive) => Some(true),
            (Verdict::Stable, SlopeSign::Positive) | (Verdict::Unstable, SlopeSign::NonPositive) => Some(false),
            (Verdict::Inconclusive, _) => None,
        };
        (Some(v), agrees)
    } else {
        (None, None)
    };
    let mut message = match sign {
        SlopeSign::Positive => format!("slope {slope:.5} ± {slope_se:.5} > 0"),
        SlopeSign::NonPositive => format!("slope {slope:.5} ± {slope_se:.5}, slope ≤ 0 within 3 se"),
    };
    match (verdict, agrees) {
        (Some(v), Some(true)) => message.push_str(&format!(", agrees with verdict {v:?}")),
        (Some(v), Some(false)) => message.push_str(&format!(", disagrees with verdict {v:?}")),
        (Some(v), None) => message.push_str(&format!(", no comparison with verdict {v:?}")),
        _ => {}
    }
    Ok(SimulationOutput {
        csv,
        summary: SimulationSummary { seed: engine.seed, estimates, slope, slope_se, sign, verdict, agrees, message },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiRow {
    pub value: f64,
    pub phi: Vec<f64>,
    pub margin: Vec<f64>,
    pub max_margin: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct PhiTable {
    pub parameter: String,
    pub blocks: usize,
    pub rows: Vec<PhiRow>,
}

impl PhiTable {
    pub fn header(&self) -> String {
        let mut h = self.parameter.clone();
        for b in 0..self.blocks {
            let _ = write!(h, ",phi_{b},margin_{b}");
        }
        h.push_str(",max_margin,verdict");
        h
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}", r.value);
            for (p, m) in r.phi.iter().zip(&r.margin) {
                let _ = write!(out, ",{p},{m}");
            }
            let v = serde_json::to_value(r.verdict).expect("verdict serializes");
            let _ = writeln!(out, ",{},{}", r.max_margin, v.as_str().unwrap_or_default());
        }
        out
    }

    /// Consecutive grid values between which the verdict changes.
    pub fn flips(&self) -> Vec<(f64, f64)> {
        self.rows.windows(2).filter(|w| w[0].verdict != w[1].verdict).map(|w| (w[0].value, w[1].value)).collect()
    }
}

/// Φ per block, margins and verdict across a grid of values for one
/// parameter.
pub fn run_phi_table(cfg: &AnalysisConfig, parameter: &str, grid: &[f64], opts: &RunOptions) -> Result<PhiTable> {
    if !cfg.parameters.contains_key(parameter) {
        return Err(Error::Config(format!(
            "unknown parameter '{parameter}'; declared: {}",
            cfg.parameters.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let engine = Engine::new(cfg, opts)?;
    let base = cfg.resolve(&opts.parameters)?;
    let blocks = partition(&base.system, &engine.tol)?.blocks.len();
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let mut over = opts.parameters.clone();
        over.insert(parameter.to_string(), value);
        let model = cfg.resolve(&over)?;
        let diag = checked(&model)?;
        let (part, results, _) = engine.phi_all(&model)?;
        if results.len() != blocks {
            return Err(Error::InvalidArgument(format!(
                "{parameter} = {value} changes the number of blocks from {blocks} to {}",
                results.len()
            )));
        }
        let report = verdict(&part, &results, engine.tol.eps_margin, diag)?;
        let max_margin = report.blocks.iter().map(|b| b.margin).fold(0.0, f64::max);
        rows.push(PhiRow {
            value,
            phi: report.blocks.iter().map(|b| b.phi).collect(),
            margin: report.blocks.iter().map(|b| b.margin).collect(),
            max_margin,
            verdict: report.verdict,
        });
    }
    Ok(PhiTable { parameter: parameter.to_string(), blocks, rows })
}

/// Validation outcome for the `validate` verb.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub input_digest: String,
    pub diagnostics: DiagnosticsReport,
    pub channel: &'static str,
    pub partition: Vec<BlockSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// For sensor suites: the equivalent `system` config.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved: Option<AnalysisConfig>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.diagnostics.is_valid()
    }
}

pub fn run_validate(cfg: &AnalysisConfig, text: &str, opts: &RunOptions) -> Result<ValidationReport> {
    let tol = cfg.tolerances()?;
    let model = cfg.resolve(&opts.parameters)?;
    let diagnostics = validate(&model.system, &model.channel)?;
    let part = if diagnostics.is_valid() { partition(&model.system, &tol)?.summary() } else { Vec::new() };
    let resolved = cfg.sensor_suite.as_ref().map(|_| crate::config::resolved_config(cfg, &model));
    Ok(ValidationReport {
        input_digest: digest(text),
        channel: model.channel.variant_name(),
        diagnostics,
        partition: part,
        warnings: model.warnings,
        resolved,
    })
}
