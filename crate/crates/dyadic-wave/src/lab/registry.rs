//! The experiment table. Each entry owns a parameter schema, a tolerance
//! schema with defaults, and a fixed CSV column order.

use super::{loglog_fit, Check, ExperimentConfig, NamedFit, Outcome, Table, ToleranceSource};
use crate::dyadic::{block, finest_resolved};
use crate::eikonal::{self, MetricSnapshot, ParametrixExperimentConfig, StandardMetric};
use crate::error::{Error, Result};
use crate::grid::{lebesgue_norm, Field, Grid, WaveState};
use crate::microlocal::{self, PropagationConfig};
use crate::paraproduct::{decompose, support_leakage};
use crate::quasilinear::{self as ql, PolynomialLaw, SchemeConfig};
use crate::waveprop::{self, DispersiveConfig, FrequencyScalingConfig, StrichartzConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::time::Instant;

/// Name, one-line summary and CSV columns of a registered experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentInfo {
    pub name: &'static str,
    pub summary: &'static str,
    pub columns: &'static [&'static str],
}

pub(super) struct Ctx {
    seed: u64,
    tolerances: Value,
    defaults: Value,
    started: Instant,
}

impl Ctx {
    /// A tolerance counts as configured when it differs from the default.
    fn source(&self, key: &str) -> ToleranceSource {
        if self.tolerances.get(key) != self.defaults.get(key) {
            ToleranceSource::Config
        } else {
            ToleranceSource::Default
        }
    }

    fn at_most(&self, name: &str, value: f64, key: &str, bound: f64) -> Check {
        Check::new(name, value, None, Some(bound), key, self.source(key))
    }

    fn at_least(&self, name: &str, value: f64, key: &str, bound: f64) -> Check {
        Check::new(name, value, Some(bound), None, key, self.source(key))
    }

    fn within(&self, name: &str, value: f64, key: &str, target: f64, tol: f64) -> Check {
        Check::new(name, value, Some(target - tol), Some(target + tol), key, self.source(key))
    }

    fn runtime(&self, key: &str, limit: f64) -> Check {
        self.at_most("runtime_seconds", self.started.elapsed().as_secs_f64(), key, limit)
    }
}

trait Experiment {
    const INFO: ExperimentInfo;
    type Params: Serialize + DeserializeOwned + Default;
    type Tolerances: Serialize + DeserializeOwned + Default;

    /// Defaults that the given (raw) params are laid over.
    fn base(_raw: &Value) -> Result<Self::Params> {
        Ok(Self::Params::default())
    }

    fn run(p: &Self::Params, tol: &Self::Tolerances, ctx: &Ctx) -> Result<Outcome>;
}

fn overlay(base: Value, raw: &Value, what: &str) -> Result<Value> {
    match (base, raw) {
        (base, Value::Null) => Ok(base),
        (Value::Object(mut b), Value::Object(r)) => {
            for (k, v) in r {
                b.insert(k.clone(), v.clone());
            }
            Ok(Value::Object(b))
        }
        _ => Err(Error::Config(format!("{what} must be a JSON object"))),
    }
}

fn typed<T: DeserializeOwned>(v: &Value, what: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn resolve_typed<E: Experiment>(params: &Value, tolerances: &Value) -> Result<(Value, Value)> {
    let p = overlay(serde_json::to_value(E::base(params)?)?, params, "params")?;
    let p: E::Params = typed(&p, "params")?;
    let t = overlay(serde_json::to_value(E::Tolerances::default())?, tolerances, "tolerances")?;
    let t: E::Tolerances = typed(&t, "tolerances")?;
    Ok((serde_json::to_value(p)?, serde_json::to_value(t)?))
}

fn execute_typed<E: Experiment>(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p: E::Params = typed(&cfg.params, "params")?;
    let t: E::Tolerances = typed(&cfg.tolerances, "tolerances")?;
    let ctx = Ctx {
        seed: cfg.seed,
        tolerances: cfg.tolerances.clone(),
        defaults: serde_json::to_value(E::Tolerances::default())?,
        started: Instant::now(),
    };
    E::run(&p, &t, &ctx)
}

macro_rules! registry {
    ($($e:ty),* $(,)?) => {
        pub fn experiments() -> Vec<ExperimentInfo> {
            vec![$(<$e as Experiment>::INFO),*]
        }

        pub(super) fn resolve(name: &str, params: &Value, tolerances: &Value) -> Result<(Value, Value)> {
            $(if name == <$e as Experiment>::INFO.name {
                return resolve_typed::<$e>(params, tolerances);
            })*
            Err(Error::UnknownExperiment(name.to_string()))
        }

        /// Runs a config already passed through `resolve`.
        pub(super) fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
            $(if cfg.experiment == <$e as Experiment>::INFO.name {
                return execute_typed::<$e>(cfg);
            })*
            Err(Error::UnknownExperiment(cfg.experiment.clone()))
        }
    };
}

registry!(
    DispDecay,
    StrichartzH,
    FreqScaling,
    Interaction,
    Paraproduct,
    Parametrix,
    PartitionCount,
    QuasilinearIterate,
    MicrolocalProduct,
    MicrolocalPropagate,
);

pub fn experiment_names() -> Vec<&'static str> {
    experiments().iter().map(|e| e.name).collect()
}

fn rows_from_fit(columns: &[&str], fit: &waveprop::DecayFit) -> Table {
    let mut t = Table::new(columns);
    for (x, y) in fit.abscissa.iter().zip(&fit.ordinate) {
        t.push(vec![(*x).into(), (*y).into()]);
    }
    t
}

// ------------------------------------------------------------ disp-decay

struct DispDecay;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DispTolerances {
    slope: f64,
    min_decades: f64,
    max_seconds: f64,
}

impl Default for DispTolerances {
    fn default() -> Self {
        Self { slope: 0.15, min_decades: 1.0, max_seconds: 120.0 }
    }
}

impl Experiment for DispDecay {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "disp-decay",
        summary: "sup-norm decay of a ring-localized free wave before wrap-around",
        columns: &["t", "sup_norm"],
    };
    type Params = DispersiveConfig;
    type Tolerances = DispTolerances;

    fn base(raw: &Value) -> Result<DispersiveConfig> {
        match raw.get("dim") {
            Some(d) => Ok(DispersiveConfig::for_dim(typed(d, "params.dim")?)),
            None => Ok(DispersiveConfig::default()),
        }
    }

    fn run(p: &DispersiveConfig, tol: &DispTolerances, ctx: &Ctx) -> Result<Outcome> {
        let r = waveprop::dispersive_experiment(p)?;
        let checks = vec![
            ctx.within("slope", r.fit.slope, "slope", r.expected_slope, tol.slope),
            ctx.at_least("decades", (r.t_max / r.t_min).log10(), "min_decades", tol.min_decades),
            ctx.runtime("max_seconds", tol.max_seconds),
        ];
        Ok(Outcome {
            table: rows_from_fit(Self::INFO.columns, &r.fit),
            fits: vec![NamedFit::from_decay("sup_norm_vs_t", &r.fit)],
            checks,
            details: serde_json::to_value(&r)?,
        })
    }
}

// ---------------------------------------------------------- strichartz-h

struct StrichartzH;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SlopeTolerances {
    slope: f64,
    max_seconds: f64,
}

impl Default for SlopeTolerances {
    fn default() -> Self {
        Self { slope: 0.2, max_seconds: 300.0 }
    }
}

impl Experiment for StrichartzH {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "strichartz-h",
        summary: "L^2_T L^inf norm of packets with spectrum in an h-ball, against h",
        columns: &["h", "box_scale", "t_end", "fidelity_limit", "norm"],
    };
    type Params = StrichartzConfig;
    type Tolerances = SlopeTolerances;

    fn run(p: &StrichartzConfig, tol: &SlopeTolerances, ctx: &Ctx) -> Result<Outcome> {
        let r = waveprop::strichartz_h_experiment(p)?;
        let mut table = Table::new(Self::INFO.columns);
        for q in &r.points {
            table.push(vec![q.h.into(), q.box_scale.into(), q.t_end.into(), q.fidelity_limit.into(), q.norm.into()]);
        }
        let checks = vec![
            ctx.within("slope", r.fit.slope, "slope", r.expected_slope, tol.slope),
            ctx.runtime("max_seconds", tol.max_seconds),
        ];
        Ok(Outcome {
            table,
            fits: vec![NamedFit::from_decay("norm_vs_h", &r.fit)],
            checks,
            details: serde_json::to_value(&r)?,
        })
    }
}

// --------------------------------------------------------- freq-scaling

struct FreqScaling;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FreqTolerances {
    slope: f64,
}

impl Default for FreqTolerances {
    fn default() -> Self {
        Self { slope: 0.2 }
    }
}

impl Experiment for FreqScaling {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "freq-scaling",
        summary: "L^2_T L^inf norm of the gradient of normalized block data, against 2^q",
        columns: &["q", "box_scale", "fidelity_limit", "norm"],
    };
    type Params = FrequencyScalingConfig;
    type Tolerances = FreqTolerances;

    fn run(p: &FrequencyScalingConfig, tol: &FreqTolerances, ctx: &Ctx) -> Result<Outcome> {
        let r = waveprop::frequency_scaling_experiment(p)?;
        let mut table = Table::new(Self::INFO.columns);
        for q in &r.points {
            table.push(vec![q.q.into(), q.box_scale.into(), q.fidelity_limit.into(), q.norm.into()]);
        }
        let checks =
            vec![ctx.within("reduced_slope", r.reduced_slope, "slope", r.expected_reduced_slope, tol.slope)];
        Ok(Outcome {
            table,
            fits: vec![NamedFit::from_decay("norm_vs_frequency", &r.fit)],
            checks,
            details: serde_json::to_value(&r)?,
        })
    }
}

// ---------------------------------------------------------- interaction

struct Interaction;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InteractionTolerances {
    slope: f64,
    identity: f64,
}

impl Default for InteractionTolerances {
    fn default() -> Self {
        Self { slope: 0.3, identity: 1e-10 }
    }
}

impl Experiment for Interaction {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "interaction",
        summary: "low-frequency output of products of reflected packet pairs, against h",
        columns: &["h", "t_end", "norm", "unlocalized_norm", "identity_error", "pieces"],
    };
    type Params = waveprop::InteractionConfig;
    type Tolerances = InteractionTolerances;

    fn run(p: &waveprop::InteractionConfig, tol: &InteractionTolerances, ctx: &Ctx) -> Result<Outcome> {
        let r = waveprop::interaction_experiment(p)?;
        let mut table = Table::new(Self::INFO.columns);
        for q in &r.points {
            table.push(vec![
                q.h.into(),
                q.t_end.into(),
                q.norm.into(),
                q.unlocalized_norm.into(),
                q.identity_error.into(),
                q.pieces.into(),
            ]);
        }
        let checks = vec![
            ctx.within("slope", r.fit.slope, "slope", r.expected_slope, tol.slope),
            ctx.at_most("partition_identity_error", r.max_identity_error, "identity", tol.identity),
        ];
        Ok(Outcome {
            table,
            fits: vec![NamedFit::from_decay("norm_vs_h", &r.fit)],
            checks,
            details: serde_json::to_value(&r)?,
        })
    }
}

// ---------------------------------------------------------- paraproduct

struct Paraproduct;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParaproductParams {
    dim: usize,
    points_per_axis: usize,
    box_scale: f64,
    /// Spectral radius of the random factors.
    band: f64,
    pairs: usize,
}

impl Default for ParaproductParams {
    fn default() -> Self {
        Self { dim: 2, points_per_axis: 32, box_scale: 1.0, band: 7.9, pairs: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParaproductTolerances {
    reconstruction: f64,
    leakage: f64,
    partition: f64,
    orthogonality_low: f64,
    orthogonality_high: f64,
}

impl Default for ParaproductTolerances {
    fn default() -> Self {
        Self { reconstruction: 1e-12, leakage: 1e-12, partition: 1e-12, orthogonality_low: 1.0 / 3.0, orthogonality_high: 3.0 }
    }
}

impl Experiment for Paraproduct {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "paraproduct",
        summary: "Bony reconstruction, summand supports and block invariants on random fields",
        columns: &["pair", "reconstruction_error", "max_leakage", "partition_residual", "orthogonality_ratio"],
    };
    type Params = ParaproductParams;
    type Tolerances = ParaproductTolerances;

    fn run(p: &ParaproductParams, tol: &ParaproductTolerances, ctx: &Ctx) -> Result<Outcome> {
        let grid = Grid::new(p.dim, p.points_per_axis, p.box_scale)?;
        let padded = 2 * p.points_per_axis;
        let q_max = finest_resolved(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut table = Table::new(Self::INFO.columns);
        let (mut worst_rec, mut worst_leak, mut worst_part) = (0.0f64, 0.0f64, 0.0f64);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..p.pairs {
            let a = Field::random_band_limited(grid, p.band, false, &mut rng);
            let b = Field::random_band_limited(grid, p.band, false, &mut rng);
            let split = decompose(&a, &b)?;
            let direct = a.zero_padded(padded)?.mul(&b.zero_padded(padded)?);
            let rec = split.reconstruction().relative_distance(&direct);
            let leak = split.para_ab_terms.iter().chain(&split.para_ba_terms).map(support_leakage).fold(0.0, f64::max);
            // block invariants need the spectrum inside the plateau of the finest block
            let c = Field::random_band_limited(grid, 0.75 * 2f64.powi(q_max + 1), true, &mut rng);
            let blocks = (-1..=q_max).map(|q| block(&c, q)).collect::<Result<Vec<_>>>()?;
            let sum = blocks[1..].iter().fold(blocks[0].clone(), |s, x| s.add(x));
            let part = sum.relative_distance(&c);
            let total = lebesgue_norm(&c, 2.0)?.powi(2);
            let pieces = blocks.iter().map(|x| lebesgue_norm(x, 2.0).map(|v| v * v)).sum::<Result<f64>>()?;
            let ratio = pieces / total;
            worst_rec = worst_rec.max(rec);
            worst_leak = worst_leak.max(leak);
            worst_part = worst_part.max(part);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            table.push(vec![i.into(), rec.into(), leak.into(), part.into(), ratio.into()]);
        }
        let checks = vec![
            ctx.at_most("reconstruction_error", worst_rec, "reconstruction", tol.reconstruction),
            ctx.at_most("support_leakage", worst_leak, "leakage", tol.leakage),
            ctx.at_most("partition_residual", worst_part, "partition", tol.partition),
            ctx.at_least("orthogonality_ratio_min", lo, "orthogonality_low", tol.orthogonality_low),
            ctx.at_most("orthogonality_ratio_max", hi, "orthogonality_high", tol.orthogonality_high),
        ];
        Ok(Outcome { table, fits: vec![], checks, details: json!({ "finest_block": q_max }) })
    }
}

// ------------------------------------------------------------ parametrix

struct Parametrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegressionSpec {
    points_per_axis: usize,
    q: i32,
    times: Vec<f64>,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        Self { points_per_axis: 64, q: 3, times: vec![0.2, 0.5] }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParametrixParams {
    ladder: ParametrixExperimentConfig,
    /// Flat-metric comparison against exact free evolution.
    regression: RegressionSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ParametrixTolerances {
    regression: f64,
    min_factor: f64,
    max_seconds: f64,
}

impl Default for ParametrixTolerances {
    fn default() -> Self {
        Self { regression: 1e-8, min_factor: 1.5, max_seconds: 600.0 }
    }
}

fn flat_regression(dim: usize, spec: &RegressionSpec, cfg: &eikonal::ParametrixConfig) -> Result<f64> {
    let grid = Grid::new(dim, spec.points_per_axis, 1.0)?;
    let m = MetricSnapshot::flat(grid);
    let (u0, u1) = eikonal::packet_data(&grid, &m, spec.q, 0.3, 1.0)?;
    let mut times = vec![0.0];
    times.extend(&spec.times);
    let p = eikonal::build_parametrix(&m, &u0, &u1, &times, cfg)?;
    let data = WaveState::new(u0, u1, 0.0)?;
    let series = eikonal::assemble_parametrix(&p)?;
    Ok(series.iter().map(|(t, u)| u.relative_distance(&waveprop::evolve_free(&data, t).position)).fold(0.0, f64::max))
}

impl Experiment for Parametrix {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "parametrix",
        summary: "end-of-interval parametrix residual on the metric suite, against q",
        columns: &["metric", "q", "interval", "residual", "factor_to_next", "points_per_axis", "directions", "reference_steps"],
    };
    type Params = ParametrixParams;
    type Tolerances = ParametrixTolerances;

    fn run(p: &ParametrixParams, tol: &ParametrixTolerances, ctx: &Ctx) -> Result<Outcome> {
        let regression = flat_regression(p.ladder.dim, &p.regression, &p.ladder.parametrix)?;
        let r = eikonal::parametrix_experiment(&p.ladder)?;
        let mut table = Table::new(Self::INFO.columns);
        let mut fits = Vec::new();
        for l in &r.ladders {
            for (i, rep) in l.reports.iter().enumerate() {
                table.push(vec![
                    l.metric.name().into(),
                    rep.q.into(),
                    rep.interval.into(),
                    rep.residual.into(),
                    l.factors.get(i).copied().unwrap_or(f64::NAN).into(),
                    rep.points_per_axis.into(),
                    rep.directions.into(),
                    rep.reference_steps.into(),
                ]);
            }
            let pts: Vec<(f64, f64)> = l.reports.iter().map(|r| (2f64.powi(r.q), r.residual)).collect();
            if let Ok(f) = loglog_fit(&pts, None) {
                fits.push(NamedFit::from_loglog(&format!("residual_vs_frequency_{}", l.metric.name()), &f));
            }
        }
        let checks = vec![
            ctx.at_most("flat_regression_error", regression, "regression", tol.regression),
            ctx.at_least("min_factor_per_q", r.min_factor, "min_factor", tol.min_factor),
            ctx.runtime("max_seconds", tol.max_seconds),
        ];
        let mut details = serde_json::to_value(&r)?;
        details["flat_regression_error"] = json!(regression);
        Ok(Outcome { table, fits, checks, details })
    }
}

// ------------------------------------------------ quasilinear experiments

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SchemeParams {
    scheme: SchemeConfig,
    /// Spectral width of the random Gaussian data.
    data_width: f64,
    /// Sup norm of `u_0`.
    data_amplitude: f64,
    law: PolynomialLaw,
    q_ladder: Vec<i32>,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            scheme: SchemeConfig::default(),
            data_width: 6.0,
            data_amplitude: 0.02,
            law: PolynomialLaw::standard(1.0, 0.5),
            q_ladder: (3..=6).collect(),
        }
    }
}

impl SchemeParams {
    fn data(&self, seed: u64) -> Result<WaveState> {
        ql::smooth_data(self.scheme.grid()?, self.data_width, self.data_amplitude, seed)
    }
}

struct PartitionCount;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PartitionTolerances {
    max_slope: f64,
    /// Number of scales where the slack-budget count may differ from the closed form.
    slack_mismatches: f64,
}

impl Default for PartitionTolerances {
    fn default() -> Self {
        Self { max_slope: 0.40, slack_mismatches: 0.0 }
    }
}

impl Experiment for PartitionCount {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "partition-count",
        summary: "interval counts on iteration-produced profiles, against 2^q T",
        columns: &[
            "q",
            "frequency_time",
            "count",
            "slack_count",
            "length_only_count",
            "hessian_max",
            "remainder_total",
        ],
    };
    type Params = SchemeParams;
    type Tolerances = PartitionTolerances;

    fn run(p: &SchemeParams, tol: &PartitionTolerances, ctx: &Ctx) -> Result<Outcome> {
        let cfg = &p.scheme;
        let run = ql::iterate_scheme(&p.data(ctx.seed)?, &p.law, cfg)?;
        let reports = ql::analyze_scales(&run, &p.q_ladder)?;
        let times = run.solution.times();
        let mut table = Table::new(Self::INFO.columns);
        let mut pts = Vec::new();
        let mut mismatches = 0usize;
        for r in &reports {
            let h_max = r.hessian.iter().copied().fold(0.0, f64::max);
            // budgets that cannot bind: the whole horizon fits in one Hessian
            // budget and every interval may carry the full remainder
            let mut slack = ql::PartitionBudget::for_scale(cfg, r.q);
            slack.hessian = Some(cfg.eps_hat + 2.0 * cfg.horizon * h_max);
            slack.remainder_fraction = Some(1.0);
            let slack_count = ql::partition_intervals(times, &r.hessian, &r.remainder.norms, r.q, &slack)?.count();
            let closed = ql::length_only_count(r.q, cfg.horizon, cfg.delta, cfg.eps);
            if slack_count != closed {
                mismatches += 1;
            }
            let lam = 2f64.powi(r.q) * cfg.horizon;
            pts.push((lam, r.partition.count() as f64));
            table.push(vec![
                r.q.into(),
                lam.into(),
                r.partition.count().into(),
                slack_count.into(),
                closed.into(),
                h_max.into(),
                r.remainder.total.into(),
            ]);
        }
        let fit = loglog_fit(&pts, None)?;
        let checks = vec![
            ctx.at_most("slack_count_mismatches", mismatches as f64, "slack_mismatches", tol.slack_mismatches),
            ctx.at_most("count_slope", fit.slope, "max_slope", tol.max_slope),
        ];
        let details = json!({
            "partitions": reports.iter().map(|r| &r.partition).collect::<Vec<_>>(),
            "steps": run.steps,
            "dt": run.dt,
        });
        Ok(Outcome { table, fits: vec![NamedFit::from_loglog("count_vs_frequency_time", &fit)], checks, details })
    }
}

struct QuasilinearIterate;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IterateParams {
    run: SchemeParams,
    /// First `n` whose ratio `d_{n+1} / d_n` must contract.
    contraction_from: usize,
    /// Space and time refinement of the direct-solver oracle.
    oracle_refine: usize,
}

impl Default for IterateParams {
    fn default() -> Self {
        Self { run: SchemeParams::default(), contraction_from: 3, oracle_refine: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct IterateTolerances {
    contraction: f64,
    oracle: f64,
    free_wave: f64,
    max_energy_constant: f64,
}

impl Default for IterateTolerances {
    fn default() -> Self {
        Self { contraction: 0.5, oracle: 1e-3, free_wave: 1e-8, max_energy_constant: 1e3 }
    }
}

/// Largest relative sup-norm gap between the zero-metric iterate and free
/// evolution of the top truncation of the data.
fn free_wave_error(data: &WaveState, cfg: &SchemeConfig) -> Result<f64> {
    let run = ql::iterate_scheme(data, &PolynomialLaw::zero(), cfg)?;
    let top = ql::truncate_data(data, cfg.n_max as i32);
    let (p, v) = (data.position.max_abs().max(1e-300), data.velocity.max_abs().max(1e-300));
    Ok(run
        .solution
        .iter()
        .map(|(t, st)| {
            let exact = waveprop::evolve_free(&top, t);
            (st.position.sub(&exact.position).max_abs() / p).max(st.velocity.sub(&exact.velocity).max_abs() / v)
        })
        .fold(0.0, f64::max))
}

impl Experiment for QuasilinearIterate {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "quasilinear-iterate",
        summary: "successive differences, oracle error and energy bound of the truncated iteration",
        columns: &["n", "strichartz", "energy", "difference", "ratio"],
    };
    type Params = IterateParams;
    type Tolerances = IterateTolerances;

    fn run(p: &IterateParams, tol: &IterateTolerances, ctx: &Ctx) -> Result<Outcome> {
        let cfg = &p.run.scheme;
        let data = p.run.data(ctx.seed)?;
        let run = ql::iterate_scheme(&data, &p.run.law, cfg)?;
        let ratios = run.trace.ratios();
        let mut table = Table::new(Self::INFO.columns);
        for (i, e) in run.trace.entries.iter().enumerate() {
            let ratio = if i + 1 < run.trace.entries.len() { ratios[i] } else { f64::NAN };
            table.push(vec![e.n.into(), e.strichartz.into(), e.energy.into(), e.difference.into(), ratio.into()]);
        }
        let worst_ratio = ratios.iter().skip(p.contraction_from).copied().fold(f64::NEG_INFINITY, f64::max);
        let oracle = ql::oracle_error(&run, &p.run.law, p.oracle_refine)?;
        let energy = ql::energy_monitor(&run.solution, &run.metric, cfg.s)?;
        let constant = if energy.flagged { f64::INFINITY } else { energy.constant };
        let free = free_wave_error(&data, cfg)?;
        let scales = ql::analyze_scales(&run, &p.run.q_ladder)?;
        let checks = vec![
            ctx.at_most("contraction_ratio", worst_ratio, "contraction", tol.contraction),
            ctx.at_most("oracle_error", oracle, "oracle", tol.oracle),
            ctx.at_most("energy_constant", constant, "max_energy_constant", tol.max_energy_constant),
            ctx.at_most("zero_metric_free_wave_error", free, "free_wave", tol.free_wave),
        ];
        let details = json!({
            "data_size": run.data_size,
            "steps": run.steps,
            "dt": run.dt,
            "strichartz": run.strichartz,
            "energy": run.energy,
            "energy_constant": energy.constant,
            "energy_flagged": energy.flagged,
            "glue": scales.iter().map(|s| &s.glue).collect::<Vec<_>>(),
            "remainder_coefficients": scales.iter().map(|s| (s.q, s.remainder.coefficient)).collect::<Vec<_>>(),
            "coefficient_l2": ql::coefficient_l2(&scales),
        });
        Ok(Outcome { table, fits: vec![], checks, details })
    }
}

// ---------------------------------------------------- microlocal-product

struct MicrolocalProduct;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProductParams {
    brute_points: usize,
    brute_box_scale: f64,
    brute_symbols: usize,
    ladder: microlocal::InteractionConfig,
}

impl Default for ProductParams {
    fn default() -> Self {
        Self { brute_points: 64, brute_box_scale: 1.0, brute_symbols: 20, ladder: microlocal::InteractionConfig::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ProductTolerances {
    brute_force: f64,
    min_exponent: f64,
    /// Guards against symbols that cut the packets away altogether.
    min_resonant_ratio: f64,
}

impl Default for ProductTolerances {
    fn default() -> Self {
        Self { brute_force: 1e-8, min_exponent: 2.0, min_resonant_ratio: 0.1 }
    }
}

impl Experiment for MicrolocalProduct {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "microlocal-product",
        summary: "quantization against the defining sum, and product decay along the separation ladder",
        columns: &["separation", "weight", "value", "in_regime"],
    };
    type Params = ProductParams;
    type Tolerances = ProductTolerances;

    fn run(p: &ProductParams, tol: &ProductTolerances, ctx: &Ctx) -> Result<Outcome> {
        let errors = microlocal::brute_force_discrepancy(p.brute_points, p.brute_box_scale, p.brute_symbols, ctx.seed)?;
        let brute = errors.iter().copied().fold(0.0, f64::max);
        let r = microlocal::interaction_ladder(&p.ladder)?;
        let mut table = Table::new(Self::INFO.columns);
        for l in &r.ladder {
            table.push(vec![l.separation.into(), l.weight.into(), l.value.into(), l.in_regime.into()]);
        }
        let checks = vec![
            ctx.at_most("brute_force_discrepancy", brute, "brute_force", tol.brute_force),
            ctx.at_least("decay_exponent", r.exponent, "min_exponent", tol.min_exponent),
            ctx.at_least("resonant_ratio", r.resonant_ratio, "min_resonant_ratio", tol.min_resonant_ratio),
        ];
        let fits = r.fit.iter().map(|f| NamedFit::from_loglog("value_vs_weight", f)).collect();
        let mut details = serde_json::to_value(&r)?;
        details["brute_force_errors"] = json!(errors);
        Ok(Outcome { table, fits, checks, details })
    }
}

// -------------------------------------------------- microlocal-propagate

struct MicrolocalPropagate;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PropagateParams {
    metrics: Vec<StandardMetric>,
    config: PropagationConfig,
}

impl Default for PropagateParams {
    fn default() -> Self {
        // C = 2^-11 puts the flowed point several g-balls from the start;
        // with C = 1 the packet moves less than one ball
        Self {
            metrics: vec![StandardMetric::Flat, StandardMetric::Conformal, StandardMetric::Shear, StandardMetric::Anisotropic],
            config: PropagationConfig { c_k: 2f64.powi(-11), ..PropagationConfig::default() },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PropagateTolerances {
    flat_ratio: f64,
    ratio: f64,
}

impl Default for PropagateTolerances {
    fn default() -> Self {
        Self { flat_ratio: 0.2, ratio: 1.0 }
    }
}

impl Experiment for MicrolocalPropagate {
    const INFO: ExperimentInfo = ExperimentInfo {
        name: "microlocal-propagate",
        summary: "seminorm of a propagated packet at the flowed-out point over that at the start",
        columns: &["metric", "k", "h", "travel", "at_flowed", "at_start", "ratio", "steps"],
    };
    type Params = PropagateParams;
    type Tolerances = PropagateTolerances;

    fn run(p: &PropagateParams, tol: &PropagateTolerances, ctx: &Ctx) -> Result<Outcome> {
        let mut table = Table::new(Self::INFO.columns);
        let mut checks = Vec::new();
        let mut reports = Map::new();
        for &metric in &p.metrics {
            let r = microlocal::propagate_wavepacket(&PropagationConfig { metric, ..p.config.clone() })?;
            table.push(vec![
                metric.name().into(),
                r.g.k.into(),
                r.g.h.into(),
                r.travel.into(),
                r.at_flowed.value.into(),
                r.at_start.value.into(),
                r.ratio.into(),
                r.steps.into(),
            ]);
            let name = format!("ratio_{}", metric.name());
            checks.push(if metric == StandardMetric::Flat {
                ctx.at_most(&name, r.ratio, "flat_ratio", tol.flat_ratio)
            } else {
                ctx.at_most(&name, r.ratio, "ratio", tol.ratio)
            });
            reports.insert(metric.name().to_string(), serde_json::to_value(&r)?);
        }
        Ok(Outcome { table, fits: vec![], checks, details: Value::Object(reports) })
    }
}
