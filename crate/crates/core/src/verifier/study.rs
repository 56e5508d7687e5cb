use super::pull::{assemble_rhs, pull_integrands, scalar_rhs, stratonovich_bridge_check, Rhs};
use super::push::push_integrands;
use super::{synthesize_k_path, ExactFlow, KPathField, Scenario, Theorem, VerifyError};
use crate::flow::{integrate_flow, FlowPath, FlowState, FlowStatus};
use crate::geometry::{pullback, TensorValue};
use crate::stochastics::{DrivingPaths, RngStream, TimeGrid};
use crate::tensor::FieldRef;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// What one ensemble member contributes at one refinement level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    /// `sup_k max_c |LHS_k - RHS_k|` up to the stopping index.
    pub sup_residual: f64,
    pub term_l1: [f64; 6],
    pub jac_consistency: f64,
    pub stopped: bool,
    pub hops: usize,
    pub stop_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    pub paths: usize,
    pub levels: usize,
    pub workers: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { seed: 0, paths: 200, levels: 4, workers: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    pub steps: usize,
    pub h: f64,
    pub rms_sup_residual: f64,
    pub max_sup_residual: f64,
    pub term_l1: [f64; 6],
    pub jac_consistency_max: f64,
    pub stopped: usize,
    pub mean_hops: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub scenario: String,
    pub theorem: Theorem,
    pub seed: u64,
    pub paths: usize,
    pub levels: Vec<LevelStats>,
    /// `log₂` ratios of successive RMS residuals.
    pub local_orders: Vec<f64>,
    /// Least-squares slope of `log rms` against `log h`.
    pub fitted_order: f64,
    /// Fraction of paths stopped early (blow-up or chart exit) at the finest level.
    pub stopped_fraction: f64,
}

/// `x exp(c t + Σ a_j B^j_t)` for linear dilation coefficients.
fn exact_dilation_flow(scenario: &Scenario, drivers: &DrivingPaths) -> FlowPath {
    let c = scenario.decl.drift.params[0];
    let a: Vec<f64> = scenario.decl.diffusions.iter().map(|d| d.params[0]).collect();
    let n = scenario.dim();
    let grid = drivers.grid;
    let states = (0..=grid.steps)
        .map(|k| {
            let e = c * grid.t(k) + a.iter().enumerate().map(|(j, aj)| aj * drivers.bm[j][k]).sum::<f64>();
            let s = e.exp();
            FlowState {
                chart: scenario.chart0,
                coords: scenario.x0.iter().map(|x| x * s).collect(),
                jac: DMatrix::identity(n, n) * s,
                inv_jac: DMatrix::identity(n, n) / s,
            }
        })
        .collect();
    FlowPath { grid, scheme: scenario.scheme, start: 0, states, status: FlowStatus::Completed, hops: Vec::new() }
}

/// The flow of a scenario on the grid of `drivers`.
pub fn scenario_flow(scenario: &Scenario, drivers: &DrivingPaths) -> Result<FlowPath, VerifyError> {
    Ok(match scenario.exact_flow {
        Some(ExactFlow::Dilation) => exact_dilation_flow(scenario, drivers),
        None => integrate_flow(&scenario.sde, drivers, &scenario.x0, scenario.chart0, scenario.scheme)?,
    })
}

/// The synthesized `K` of a scenario on the grid of `drivers`.
pub fn scenario_k(scenario: &Scenario, drivers: &DrivingPaths) -> FieldRef {
    let kp = synthesize_k_path(&scenario.g, drivers, scenario.theorem.is_strat());
    Arc::new(KPathField::new(scenario, kp))
}

/// Both sides of the scenario's formula on one grid.
pub fn evaluate_sides(
    scenario: &Scenario,
    drivers: &DrivingPaths,
) -> Result<(Vec<TensorValue>, Rhs, Option<FlowPath>), VerifyError> {
    let k = scenario_k(scenario, drivers);
    if scenario.theorem.is_push() {
        let (lhs, it, stop) = push_integrands(scenario, drivers, &k)?;
        let rhs = assemble_rhs(scenario, &lhs[0], &it, drivers, stop, scenario.theorem.is_strat());
        return Ok((lhs, rhs, None));
    }
    let flow = scenario_flow(scenario, drivers)?;
    let lhs = super::eval_lhs(&flow, &k)?;
    let rhs = if scenario.theorem == Theorem::ScalarItoWentzell {
        scalar_rhs(scenario, &flow, &k, drivers)?
    } else {
        super::eval_rhs(scenario, &flow, &k, drivers)?
    };
    Ok((lhs, rhs, Some(flow)))
}

pub fn run_path(scenario: &Scenario, drivers: &DrivingPaths) -> Result<PathOutcome, VerifyError> {
    let (lhs, rhs, flow) = evaluate_sides(scenario, drivers)?;
    let sup_residual = lhs.iter().zip(&rhs.values).map(|(l, r)| l.sub(r).max_abs()).fold(0.0, f64::max);
    let stop_index = lhs.len() - 1;
    let (jac_consistency, hops, stopped) = match &flow {
        Some(f) => (f.jac_consistency_max(), f.hops.len(), f.status.stopped()),
        None => (0.0, 0, stop_index < drivers.grid.steps),
    };
    Ok(PathOutcome { sup_residual, term_l1: rhs.l1, jac_consistency, stopped, hops, stop_index })
}

/// Stratonovich-minus-Itô identity of the martingale sums on one path of a
/// pull-back scenario, see `stratonovich_bridge_check`.
pub fn bridge_deviation(scenario: &Scenario, drivers: &DrivingPaths) -> Result<f64, VerifyError> {
    let k = scenario_k(scenario, drivers);
    if scenario.theorem.is_push() {
        let (_, it, stop) = push_integrands(scenario, drivers, &k)?;
        return Ok(stratonovich_bridge_check(scenario, &it, drivers, stop));
    }
    let flow = scenario_flow(scenario, drivers)?;
    let it = pull_integrands(scenario, &flow, &k)?;
    Ok(stratonovich_bridge_check(scenario, &it, drivers, flow.last_index()))
}

/// Driving paths of one ensemble member at every level, coarse to fine.
pub fn member_drivers(
    scenario: &Scenario,
    seed: u64,
    path: u64,
    levels: usize,
) -> Result<Vec<DrivingPaths>, VerifyError> {
    let grid = TimeGrid::new(scenario.horizon, scenario.base_steps)?;
    let mut d = DrivingPaths::sample(scenario.drivers.clone(), grid, RngStream::new(seed, path))?;
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        if level > 0 {
            d = d.refine();
        }
        out.push(d.clone());
    }
    Ok(out)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Run the ensemble over all refinement levels with common noise and
/// summarize the residuals per level. Results do not depend on `workers`:
/// members are keyed by index and reduced in index order.
pub fn convergence_study(scenario: &Scenario, cfg: &StudyConfig) -> Result<ResidualReport, VerifyError> {
    let member = |p: usize| -> Result<Vec<PathOutcome>, VerifyError> {
        member_drivers(scenario, cfg.seed, p as u64, cfg.levels)?.iter().map(|d| run_path(scenario, d)).collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| VerifyError::InvalidScenario(format!("worker pool: {e}")))?;
    let outcomes: Vec<Vec<PathOutcome>> =
        pool.install(|| (0..cfg.paths).into_par_iter().map(member).collect::<Result<Vec<_>, _>>())?;
    let mut levels = Vec::with_capacity(cfg.levels);
    for level in 0..cfg.levels {
        let steps = scenario.base_steps << level;
        let per: Vec<&PathOutcome> = outcomes.iter().map(|o| &o[level]).collect();
        let np = per.len().max(1) as f64;
        let rms = (per.iter().map(|o| o.sup_residual * o.sup_residual).sum::<f64>() / np).sqrt();
        levels.push(LevelStats {
            level,
            steps,
            h: scenario.horizon / steps as f64,
            rms_sup_residual: rms,
            max_sup_residual: per.iter().map(|o| o.sup_residual).fold(0.0, f64::max),
            term_l1: std::array::from_fn(|i| per.iter().map(|o| o.term_l1[i]).sum::<f64>() / np),
            jac_consistency_max: per.iter().map(|o| o.jac_consistency).fold(0.0, f64::max),
            stopped: per.iter().filter(|o| o.stopped).count(),
            mean_hops: per.iter().map(|o| o.hops as f64).sum::<f64>() / np,
        });
    }
    let local_orders = levels.windows(2).map(|w| (w[0].rms_sup_residual / w[1].rms_sup_residual).log2()).collect();
    let usable: Vec<&LevelStats> =
        levels.iter().filter(|l| l.rms_sup_residual > 0.0 && l.rms_sup_residual.is_finite()).collect();
    let xs: Vec<f64> = usable.iter().map(|l| l.h.log2()).collect();
    let ys: Vec<f64> = usable.iter().map(|l| l.rms_sup_residual.log2()).collect();
    let stopped_fraction = levels.last().map_or(0.0, |l| l.stopped as f64 / cfg.paths.max(1) as f64);
    Ok(ResidualReport {
        scenario: scenario.name.clone(),
        theorem: scenario.theorem,
        seed: cfg.seed,
        paths: cfg.paths,
        levels,
        local_orders,
        fitted_order: least_squares_slope(&xs, &ys),
        stopped_fraction,
    })
}

/// `φ^*K` with an explicitly supplied Jacobian pair; convenience for callers
/// that hold flow states.
pub fn pulled_value(k: &FieldRef, t: f64, s: &FlowState) -> Result<TensorValue, VerifyError> {
    Ok(pullback(&k.eval(t, &s.coords, s.chart)?, &s.jac, &s.inv_jac))
}
