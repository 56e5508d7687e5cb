//! Stochastic flows `dφ = b dt + Σ ξ_j ∘ dB^j` on a chart atlas, integrated
//! together with their Jacobian `Dφ` and its inverse.

use crate::geometry::{invert, ChartAtlas, ChartId, GeometryError, Valence};
use crate::jet::MAX_DIM;
use crate::stochastics::{DrivingPaths, TimeGrid};
use crate::tensor::{FieldError, FieldRef};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("the Stratonovich scheme needs diffusions that are C¹ in time; `{0}` is not")]
    SchemeSmoothnessMismatch(String),
    #[error("flow needs {needed} Brownian components, drivers provide {got}")]
    NotEnoughBrownian { needed: usize, got: usize },
    #[error("`{0}` is not a vector field of the flow's dimension")]
    NotAVectorField(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler-Maruyama on the Itô form of the equation.
    #[default]
    Euler,
    /// Stochastic Heun (predictor-corrector) on the Stratonovich form.
    Heun,
}

#[derive(Clone, Debug)]
pub struct FlowSde {
    pub drift: FieldRef,
    pub diffusions: Vec<FieldRef>,
    pub atlas: Arc<ChartAtlas>,
    /// Coordinates beyond this radius count as blow-up.
    pub r_max: f64,
}

pub const DEFAULT_R_MAX: f64 = 1e6;

impl FlowSde {
    pub fn new(drift: FieldRef, diffusions: Vec<FieldRef>, atlas: Arc<ChartAtlas>) -> Result<FlowSde, FlowError> {
        for f in std::iter::once(&drift).chain(&diffusions) {
            if f.valence() != Valence::VECTOR || f.dim() != atlas.dim {
                return Err(FlowError::NotAVectorField(f.name()));
            }
        }
        Ok(FlowSde { drift, diffusions, atlas, r_max: DEFAULT_R_MAX })
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim
    }

    /// Regularity class `k` of the coefficients: `b ∈ C^k`, `ξ ∈ C^{k+1}`.
    pub fn class(&self) -> usize {
        let xi = self.diffusions.iter().map(|f| f.smoothness()).min().unwrap_or(usize::MAX);
        self.drift.smoothness().min(xi.saturating_sub(1))
    }

    pub fn check_scheme(&self, scheme: Scheme) -> Result<(), FlowError> {
        if scheme == Scheme::Heun {
            if let Some(f) = self.diffusions.iter().chain(std::iter::once(&self.drift)).find(|f| !f.time_c1()) {
                return Err(FlowError::SchemeSmoothnessMismatch(f.name()));
            }
        }
        Ok(())
    }
}

/// `½ Σ_j ξ_j·∇ξ_j` and the matrices `C₊`, `C₋` of the Jacobian equations.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub drift: DVector<f64>,
    pub c_plus: DMatrix<f64>,
    pub c_minus: DMatrix<f64>,
}

/// Itô correction of the Stratonovich noise `Σ ξ_j ∘ dB^j` at a point:
/// `C₊^i_j = ½ ∂_j(ξ^k ∂_k ξ^i)` and
/// `C₋^i_j = ½ (∂_k ξ^i ∂_j ξ^k - ξ^k ∂_j ∂_k ξ^i)`, summed over the fields.
pub fn strat_to_ito_correction(xis: &[FieldRef], t: f64, x: &[f64], chart: ChartId) -> Result<Correction, FieldError> {
    let n = x.len();
    let mut out = Correction { drift: DVector::zeros(n), c_plus: DMatrix::zeros(n, n), c_minus: DMatrix::zeros(n, n) };
    for xi in xis {
        let jet = xi.jet(t, x, chart, 2)?;
        add_correction(&mut out, &jet.comps);
    }
    Ok(out)
}

fn add_correction(out: &mut Correction, comps: &[crate::jet::Jet]) {
    let n = comps.len();
    let v: Vec<f64> = comps.iter().map(|c| c.value()).collect();
    let d = |i: usize, l: usize| comps[i].d1(l);
    let dd = |i: usize, a: usize, b: usize| comps[i].d2(a, b);
    for i in 0..n {
        out.drift[i] += 0.5 * (0..n).map(|k| v[k] * d(i, k)).sum::<f64>();
        for j in 0..n {
            let dxd: f64 = (0..n).map(|k| d(i, k) * d(k, j)).sum();
            let xdd: f64 = (0..n).map(|k| v[k] * dd(i, j, k)).sum();
            out.c_plus[(i, j)] += 0.5 * (dxd + xdd);
            out.c_minus[(i, j)] += 0.5 * (dxd - xdd);
        }
    }
}

/// Coefficients of the flow at one point.
struct Coeffs {
    b: DVector<f64>,
    db: DMatrix<f64>,
    xi: Vec<DVector<f64>>,
    dxi: Vec<DMatrix<f64>>,
    corr: Option<Correction>,
}

fn eval_coeffs(sde: &FlowSde, t: f64, z: &[f64], chart: ChartId, second: bool) -> Coeffs {
    let n = z.len();
    let vec_and_jac = |f: &FieldRef, order: usize| {
        let j = f.compute_jet(t, z, chart, order);
        let v = DVector::from_fn(n, |i, _| j.comps[i].value());
        let d = DMatrix::from_fn(n, n, |i, l| j.comps[i].d1(l));
        (v, d, j)
    };
    let (b, db, _) = vec_and_jac(&sde.drift, 1);
    let mut xi = Vec::with_capacity(sde.diffusions.len());
    let mut dxi = Vec::with_capacity(sde.diffusions.len());
    let mut corr = second.then(|| Correction {
        drift: DVector::zeros(n),
        c_plus: DMatrix::zeros(n, n),
        c_minus: DMatrix::zeros(n, n),
    });
    for f in &sde.diffusions {
        let (v, d, j) = vec_and_jac(f, if second { 2 } else { 1 });
        if let Some(c) = corr.as_mut() {
            add_correction(c, &j.comps);
        }
        xi.push(v);
        dxi.push(d);
    }
    Coeffs { b, db, xi, dxi, corr }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub chart: ChartId,
    pub coords: Vec<f64>,
    pub jac: DMatrix<f64>,
    pub inv_jac: DMatrix<f64>,
}

impl FlowState {
    pub fn identity(x: &[f64], chart: ChartId) -> FlowState {
        let n = x.len();
        FlowState { chart, coords: x.to_vec(), jac: DMatrix::identity(n, n), inv_jac: DMatrix::identity(n, n) }
    }

    /// `max |J J⁻¹ - I|`.
    pub fn jac_consistency(&self) -> f64 {
        let n = self.coords.len();
        (&self.jac * &self.inv_jac - DMatrix::<f64>::identity(n, n)).amax()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowStatus {
    Running,
    /// Left the trusted U-ball of its chart within one step.
    ExitedChart {
        tau: f64,
    },
    BlownUp {
        tau: f64,
    },
    Completed,
}

impl FlowStatus {
    pub fn stopped(&self) -> bool {
        matches!(self, FlowStatus::ExitedChart { .. } | FlowStatus::BlownUp { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub step: usize,
    pub time: f64,
    pub from: ChartId,
    pub to: ChartId,
}

#[derive(Clone, Debug)]
pub struct FlowPath {
    pub grid: TimeGrid,
    pub scheme: Scheme,
    /// Grid index of `states[0]`.
    pub start: usize,
    pub states: Vec<FlowState>,
    pub status: FlowStatus,
    pub hops: Vec<Hop>,
}

impl FlowPath {
    /// Last grid index with a valid state.
    pub fn last_index(&self) -> usize {
        self.start + self.states.len() - 1
    }

    pub fn state_at(&self, k: usize) -> &FlowState {
        &self.states[k - self.start]
    }

    pub fn jac_consistency_max(&self) -> f64 {
        self.states.iter().map(FlowState::jac_consistency).fold(0.0, f64::max)
    }
}

fn check_drivers(sde: &FlowSde, drivers: &DrivingPaths) -> Result<(), FlowError> {
    if drivers.bm.len() < sde.diffusions.len() {
        return Err(FlowError::NotEnoughBrownian { needed: sde.diffusions.len(), got: drivers.bm.len() });
    }
    Ok(())
}

/// One step of the scheme from grid index `m`, including the variational
/// update. No chart handling.
pub fn step(sde: &FlowSde, drivers: &DrivingPaths, m: usize, s: &FlowState, scheme: Scheme) -> FlowState {
    let h = drivers.grid.h();
    let t = drivers.grid.t(m);
    let n = s.coords.len();
    let db: Vec<f64> = (0..sde.diffusions.len()).map(|j| drivers.db(j, m)).collect();
    match scheme {
        Scheme::Euler => {
            let c = eval_coeffs(sde, t, &s.coords, s.chart, true);
            let corr = c.corr.as_ref().expect("second-order coefficients");
            let mut dz = (&c.b + &corr.drift) * h;
            let mut a = (&c.db + &corr.c_plus) * h;
            let mut ainv = -(&c.db - &corr.c_minus) * h;
            for j in 0..db.len() {
                dz += &c.xi[j] * db[j];
                a += &c.dxi[j] * db[j];
                ainv -= &c.dxi[j] * db[j];
            }
            let coords = s.coords.iter().zip(dz.iter()).map(|(x, d)| x + d).collect();
            let jac = &s.jac + &a * &s.jac;
            let inv_jac = &s.inv_jac + &s.inv_jac * &ainv;
            FlowState { chart: s.chart, coords, jac, inv_jac }
        }
        Scheme::Heun => {
            let incr = |c: &Coeffs, jac: &DMatrix<f64>, inv: &DMatrix<f64>| {
                let mut dz = &c.b * h;
                let mut a = &c.db * h;
                for j in 0..db.len() {
                    dz += &c.xi[j] * db[j];
                    a += &c.dxi[j] * db[j];
                }
                (dz, &a * jac, -(inv * &a))
            };
            let c0 = eval_coeffs(sde, t, &s.coords, s.chart, false);
            let (dz0, dj0, di0) = incr(&c0, &s.jac, &s.inv_jac);
            let zp: Vec<f64> = s.coords.iter().zip(dz0.iter()).map(|(x, d)| x + d).collect();
            let jp = &s.jac + &dj0;
            let ip = &s.inv_jac + &di0;
            let c1 = eval_coeffs(sde, t + h, &zp, s.chart, false);
            let (dz1, dj1, di1) = incr(&c1, &jp, &ip);
            let coords = (0..n).map(|i| s.coords[i] + 0.5 * (dz0[i] + dz1[i])).collect();
            FlowState {
                chart: s.chart,
                coords,
                jac: &s.jac + (dj0 + dj1) * 0.5,
                inv_jac: &s.inv_jac + (di0 + di1) * 0.5,
            }
        }
    }
}

/// Moves a state whose coordinates left the V-ball of its chart to the
/// lowest-id chart whose W-ball contains the point.
pub fn chart_hop(atlas: &ChartAtlas, s: &FlowState) -> Result<Option<FlowState>, GeometryError> {
    let chart = atlas.chart(s.chart)?;
    if chart.in_v(&s.coords) {
        return Ok(None);
    }
    let p = atlas.to_point(&s.coords, s.chart)?;
    let to = atlas.locate_chart(&p)?;
    let coords = atlas.transition(&s.coords, s.chart, to)?;
    let d = atlas.transition_jacobian(&s.coords, s.chart, to)?;
    let dinv = invert(&d)?;
    Ok(Some(FlowState { chart: to, coords, jac: &d * &s.jac, inv_jac: &s.inv_jac * &dinv }))
}

fn blown_up(sde: &FlowSde, s: &FlowState) -> bool {
    let r2: f64 = s.coords.iter().map(|x| x * x).sum();
    !(r2.is_finite() && r2.sqrt() <= sde.r_max) || !s.jac.iter().all(|v| v.is_finite())
}

/// Integrate from grid index `start` to `end` from the given initial state.
pub fn integrate_segment(
    sde: &FlowSde,
    drivers: &DrivingPaths,
    start: usize,
    end: usize,
    init: FlowState,
    scheme: Scheme,
) -> Result<FlowPath, FlowError> {
    check_drivers(sde, drivers)?;
    sde.check_scheme(scheme)?;
    let grid = drivers.grid;
    let mut states = Vec::with_capacity(end - start + 1);
    let mut hops = Vec::new();
    let mut status = FlowStatus::Running;
    states.push(init);
    for m in start..end {
        let cur = states.last().unwrap();
        let mut next = step(sde, drivers, m, cur, scheme);
        let tau = grid.t(m + 1);
        if blown_up(sde, &next) {
            status = FlowStatus::BlownUp { tau };
            break;
        }
        if !sde.atlas.chart(next.chart)?.in_u(&next.coords) {
            status = FlowStatus::ExitedChart { tau };
            break;
        }
        match chart_hop(&sde.atlas, &next) {
            Ok(Some(hopped)) => {
                hops.push(Hop { step: m + 1, time: tau, from: next.chart, to: hopped.chart });
                next = hopped;
            }
            Ok(None) => {}
            Err(GeometryError::NotCovered | GeometryError::OutsideOverlap { .. }) => {
                status = FlowStatus::ExitedChart { tau };
                break;
            }
            Err(e) => return Err(e.into()),
        }
        states.push(next);
    }
    if status == FlowStatus::Running {
        status = FlowStatus::Completed;
    }
    Ok(FlowPath { grid, scheme, start, states, status, hops })
}

/// `φ_{0,t}(x0)` with its Jacobians on the whole grid of `drivers`.
pub fn integrate_flow(
    sde: &FlowSde,
    drivers: &DrivingPaths,
    x0: &[f64],
    chart0: ChartId,
    scheme: Scheme,
) -> Result<FlowPath, FlowError> {
    if x0.len() != sde.dim() {
        return Err(GeometryError::DimensionMismatch { expected: sde.dim(), got: x0.len() }.into());
    }
    integrate_segment(sde, drivers, 0, drivers.grid.steps, FlowState::identity(x0, chart0), scheme)
}

type Square = [[f64; MAX_DIM]; MAX_DIM];

/// Reverse Euler step on stack buffers:
/// `z_m ≈ z_{m+1} - (b - ½ξ·∇ξ) h - ξ ΔB`, all evaluated at `z_{m+1}`.
fn reverse_euler(sde: &FlowSde, h: f64, t: f64, db: &[f64], z: &[f64], chart: ChartId) -> ([f64; MAX_DIM], Square) {
    let n = z.len();
    let mut w = [0.0; MAX_DIM];
    let mut a = [[0.0; MAX_DIM]; MAX_DIM];
    let bj = sde.drift.compute_jet(t, z, chart, 1);
    for i in 0..n {
        w[i] = z[i] - h * bj.comps[i].value();
        for j in 0..n {
            a[i][j] = -h * bj.comps[i].d1(j);
        }
        a[i][i] += 1.0;
    }
    for (f, &dbj) in sde.diffusions.iter().zip(db) {
        let xj = f.compute_jet(t, z, chart, 2);
        let c = &xj.comps;
        for i in 0..n {
            let mut drift = 0.0;
            for k in 0..n {
                drift += c[k].value() * c[i].d1(k);
            }
            w[i] += 0.5 * h * drift - dbj * c[i].value();
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += c[i].d1(k) * c[k].d1(j) + c[k].value() * c[i].d2(j, k);
                }
                a[i][j] += 0.5 * h * s - dbj * c[i].d1(j);
            }
        }
    }
    (w, a)
}

fn square(m: &DMatrix<f64>) -> Square {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in out.iter_mut().enumerate().take(m.nrows()) {
        for (j, v) in row.iter_mut().enumerate().take(m.ncols()) {
            *v = m[(i, j)];
        }
    }
    out
}

fn square_mul(a: &Square, b: &Square, n: usize) -> Square {
    let mut out = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = (0..n).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Explicit reversed step: approximates the inverse of step `m`, taking a
/// point at `t_{m+1}` back to `t_m`, and returns its Jacobian.
pub fn reverse_step(
    sde: &FlowSde,
    drivers: &DrivingPaths,
    m: usize,
    chart: ChartId,
    z: &[f64],
    scheme: Scheme,
) -> (Vec<f64>, DMatrix<f64>) {
    let h = drivers.grid.h();
    let t = drivers.grid.t(m + 1);
    let n = z.len();
    let db: Vec<f64> = (0..sde.diffusions.len()).map(|j| drivers.db(j, m)).collect();
    match scheme {
        Scheme::Euler => {
            let (w, a) = reverse_euler(sde, h, t, &db, z, chart);
            ((0..n).map(|i| w[i]).collect(), DMatrix::from_fn(n, n, |i, j| a[i][j]))
        }
        Scheme::Heun => {
            let incr = |c: &Coeffs| {
                let mut dz = -(&c.b * h);
                let mut a = -(&c.db * h);
                for j in 0..db.len() {
                    dz -= &c.xi[j] * db[j];
                    a -= &c.dxi[j] * db[j];
                }
                (dz, a)
            };
            let c0 = eval_coeffs(sde, t, z, chart, false);
            let (dz0, a0) = incr(&c0);
            let zp: Vec<f64> = (0..n).map(|i| z[i] + dz0[i]).collect();
            let c1 = eval_coeffs(sde, t - h, &zp, chart, false);
            let (dz1, a1) = incr(&c1);
            let eye = DMatrix::<f64>::identity(n, n);
            let dzp = &eye + &a0;
            let jac = &eye + (&a0 + &a1 * &dzp) * 0.5;
            ((0..n).map(|i| z[i] + 0.5 * (dz0[i] + dz1[i])).collect(), jac)
        }
    }
}

/// Result of composing reversed steps back to time 0.
#[derive(Clone, Debug)]
pub struct Pulled {
    pub chart: ChartId,
    pub coords: Vec<f64>,
    /// Jacobian of the composed reverse map, from the start chart to `chart`.
    pub jac: DMatrix<f64>,
}

/// `R_0 ∘ ... ∘ R_{m-1}` applied to `z` (a point at `t_m`), with chart hops.
pub fn reverse_compose(
    sde: &FlowSde,
    drivers: &DrivingPaths,
    m: usize,
    chart: ChartId,
    z: &[f64],
    scheme: Scheme,
) -> Result<Pulled, GeometryError> {
    let n = z.len();
    let h = drivers.grid.h();
    let mut chart = chart;
    let mut coords = z.to_vec();
    let mut jac = square(&DMatrix::identity(n, n));
    let mut db = vec![0.0; sde.diffusions.len()];
    for k in (0..m).rev() {
        let (w, d) = match scheme {
            Scheme::Euler => {
                for (j, v) in db.iter_mut().enumerate() {
                    *v = drivers.db(j, k);
                }
                let (w, d) = reverse_euler(sde, h, drivers.grid.t(k + 1), &db, &coords, chart);
                (w[..n].to_vec(), d)
            }
            Scheme::Heun => {
                let (w, d) = reverse_step(sde, drivers, k, chart, &coords, scheme);
                (w, square(&d))
            }
        };
        jac = square_mul(&d, &jac, n);
        coords = w;
        if !sde.atlas.chart(chart)?.in_v(&coords) {
            let p = sde.atlas.to_point(&coords, chart)?;
            let to = sde.atlas.locate_chart(&p)?;
            let dt = sde.atlas.transition_jacobian(&coords, chart, to)?;
            jac = square_mul(&square(&dt), &jac, n);
            coords = sde.atlas.transition(&coords, chart, to)?;
            chart = to;
        }
    }
    Ok(Pulled { chart, coords, jac: DMatrix::from_fn(n, n, |i, j| jac[i][j]) })
}

/// `|ψ(φ(x)) - x|` at every valid grid time, with `ψ` the composition of
/// reversed steps, measured in the chart of `x`.
pub fn inverse_flow_residual(
    sde: &FlowSde,
    drivers: &DrivingPaths,
    path: &FlowPath,
    scheme: Scheme,
) -> Result<Vec<f64>, FlowError> {
    let x0 = &path.states[0];
    (path.start..=path.last_index())
        .map(|k| {
            let s = path.state_at(k);
            let back = reverse_compose(sde, drivers, k, s.chart, &s.coords, scheme)?;
            let p = sde.atlas.to_point(&back.coords, back.chart)?;
            let x = sde.atlas.from_point(&p, x0.chart)?;
            Ok(x.iter().zip(&x0.coords).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        })
        .collect()
}
