use super::{Scenario, Theorem, VerifyError};
use crate::flow::FlowPath;
use crate::geometry::{pullback, TensorValue};
use crate::jet::MAX_DIM;
use crate::stochastics::{covariation, fv_integral, ito_integral, stratonovich_integral, DrivingPaths};
use crate::tensor::{lie_derivative, FieldRef, ProfiledField};
use std::sync::Arc;

pub const TERM_NAMES: [&str; 6] = ["g_da", "g_dm", "lie_b", "lie_xi", "bracket", "half_lie2"];

/// Integrand values on grid indices `0..=stop`, already transported to the
/// base point (pulled back or pushed forward) and carrying their sign.
#[derive(Clone, Debug, Default)]
pub struct Integrands {
    /// `[i][m]`: transported `G_i(t_m)`
    pub g: Vec<Vec<TensorValue>>,
    /// `[m]`: the `dt` Lie term of `K`
    pub lie_b: Vec<TensorValue>,
    /// `[j][m]`: the `dB^j` Lie term of `K`
    pub lie_xi: Vec<Vec<TensorValue>>,
    /// `[i][j][m]`: the `d[M^i, B^j]` term (Itô forms only)
    pub lie_xi_g: Vec<Vec<Vec<TensorValue>>>,
    /// `[m]`: `½ Σ_j` of the second-order term (Itô forms only)
    pub half: Vec<TensorValue>,
}

/// Running value of each right-hand-side term, indexed like `TERM_NAMES`.
#[derive(Clone, Debug)]
pub struct TermPaths {
    pub terms: [Vec<TensorValue>; 6],
}

#[derive(Clone, Debug)]
pub struct Rhs {
    pub values: Vec<TensorValue>,
    pub terms: TermPaths,
    /// `Σ_m |increment_m|₁` per term.
    pub l1: [f64; 6],
}

type Rule = fn(&[f64], &[f64]) -> Result<Vec<f64>, crate::stochastics::StochasticError>;

/// Componentwise running integral of a tensor path against a scalar path.
fn integrate(f: &[TensorValue], x: &[f64], rule: Rule) -> Vec<TensorValue> {
    let len = f.len();
    let proto = &f[0];
    let mut out: Vec<TensorValue> = vec![TensorValue::zeros(proto.valence, proto.dim); len];
    let mut comp = vec![0.0; len];
    for c in 0..proto.data.len() {
        for (m, v) in f.iter().enumerate() {
            comp[m] = v.data[c];
        }
        let path = rule(&comp, &x[..len]).expect("integrand and driver share the grid");
        for (o, p) in out.iter_mut().zip(path) {
            o.data[c] = p;
        }
    }
    out
}

fn accumulate(into: &mut [TensorValue], add: &[TensorValue]) {
    for (a, b) in into.iter_mut().zip(add) {
        a.axpy(1.0, b);
    }
}

/// Sum the right-hand side
/// `K₀ + Σ ∫ G dA + Σ ∫ G dM + ∫ L_b dt + Σ ∫ L_ξ dB + Σ Σ ∫ L_ξ G d[M, B] + ½ Σ ∫ L_ξ L_ξ dt`
/// with the integrands in `it`.
/// Stratonovich sums use the trapezoid rule for the martingale integrals
/// and drop the last two terms.
pub fn assemble_rhs(
    scenario: &Scenario,
    k0: &TensorValue,
    it: &Integrands,
    drivers: &DrivingPaths,
    stop: usize,
    stratonovich: bool,
) -> Rhs {
    let len = stop + 1;
    let h = drivers.grid.h();
    let zero = TensorValue::zeros(k0.valence, k0.dim);
    let mut terms: [Vec<TensorValue>; 6] = std::array::from_fn(|_| vec![zero.clone(); len]);
    let mart_rule = if stratonovich { stratonovich_integral } else { ito_integral };
    let time: Vec<f64> = (0..len).map(|k| drivers.grid.t(k)).collect();
    for (gi, gt) in it.g.iter().zip(&scenario.g) {
        accumulate(&mut terms[0], &integrate(gi, &drivers.fv[gt.driver], fv_integral));
        accumulate(&mut terms[1], &integrate(gi, &drivers.mart[gt.driver], mart_rule));
    }
    accumulate(&mut terms[2], &integrate(&it.lie_b, &time, fv_integral));
    for (j, lj) in it.lie_xi.iter().enumerate() {
        accumulate(&mut terms[3], &integrate(lj, &drivers.bm[j], mart_rule));
    }
    if !stratonovich {
        for (gi, gt) in it.lie_xi_g.iter().zip(&scenario.g) {
            for (j, lij) in gi.iter().enumerate() {
                let mut acc = zero.clone();
                for m in 0..stop {
                    acc.axpy(drivers.bracket(gt.driver, j, m, scenario.bracket), &lij[m]);
                    terms[4][m + 1].axpy(1.0, &acc);
                }
            }
        }
        if !it.half.is_empty() {
            let mut acc = zero.clone();
            for m in 0..stop {
                acc.axpy(h, &it.half[m]);
                terms[5][m + 1].axpy(1.0, &acc);
            }
        }
    }
    let values = (0..len)
        .map(|k| {
            let mut v = k0.clone();
            for t in &terms {
                v.axpy(1.0, &t[k]);
            }
            v
        })
        .collect();
    let l1 = std::array::from_fn(|i| (0..stop).map(|m| terms[i][m + 1].sub(&terms[i][m]).l1()).sum());
    Rhs { values, terms: TermPaths { terms }, l1 }
}

/// `φ_t^* K(t)` at each valid grid time.
pub fn eval_lhs(flow: &FlowPath, k: &FieldRef) -> Result<Vec<TensorValue>, VerifyError> {
    (flow.start..=flow.last_index())
        .map(|m| {
            let s = flow.state_at(m);
            let v = k.eval(flow.grid.t(m), &s.coords, s.chart)?;
            Ok(pullback(&v, &s.jac, &s.inv_jac))
        })
        .collect()
}

/// `G_i` as fields `θ_i(t) H_i(x)`.
pub fn g_fields(scenario: &Scenario) -> Vec<FieldRef> {
    scenario
        .g
        .iter()
        .map(|gt| Arc::new(ProfiledField { profile: gt.profile.clone(), inner: gt.field.clone() }) as FieldRef)
        .collect()
}

/// Pulled-back integrands along a flow path.
pub fn pull_integrands(scenario: &Scenario, flow: &FlowPath, k: &FieldRef) -> Result<Integrands, VerifyError> {
    let ito = !scenario.theorem.is_strat();
    let b = &scenario.sde.drift;
    let xis = &scenario.sde.diffusions;
    let gs = g_fields(scenario);
    let lie_b = lie_derivative(k, b, 0)?;
    let lie_xi = xis.iter().map(|x| lie_derivative(k, x, 0)).collect::<Result<Vec<_>, _>>()?;
    let lie2 = if ito {
        xis.iter().map(|x| lie_derivative(&lie_derivative(k, x, 1)?, x, 0)).collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let lie_g = if ito {
        gs.iter()
            .map(|g| xis.iter().map(|x| lie_derivative(g, x, 0)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let pulled = |f: &FieldRef, m: usize| -> Result<TensorValue, VerifyError> {
        let s = flow.state_at(m);
        let v = f.eval(flow.grid.t(m), &s.coords, s.chart)?;
        Ok(pullback(&v, &s.jac, &s.inv_jac))
    };
    let range = flow.start..=flow.last_index();
    let path = |f: &FieldRef| range.clone().map(|m| pulled(f, m)).collect::<Result<Vec<_>, _>>();
    let mut it = Integrands {
        g: gs.iter().map(path).collect::<Result<_, _>>()?,
        lie_b: path(&lie_b)?,
        lie_xi: lie_xi.iter().map(path).collect::<Result<_, _>>()?,
        lie_xi_g: lie_g.iter().map(|row| row.iter().map(path).collect()).collect::<Result<_, _>>()?,
        half: Vec::new(),
    };
    if ito {
        let l2: Vec<Vec<TensorValue>> = lie2.iter().map(path).collect::<Result<_, _>>()?;
        it.half = half_sum(&l2, flow.last_index() - flow.start + 1, &it.lie_b[0]);
    }
    Ok(it)
}

fn half_sum(l2: &[Vec<TensorValue>], len: usize, proto: &TensorValue) -> Vec<TensorValue> {
    (0..len)
        .map(|m| {
            let mut acc = TensorValue::zeros(proto.valence, proto.dim);
            for lj in l2 {
                acc.axpy(0.5, &lj[m]);
            }
            acc
        })
        .collect()
}

/// Right-hand side of a pull-back formula along `flow`.
pub fn eval_rhs(
    scenario: &Scenario,
    flow: &FlowPath,
    k: &FieldRef,
    drivers: &DrivingPaths,
) -> Result<Rhs, VerifyError> {
    let it = pull_integrands(scenario, flow, k)?;
    let s0 = &flow.states[0];
    let k0 = pullback(&k.eval(0.0, &s0.coords, s0.chart)?, &s0.jac, &s0.inv_jac);
    Ok(assemble_rhs(scenario, &k0, &it, drivers, flow.last_index(), scenario.theorem.is_strat()))
}

/// Scalar right-hand side through directional derivatives only:
/// `b·∇f`, `ξ·∇f`, `ξ·∇g` and `ξ·∇(ξ·∇f)` at `φ_t(x)`.
pub fn scalar_rhs(
    scenario: &Scenario,
    flow: &FlowPath,
    f: &FieldRef,
    drivers: &DrivingPaths,
) -> Result<Rhs, VerifyError> {
    if scenario.theorem != Theorem::ScalarItoWentzell {
        return Err(VerifyError::InvalidScenario("scalar_rhs needs a scalar Itô-Wentzell scenario".into()));
    }
    let n = scenario.dim();
    let gs = g_fields(scenario);
    let xis = &scenario.sde.diffusions;
    let scalar = TensorValue::scalar;
    let mut it = Integrands {
        g: vec![Vec::new(); gs.len()],
        lie_xi: vec![Vec::new(); xis.len()],
        lie_xi_g: vec![vec![Vec::new(); xis.len()]; gs.len()],
        ..Default::default()
    };
    for m in flow.start..=flow.last_index() {
        let s = flow.state_at(m);
        let (t, y, c) = (flow.grid.t(m), s.coords.as_slice(), s.chart);
        let fj = f.jet(t, y, c, 2)?;
        let grad: Vec<f64> = (0..n).map(|l| fj.comps[0].d1(l)).collect();
        let hess = |a: usize, b: usize| {
            let mut e = [0u8; MAX_DIM];
            e[a] += 1;
            e[b] += 1;
            fj.comps[0].partial(&e).expect("order 2")
        };
        let dot = |v: &[f64], w: &[f64]| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let bv = scenario.sde.drift.eval(t, y, c)?;
        it.lie_b.push(scalar(dot(&bv.data, &grad)));
        let mut half = 0.0;
        for (j, x) in xis.iter().enumerate() {
            let xj = x.jet(t, y, c, 1)?;
            let v: Vec<f64> = xj.comps.iter().map(|q| q.value()).collect();
            it.lie_xi[j].push(scalar(dot(&v, &grad)));
            let mut second = 0.0;
            for k in 0..n {
                for l in 0..n {
                    second += v[k] * xj.comps[l].d1(k) * grad[l] + v[k] * v[l] * hess(k, l);
                }
            }
            half += 0.5 * second;
        }
        it.half.push(scalar(half));
        for (i, g) in gs.iter().enumerate() {
            let gj = g.jet(t, y, c, 1)?;
            it.g[i].push(scalar(gj.comps[0].value()));
            let ggrad: Vec<f64> = (0..n).map(|l| gj.comps[0].d1(l)).collect();
            for (j, x) in xis.iter().enumerate() {
                let v = x.eval(t, y, c)?;
                it.lie_xi_g[i][j].push(scalar(dot(&v.data, &ggrad)));
            }
        }
    }
    let s0 = &flow.states[0];
    let k0 = scalar(f.eval(0.0, &s0.coords, s0.chart)?.data[0]);
    Ok(assemble_rhs(scenario, &k0, &it, drivers, flow.last_index(), false))
}

/// `max |(S - I) - ½ C|` over the grid, where `S` and `I` are the
/// Stratonovich and Itô sums of the martingale integrals with the same
/// integrands and `C` the realized covariations of integrand and driver.
pub fn stratonovich_bridge_check(scenario: &Scenario, it: &Integrands, drivers: &DrivingPaths, stop: usize) -> f64 {
    let len = stop + 1;
    let mut worst: f64 = 0.0;
    let mut check = |f: &[TensorValue], x: &[f64]| {
        let x = &x[..len];
        for c in 0..f[0].data.len() {
            let comp: Vec<f64> = f.iter().map(|v| v.data[c]).collect();
            let s = stratonovich_integral(&comp, x).expect("same grid");
            let i = ito_integral(&comp, x).expect("same grid");
            let q = covariation(&comp, x).expect("same grid");
            for k in 0..len {
                worst = worst.max((s[k] - i[k] - 0.5 * q[k]).abs());
            }
        }
    };
    for (gi, gt) in it.g.iter().zip(&scenario.g) {
        check(gi, &drivers.mart[gt.driver]);
    }
    for (j, lj) in it.lie_xi.iter().enumerate() {
        check(lj, &drivers.bm[j]);
    }
    worst
}
