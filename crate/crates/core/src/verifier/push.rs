use super::pull::{g_fields, Integrands};
use super::{Scenario, VerifyError};
use crate::flow::reverse_compose;
use crate::geometry::{invert, pullback, TensorValue};
use crate::jet::{index_of, jet_len, Jet, MAX_DIM};
use crate::stochastics::DrivingPaths;
use crate::tensor::{lie_jet, FieldRef, TensorJet};

/// Pushed-forward fields `(φ_{0,t_m})_* F(t_m)` at the base point, with jets
/// from central differences over a stencil of re-integrated inverse flows.
#[derive(Clone, Debug)]
pub struct PushSample {
    pub k_jet: TensorJet,
    pub g_jets: Vec<TensorJet>,
}

impl PushSample {
    pub fn k_value(&self) -> TensorValue {
        self.k_jet.value()
    }
}

/// Stencil offsets in units of the step: the center, `±e_l`, and the four
/// corners `±e_l ± e_q` for `l < q`.
fn stencil(n: usize) -> Vec<Vec<i8>> {
    let mut pts = vec![vec![0i8; n]];
    for l in 0..n {
        for s in [1i8, -1] {
            let mut p = vec![0i8; n];
            p[l] = s;
            pts.push(p);
        }
    }
    for l in 0..n {
        for q in l + 1..n {
            for (a, b) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
                let mut p = vec![0i8; n];
                p[l] = a;
                p[q] = b;
                pts.push(p);
            }
        }
    }
    pts
}

fn fd_jet(values: &[TensorValue], n: usize, eps: f64) -> TensorJet {
    let proto = &values[0];
    let pos = |l: usize, s: usize| 1 + 2 * l + s;
    let mut corner_base = 1 + 2 * n;
    let mut corners = vec![vec![0usize; n]; n];
    for (l, row) in corners.iter_mut().enumerate() {
        for q in l + 1..n {
            row[q] = corner_base;
            corner_base += 4;
        }
    }
    let comps = (0..proto.data.len())
        .map(|c| {
            let v = |i: usize| values[i].data[c];
            let mut coeffs = vec![0.0; jet_len(n, 2)];
            coeffs[0] = v(0);
            for l in 0..n {
                let mut e = [0u8; MAX_DIM];
                e[l] = 1;
                coeffs[index_of(n, &e).unwrap()] = (v(pos(l, 0)) - v(pos(l, 1))) / (2.0 * eps);
                e[l] = 2;
                coeffs[index_of(n, &e).unwrap()] = 0.5 * (v(pos(l, 0)) - 2.0 * v(0) + v(pos(l, 1))) / (eps * eps);
                for q in l + 1..n {
                    let b = corners[l][q];
                    let mut e = [0u8; MAX_DIM];
                    e[l] = 1;
                    e[q] = 1;
                    coeffs[index_of(n, &e).unwrap()] = (v(b) - v(b + 1) - v(b + 2) + v(b + 3)) / (4.0 * eps * eps);
                }
            }
            Jet::from_coeffs(n, 2, &coeffs)
        })
        .collect();
    TensorJet { valence: proto.valence, dim: n, comps }
}

/// Pushed-forward `K` and `G_i` at `t_m`, with order-2 jets.
pub fn push_sample(
    scenario: &Scenario,
    drivers: &DrivingPaths,
    k: &FieldRef,
    gs: &[FieldRef],
    m: usize,
) -> Result<PushSample, VerifyError> {
    let n = scenario.dim();
    let eps = scenario.fd_eps;
    let t = drivers.grid.t(m);
    let pts = stencil(n);
    let mut kv = Vec::with_capacity(pts.len());
    let mut gv: Vec<Vec<TensorValue>> = vec![Vec::with_capacity(pts.len()); gs.len()];
    for off in &pts {
        let x: Vec<f64> = (0..n).map(|l| scenario.x0[l] + eps * off[l] as f64).collect();
        let back = reverse_compose(&scenario.sde, drivers, m, scenario.chart0, &x, scenario.scheme)?;
        if !back.coords.iter().all(|v| v.is_finite()) || !back.jac.iter().all(|v| v.is_finite()) {
            return Err(VerifyError::Geometry(crate::geometry::GeometryError::NotCovered));
        }
        let inv = invert(&back.jac)?;
        kv.push(pullback(&k.eval(t, &back.coords, back.chart)?, &back.jac, &inv));
        for (gi, g) in gs.iter().enumerate() {
            gv[gi].push(pullback(&g.eval(t, &back.coords, back.chart)?, &back.jac, &inv));
        }
    }
    Ok(PushSample { k_jet: fd_jet(&kv, n, eps), g_jets: gv.iter().map(|v| fd_jet(v, n, eps).truncate(1)).collect() })
}

/// Left-hand side and signed integrands of a push-forward formula. Stops at
/// the first grid time whose inverse flow cannot be evaluated.
pub fn push_integrands(
    scenario: &Scenario,
    drivers: &DrivingPaths,
    k: &FieldRef,
) -> Result<(Vec<TensorValue>, Integrands, usize), VerifyError> {
    let ito = !scenario.theorem.is_strat();
    let gs = g_fields(scenario);
    let xis = &scenario.sde.diffusions;
    let x0 = &scenario.x0;
    let c0 = scenario.chart0;
    let mut lhs = Vec::new();
    let mut it = Integrands {
        g: vec![Vec::new(); gs.len()],
        lie_xi: vec![Vec::new(); xis.len()],
        lie_xi_g: if ito { vec![vec![Vec::new(); xis.len()]; gs.len()] } else { Vec::new() },
        ..Default::default()
    };
    let mut stop = 0;
    for m in 0..=drivers.grid.steps {
        let sample = match push_sample(scenario, drivers, k, &gs, m) {
            Ok(s) => s,
            Err(VerifyError::Geometry(_)) if m > 0 => break,
            Err(e) => return Err(e),
        };
        stop = m;
        let t = drivers.grid.t(m);
        let kj = &sample.k_jet;
        lhs.push(kj.value());
        for (i, gj) in sample.g_jets.iter().enumerate() {
            it.g[i].push(gj.value());
        }
        let bj = scenario.sde.drift.jet(t, x0, c0, 1)?;
        it.lie_b.push(lie_jet(kj, &bj).value().scale(-1.0));
        let mut half = TensorValue::zeros(kj.valence, kj.dim);
        for (j, x) in xis.iter().enumerate() {
            let xj = x.jet(t, x0, c0, 2)?;
            let inner = lie_jet(kj, &xj);
            it.lie_xi[j].push(inner.value().scale(-1.0));
            if ito {
                half.axpy(0.5, &lie_jet(&inner, &xj).value());
                for (i, gj) in sample.g_jets.iter().enumerate() {
                    it.lie_xi_g[i][j].push(lie_jet(gj, &xj).value().scale(-1.0));
                }
            }
        }
        if ito {
            it.half.push(half);
        }
    }
    Ok((lhs, it, stop))
}
