//! Coordinate-level cross-check of the pulled-back integrands.
//!
//! `φ^*K` is the multilinear expression `T(Ψ, .., Ψ, K∘φ, Φ, .., Φ)` with
//! `Φ = Dφ` and `Ψ = (Dφ)⁻¹`. Applying the Itô product rule to it factor by
//! factor, with the Itô dynamics of `φ`, `Φ` and `Ψ`, gives the coefficient
//! of every differential as a sum of coordinate expressions. Those sums must
//! agree with the pulled-back Lie-derivative integrands at every state.

use super::VerifyError;
use crate::flow::strat_to_ito_correction;
use crate::geometry::{pullback, transform_slots, ChartId, TensorValue};
use crate::jet::MAX_DIM;
use crate::tensor::{lie_derivative, value_and_jacobian, FieldRef};
use nalgebra::DMatrix;

#[derive(Clone, Debug)]
pub struct ExpandedState {
    pub t: f64,
    /// `φ(x)`, in chart `chart`.
    pub y: Vec<f64>,
    pub chart: ChartId,
    pub jac: DMatrix<f64>,
    pub inv_jac: DMatrix<f64>,
}

/// Worst relative deviation per differential: `dt`, `dB^j`, `d[M^i, B^j]`
/// and `dA^i`/`dM^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedCheck {
    pub dt: f64,
    pub db: f64,
    pub bracket: f64,
    pub g: f64,
}

impl ExpandedCheck {
    pub fn max(&self) -> f64 {
        self.dt.max(self.db).max(self.bracket).max(self.g)
    }
}

/// Relative deviation `max_c |a_c - b_c| / (Σ_terms |term_c| + |b_c|)`.
fn rel_dev(expanded: &[TensorValue], geometric: &TensorValue) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..geometric.data.len() {
        let sum: f64 = expanded.iter().map(|t| t.data[c]).sum();
        let scale: f64 = expanded.iter().map(|t| t.data[c].abs()).sum::<f64>() + geometric.data[c].abs();
        if scale > 0.0 {
            worst = worst.max((sum - geometric.data[c]).abs() / scale);
        }
    }
    worst
}

/// `v·∇K` from the first-order part of a jet of `K`.
fn directional(kj: &crate::tensor::TensorJet, v: &[f64]) -> TensorValue {
    let data = kj.comps.iter().map(|c| (0..v.len()).map(|l| v[l] * c.d1(l)).sum()).collect();
    TensorValue { valence: kj.valence, dim: kj.dim, data }
}

pub fn expanded_integrand_check(
    k: &FieldRef,
    gs: &[FieldRef],
    b: &FieldRef,
    xis: &[FieldRef],
    st: &ExpandedState,
) -> Result<ExpandedCheck, VerifyError> {
    let (t, y, c) = (st.t, st.y.as_slice(), st.chart);
    let n = y.len();
    let v = k.valence();
    let rank = v.rank();
    let (phi, psi) = (&st.jac, &st.inv_jac);

    let kj = k.jet(t, y, c, 2)?;
    let kv = kj.value();
    let (bv, db) = value_and_jacobian(b, t, y, c);
    let corr = strat_to_ito_correction(xis, t, y, c)?;
    let xi: Vec<_> = xis.iter().map(|x| value_and_jacobian(x, t, y, c)).collect();

    // Itô dynamics of the factors: μ (dt) and σ_j (dB^j)
    let mu_phi = (&db + &corr.c_plus) * phi;
    let mu_psi = -(psi * (&db - &corr.c_minus));
    let sig_phi: Vec<DMatrix<f64>> = xi.iter().map(|(_, d)| d * phi).collect();
    let sig_psi: Vec<DMatrix<f64>> = xi.iter().map(|(_, d)| -(psi * d)).collect();

    let second = |vv: &[f64], dv: &DMatrix<f64>| {
        // ξ·∇(ξ·∇K) = ξ^k ∂_k ξ^l ∂_l K + ξ^k ξ^l ∂_k ∂_l K
        let data = kj
            .comps
            .iter()
            .map(|q| {
                let mut acc = 0.0;
                for a in 0..n {
                    for l in 0..n {
                        let mut e = [0u8; MAX_DIM];
                        e[a] += 1;
                        e[l] += 1;
                        acc += vv[a] * dv[(l, a)] * q.d1(l) + vv[a] * vv[l] * q.partial(&e).expect("order 2");
                    }
                }
                acc
            })
            .collect();
        TensorValue { valence: v, dim: n, data }
    };
    let mut mu_k = directional(&kj, bv.as_slice());
    let sig_k: Vec<TensorValue> = xi.iter().map(|(x, _)| directional(&kj, x.as_slice())).collect();
    for (x, d) in &xi {
        mu_k.axpy(0.5, &second(x.as_slice(), d));
    }

    // slot matrices of T and their variations; `None` marks the K factor
    let base: Vec<&DMatrix<f64>> = (0..rank).map(|p| if p < v.contra { psi } else { phi }).collect();
    let mu_of = |p: usize| if p < v.contra { &mu_psi } else { &mu_phi };
    let sig_of = |p: usize, j: usize| if p < v.contra { &sig_psi[j] } else { &sig_phi[j] };
    let with = |kval: &TensorValue, repl: &[(usize, &DMatrix<f64>)]| {
        let mut mats = base.clone();
        for &(p, m) in repl {
            mats[p] = m;
        }
        transform_slots(kval, &mats)
    };

    // dt
    let mut dt_terms = vec![with(&mu_k, &[])];
    for p in 0..rank {
        dt_terms.push(with(&kv, &[(p, mu_of(p))]));
    }
    for j in 0..xi.len() {
        for p in 0..rank {
            dt_terms.push(with(&sig_k[j], &[(p, sig_of(p, j))]));
            for q in p + 1..rank {
                dt_terms.push(with(&kv, &[(p, sig_of(p, j)), (q, sig_of(q, j))]));
            }
        }
    }
    let lie_b = lie_derivative(k, b, 0)?.eval(t, y, c)?;
    let mut geo_dt = lie_b;
    for x in xis {
        geo_dt.axpy(0.5, &lie_derivative(&lie_derivative(k, x, 1)?, x, 0)?.eval(t, y, c)?);
    }
    let mut worst =
        ExpandedCheck { dt: rel_dev(&dt_terms, &pullback(&geo_dt, phi, psi)), db: 0.0, bracket: 0.0, g: 0.0 };

    // dB^j
    for (j, x) in xis.iter().enumerate() {
        let mut terms = vec![with(&sig_k[j], &[])];
        for p in 0..rank {
            terms.push(with(&kv, &[(p, sig_of(p, j))]));
        }
        let geo = pullback(&lie_derivative(k, x, 0)?.eval(t, y, c)?, phi, psi);
        worst.db = worst.db.max(rel_dev(&terms, &geo));
    }

    // dA^i, dM^i and d[M^i, B^j]
    for g in gs {
        let gj = g.jet(t, y, c, 1)?;
        let gv = gj.value();
        worst.g = worst.g.max(rel_dev(&[with(&gv, &[])], &pullback(&gv, phi, psi)));
        for (j, x) in xis.iter().enumerate() {
            let mut terms = vec![with(&directional(&gj, xi[j].0.as_slice()), &[])];
            for p in 0..rank {
                terms.push(with(&gv, &[(p, sig_of(p, j))]));
            }
            let geo = pullback(&lie_derivative(g, x, 0)?.eval(t, y, c)?, phi, psi);
            worst.bracket = worst.bracket.max(rel_dev(&terms, &geo));
        }
    }
    Ok(worst)
}
