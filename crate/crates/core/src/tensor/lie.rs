use super::field::{FieldError, FieldRef, TensorField, TensorJet, C_INF};
use crate::geometry::{flat_index, multi_index, pullback, ChartId, TensorValue, Valence};
use crate::jet::Jet;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// `L_X K` as a field in its own right, so it can be differentiated again.
#[derive(Clone, Debug)]
pub struct LieDerivative {
    pub k: FieldRef,
    pub x: FieldRef,
}

fn minus_one(s: usize) -> usize {
    if s >= C_INF {
        C_INF
    } else {
        s.saturating_sub(1)
    }
}

/// `(L_X K)` jet of order `d` from jets of order `d + 1` of `K` and `X`.
pub fn lie_jet(kj: &TensorJet, xj: &TensorJet) -> TensorJet {
    let n = kj.dim;
    let order = kj.order().min(xj.order()) - 1;
    let v = kj.valence;
    let rank = v.rank();
    let k_tr: Vec<Jet> = kj.comps.iter().map(|c| c.truncate(order)).collect();
    let x_tr: Vec<Jet> = xj.comps.iter().map(|c| c.truncate(order)).collect();
    let dk: Vec<Vec<Jet>> =
        (0..n).map(|l| kj.comps.iter().map(|c| c.truncate(order + 1).derivative(l)).collect()).collect();
    // dx[i][l] = ∂_l X^i
    let dx: Vec<Vec<Jet>> =
        (0..n).map(|i| (0..n).map(|l| xj.comps[i].truncate(order + 1).derivative(l)).collect()).collect();
    let comps = (0..kj.comps.len())
        .map(|flat| {
            let idx = multi_index(flat, n, rank);
            let mut acc = Jet::zero(n, order);
            for l in 0..n {
                acc = &acc + &(&x_tr[l] * &dk[l][flat]);
            }
            for slot in 0..rank {
                let mut src = idx.clone();
                for l in 0..n {
                    src[slot] = l;
                    let kc = &k_tr[flat_index(&src, n)];
                    if slot < v.contra {
                        acc = &acc - &(kc * &dx[idx[slot]][l]);
                    } else {
                        acc = &acc + &(kc * &dx[l][idx[slot]]);
                    }
                }
            }
            acc
        })
        .collect();
    TensorJet { valence: v, dim: n, comps }
}

impl TensorField for LieDerivative {
    fn valence(&self) -> Valence {
        self.k.valence()
    }
    fn dim(&self) -> usize {
        self.k.dim()
    }
    fn smoothness(&self) -> usize {
        minus_one(self.k.smoothness().min(self.x.smoothness()))
    }
    fn time_c1(&self) -> bool {
        self.k.time_c1() && self.x.time_c1()
    }
    fn name(&self) -> String {
        format!("L_[{}]({})", self.x.name(), self.k.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let kj = self.k.compute_jet(t, x, chart, order + 1);
        let xj = self.x.compute_jet(t, x, chart, order + 1);
        lie_jet(&kj, &xj)
    }
}

/// `L_X K`, checked so that jets up to `order` of the result are available.
pub fn lie_derivative(k: &FieldRef, x: &FieldRef, order: usize) -> Result<FieldRef, FieldError> {
    if x.valence() != Valence::VECTOR {
        return Err(FieldError::Mismatch { field: x.name(), msg: "Lie derivative needs a vector field".into() });
    }
    if x.dim() != k.dim() {
        return Err(FieldError::Mismatch { field: x.name(), msg: "dimension mismatch".into() });
    }
    for f in [k, x] {
        if f.smoothness() < order + 1 {
            return Err(FieldError::InsufficientSmoothness {
                field: f.name(),
                needed: order + 1,
                available: f.smoothness(),
            });
        }
    }
    Ok(Arc::new(LieDerivative { k: k.clone(), x: x.clone() }))
}

/// `X·∇f` for a scalar field, via the gradient only.
pub fn directional_derivative(
    f: &FieldRef,
    x: &FieldRef,
    t: f64,
    p: &[f64],
    chart: ChartId,
) -> Result<f64, FieldError> {
    let fj = f.jet(t, p, chart, 1)?;
    let xv = x.eval(t, p, chart)?;
    Ok((0..p.len()).map(|l| xv.data[l] * fj.comps[0].d1(l)).sum())
}

/// Vector field value and Jacobian `DX` at a point.
pub fn value_and_jacobian(x: &FieldRef, t: f64, p: &[f64], chart: ChartId) -> (DVector<f64>, DMatrix<f64>) {
    let n = p.len();
    let j = x.compute_jet(t, p, chart, 1);
    let v = DVector::from_fn(n, |i, _| j.comps[i].value());
    let d = DMatrix::from_fn(n, n, |i, l| j.comps[i].d1(l));
    (v, d)
}

/// Independent check of `L_X K` at `p`: central differences of `φ_ε^* K`,
/// with `φ_ε` the flow of the time-frozen field `X(t, ·)` integrated by
/// classical RK4 together with its Jacobian.
pub fn lie_derivative_fd(
    k: &FieldRef,
    x: &FieldRef,
    t: f64,
    p: &[f64],
    chart: ChartId,
    eps: f64,
) -> Result<TensorValue, FieldError> {
    let plus = flow_pullback(k, x, t, p, chart, eps)?;
    let minus = flow_pullback(k, x, t, p, chart, -eps)?;
    Ok(plus.sub(&minus).scale(0.5 / eps))
}

fn flow_pullback(
    k: &FieldRef,
    x: &FieldRef,
    t: f64,
    p: &[f64],
    chart: ChartId,
    eps: f64,
) -> Result<TensorValue, FieldError> {
    let n = p.len();
    let substeps = 8;
    let h = eps / substeps as f64;
    let mut y = DVector::from_column_slice(p);
    let mut jac = DMatrix::<f64>::identity(n, n);
    let rhs = |y: &DVector<f64>, jac: &DMatrix<f64>| {
        let (v, d) = value_and_jacobian(x, t, y.as_slice(), chart);
        (v, d * jac)
    };
    for _ in 0..substeps {
        let (k1, j1) = rhs(&y, &jac);
        let (k2, j2) = rhs(&(&y + &k1 * (h / 2.0)), &(&jac + &j1 * (h / 2.0)));
        let (k3, j3) = rhs(&(&y + &k2 * (h / 2.0)), &(&jac + &j2 * (h / 2.0)));
        let (k4, j4) = rhs(&(&y + &k3 * h), &(&jac + &j3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        jac += (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (h / 6.0);
    }
    let kv = k.eval(t, y.as_slice(), chart)?;
    let inv = jac.clone().try_inverse().ok_or(crate::geometry::GeometryError::SingularJacobian)?;
    Ok(pullback(&kv, &jac, &inv))
}
