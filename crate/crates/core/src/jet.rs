//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A jet of order `d` in `n` variables stores the Taylor coefficients
//! `c_α` of a function around an expansion point for all multi-indices with
//! `|α| <= d`. Coefficients are laid out in graded order (all degree-0, then
//! degree-1, ...), so truncating to a lower order is a prefix slice.
//! Partial derivatives are recovered as `∂^α f = α! c_α`.

use smallvec::SmallVec;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

pub const MAX_DIM: usize = 4;
pub const MAX_ORDER: usize = 8;

pub type Exponent = [u8; MAX_DIM];
type Coeffs = SmallVec<[f64; 10]>;

const NONE: u16 = u16::MAX;

struct Table {
    exps: Vec<Exponent>,
    degree: Vec<u8>,
    offsets: Vec<usize>,
    mul: Vec<(u16, u16, u16)>,
    mul_end: Vec<usize>,
    shift: Vec<[u16; MAX_DIM]>,
    unshift: Vec<[u16; MAX_DIM]>,
    factorial: Vec<f64>,
}

fn compositions(n: usize, d: usize, prefix: &mut Vec<u8>, out: &mut Vec<Exponent>) {
    if prefix.len() == n - 1 {
        let used: usize = prefix.iter().map(|&a| a as usize).sum();
        let mut e = [0u8; MAX_DIM];
        e[..n - 1].copy_from_slice(prefix);
        e[n - 1] = (d - used) as u8;
        out.push(e);
        return;
    }
    let used: usize = prefix.iter().map(|&a| a as usize).sum();
    for a in (0..=(d - used)).rev() {
        prefix.push(a as u8);
        compositions(n, d, prefix, out);
        prefix.pop();
    }
}

impl Table {
    fn build(n: usize) -> Table {
        let mut exps = Vec::new();
        let mut offsets = vec![0usize];
        for d in 0..=MAX_ORDER {
            if n == 1 {
                let mut e = [0u8; MAX_DIM];
                e[0] = d as u8;
                exps.push(e);
            } else {
                compositions(n, d, &mut Vec::new(), &mut exps);
            }
            offsets.push(exps.len());
        }
        let degree: Vec<u8> = exps.iter().map(|e| e.iter().sum()).collect();
        let lookup = |e: &Exponent| find(&exps, &offsets, e);
        let add = |a: &Exponent, b: &Exponent| {
            let mut e = [0u8; MAX_DIM];
            for l in 0..MAX_DIM {
                e[l] = a[l] + b[l];
            }
            e
        };
        let mut mul = Vec::new();
        for i in 0..exps.len() {
            for j in 0..exps.len() {
                if (degree[i] + degree[j]) as usize <= MAX_ORDER {
                    let k = lookup(&add(&exps[i], &exps[j])).expect("within MAX_ORDER");
                    mul.push((i as u16, j as u16, k as u16));
                }
            }
        }
        mul.sort_by_key(|&(i, j, k)| (degree[k as usize], k, i, j));
        let mut mul_end = vec![0usize; MAX_ORDER + 1];
        for (d, end) in mul_end.iter_mut().enumerate() {
            *end = mul.partition_point(|&(_, _, k)| degree[k as usize] as usize <= d);
        }
        let mut shift = vec![[NONE; MAX_DIM]; exps.len()];
        let mut unshift = vec![[NONE; MAX_DIM]; exps.len()];
        for (i, e) in exps.iter().enumerate() {
            for l in 0..n {
                let mut up = *e;
                up[l] += 1;
                if let Some(k) = lookup(&up) {
                    shift[i][l] = k as u16;
                }
                if e[l] > 0 {
                    let mut down = *e;
                    down[l] -= 1;
                    unshift[i][l] = lookup(&down).expect("lower degree") as u16;
                }
            }
        }
        let fact = |m: u8| (1..=m as u64).product::<u64>() as f64;
        let factorial = exps.iter().map(|e| e.iter().map(|&a| fact(a)).product()).collect();
        Table { exps, degree, offsets, mul, mul_end, shift, unshift, factorial }
    }
}

fn find(exps: &[Exponent], offsets: &[usize], e: &Exponent) -> Option<usize> {
    let d: usize = e.iter().map(|&a| a as usize).sum();
    if d > MAX_ORDER {
        return None;
    }
    (offsets[d]..offsets[d + 1]).find(|&i| exps[i] == *e)
}

fn table(n: usize) -> &'static Table {
    static TABLES: [OnceLock<Table>; MAX_DIM] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    assert!((1..=MAX_DIM).contains(&n), "jet dimension {n} outside 1..={MAX_DIM}");
    TABLES[n - 1].get_or_init(|| Table::build(n))
}

/// Number of coefficients of a jet of the given order in `n` variables.
pub fn jet_len(n: usize, order: usize) -> usize {
    table(n).offsets[order + 1]
}

/// Multi-index of the coefficient stored at position `i`.
pub fn exponent(n: usize, i: usize) -> Exponent {
    table(n).exps[i]
}

/// Storage position of the multi-index `alpha`.
pub fn index_of(n: usize, alpha: &Exponent) -> Option<usize> {
    let t = table(n);
    find(&t.exps, &t.offsets, alpha)
}

/// Position of the coefficient `α + e_l`.
pub fn shifted(n: usize, i: usize, l: usize) -> Option<usize> {
    let s = table(n).shift[i][l];
    (s != NONE).then_some(s as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    n: u8,
    order: u8,
    c: Coeffs,
}

impl Jet {
    pub fn zero(n: usize, order: usize) -> Jet {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        Jet { n: n as u8, order: order as u8, c: SmallVec::from_elem(0.0, jet_len(n, order)) }
    }

    pub fn constant(n: usize, order: usize, v: f64) -> Jet {
        let mut j = Jet::zero(n, order);
        j.c[0] = v;
        j
    }

    /// The coordinate function `x_l` expanded around `x0`.
    pub fn variable(n: usize, order: usize, x0: f64, l: usize) -> Jet {
        let mut j = Jet::constant(n, order, x0);
        if order >= 1 {
            j.c[1 + l] = 1.0;
        }
        j
    }

    /// All coordinate functions around the point `x`.
    pub fn variables(x: &[f64], order: usize) -> SmallVec<[Jet; MAX_DIM]> {
        (0..x.len()).map(|l| Jet::variable(x.len(), order, x[l], l)).collect()
    }

    pub fn from_coeffs(n: usize, order: usize, coeffs: &[f64]) -> Jet {
        assert_eq!(coeffs.len(), jet_len(n, order));
        Jet { n: n as u8, order: order as u8, c: SmallVec::from_slice(coeffs) }
    }

    pub fn dim(&self) -> usize {
        self.n as usize
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, alpha: &Exponent) -> f64 {
        index_of(self.dim(), alpha).filter(|&i| i < self.c.len()).map_or(0.0, |i| self.c[i])
    }

    /// `∂^α f` at the expansion point, or `None` if `|α|` exceeds the order.
    pub fn partial(&self, alpha: &Exponent) -> Option<f64> {
        let t = table(self.dim());
        let i = find(&t.exps, &t.offsets, alpha)?;
        (i < self.c.len()).then(|| self.c[i] * t.factorial[i])
    }

    /// First partial `∂_l f` at the expansion point.
    pub fn d1(&self, l: usize) -> f64 {
        debug_assert!(self.order >= 1);
        self.c[1 + l]
    }

    /// Second partial `∂_a ∂_b f` at the expansion point.
    pub fn d2(&self, a: usize, b: usize) -> f64 {
        debug_assert!(self.order >= 2);
        let k = table(self.dim()).shift[1 + a][b] as usize;
        if a == b {
            2.0 * self.c[k]
        } else {
            self.c[k]
        }
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order());
        Jet { n: self.n, order: order as u8, c: SmallVec::from_slice(&self.c[..jet_len(self.dim(), order)]) }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    /// `self += s * other`, truncating to the lower order.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        if other.order < self.order {
            *self = self.truncate(other.order());
        }
        for (a, b) in self.c.iter_mut().zip(other.c.iter()) {
            *a += s * b;
        }
    }

    fn zip_with(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        assert_eq!(self.n, other.n, "jet dimension mismatch");
        let order = self.order.min(other.order);
        let len = jet_len(self.dim(), order as usize);
        Jet { n: self.n, order, c: (0..len).map(|i| f(self.c[i], other.c[i])).collect() }
    }

    pub fn mul_jet(&self, other: &Jet) -> Jet {
        assert_eq!(self.n, other.n, "jet dimension mismatch");
        let order = self.order.min(other.order) as usize;
        let t = table(self.dim());
        let mut out = Jet::zero(self.dim(), order);
        for &(i, j, k) in &t.mul[..t.mul_end[order]] {
            out.c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        out
    }

    pub fn recip(&self) -> Jet {
        let t = table(self.dim());
        let order = self.order();
        let mut r = Jet::zero(self.dim(), order);
        let a0 = self.c[0];
        r.c[0] = 1.0 / a0;
        for d in 1..=order {
            for &(i, j, k) in &t.mul[t.mul_end[d - 1]..t.mul_end[d]] {
                if i != 0 {
                    r.c[k as usize] -= self.c[i as usize] * r.c[j as usize];
                }
            }
            for k in t.offsets[d]..t.offsets[d + 1] {
                r.c[k] /= a0;
            }
        }
        r
    }

    pub fn div_jet(&self, other: &Jet) -> Jet {
        self.mul_jet(&other.recip())
    }

    /// `f ∘ self` for a univariate `f` given its derivatives `f^(m)` at the
    /// constant term, `m = 0..=order`.
    pub fn compose_univariate(&self, derivs: &[f64]) -> Jet {
        let order = self.order();
        assert!(derivs.len() > order);
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let mut out = Jet::constant(self.dim(), order, derivs[0]);
        let mut power = Jet::constant(self.dim(), order, 1.0);
        let mut fact = 1.0;
        for (m, dm) in derivs.iter().enumerate().take(order + 1).skip(1) {
            power = power.mul_jet(&delta);
            fact *= m as f64;
            out.axpy(dm / fact, &power);
        }
        out
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        let d: SmallVec<[f64; MAX_ORDER + 1]> = (0..=self.order()).map(|m| [s, c, -s, -c][m % 4]).collect();
        self.compose_univariate(&d)
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.c[0].sin_cos();
        let d: SmallVec<[f64; MAX_ORDER + 1]> = (0..=self.order()).map(|m| [c, -s, -c, s][m % 4]).collect();
        self.compose_univariate(&d)
    }

    pub fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        self.compose_univariate(&vec![e; self.order() + 1])
    }

    /// `self^p` for real `p`; the constant term must be positive unless `p`
    /// is a non-negative integer.
    pub fn powf(&self, p: f64) -> Jet {
        let a = self.c[0];
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut coef = 1.0;
        for m in 0..=self.order() {
            d.push(if coef == 0.0 { 0.0 } else { coef * a.powf(p - m as f64) });
            coef *= p - m as f64;
        }
        self.compose_univariate(&d)
    }

    pub fn powi(&self, k: u32) -> Jet {
        let mut out = Jet::constant(self.dim(), self.order(), 1.0);
        for _ in 0..k {
            out = out.mul_jet(self);
        }
        out
    }

    /// `∂_l` of the jet, one order lower.
    pub fn derivative(&self, l: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let n = self.dim();
        let t = table(n);
        let order = self.order() - 1;
        let mut out = Jet::zero(n, order);
        for i in 0..out.c.len() {
            let up = t.shift[i][l] as usize;
            out.c[i] = (t.exps[i][l] as f64 + 1.0) * self.c[up];
        }
        out
    }

    /// `self ∘ inner`, where `inner[l]` are jets (possibly in a different
    /// number of variables) whose constant terms are the expansion point of
    /// `self`.
    pub fn compose(&self, inner: &[Jet]) -> Jet {
        let n = self.dim();
        assert_eq!(inner.len(), n);
        let m = inner[0].dim();
        let order = inner.iter().map(Jet::order).min().unwrap().min(self.order());
        let t = table(n);
        let deltas: Vec<Jet> = inner
            .iter()
            .map(|j| {
                let mut d = j.truncate(order);
                d.c[0] = 0.0;
                d
            })
            .collect();
        let len = jet_len(n, order);
        let mut powers: Vec<Jet> = Vec::with_capacity(len);
        let mut out = Jet::zero(m, order);
        for i in 0..len {
            let p = if i == 0 {
                Jet::constant(m, order, 1.0)
            } else {
                let l = (0..n).find(|&l| t.unshift[i][l] != NONE).unwrap();
                powers[t.unshift[i][l] as usize].mul_jet(&deltas[l])
            };
            out.axpy(self.c[i], &p);
            powers.push(p);
        }
        out
    }

    /// Degree of the monomial stored at position `i`.
    pub fn degree_at(&self, i: usize) -> usize {
        table(self.dim()).degree[i] as usize
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        self.zip_with(o, |a, b| a + b)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        self.zip_with(o, |a, b| a - b)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        self.mul_jet(o)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        &self + &o
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        &self - &o
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        &self * &o
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn e2(a: u8, b: u8) -> Exponent {
        [a, b, 0, 0]
    }

    #[test]
    fn table_sizes_match_binomials() {
        assert_eq!(jet_len(1, 3), 4);
        assert_eq!(jet_len(2, 2), 6);
        assert_eq!(jet_len(3, 3), 20);
        assert_eq!(jet_len(4, 8), 495);
    }

    #[test]
    fn polynomial_partials_are_exact() {
        // f = x^2 y + 3 y^3 at (2, -1)
        let v = Jet::variables(&[2.0, -1.0], 3);
        let f = &(&(&v[0] * &v[0]) * &v[1]) + &v[1].powi(3).scale(3.0);
        assert_relative_eq!(f.value(), -4.0 - 3.0);
        assert_relative_eq!(f.partial(&e2(1, 0)).unwrap(), -4.0);
        assert_relative_eq!(f.partial(&e2(0, 1)).unwrap(), 4.0 + 9.0);
        assert_relative_eq!(f.partial(&e2(1, 1)).unwrap(), 4.0);
        assert_relative_eq!(f.partial(&e2(0, 3)).unwrap(), 18.0);
        assert_relative_eq!(f.partial(&e2(2, 1)).unwrap(), 2.0);
        assert!(f.partial(&e2(2, 2)).is_none());
    }

    #[test]
    fn recip_and_transcendentals() {
        let x = Jet::variable(1, 5, 0.7, 0);
        let r = x.recip();
        for m in 0..=5u8 {
            let want = (-1f64).powi(m as i32) * (1..=m as u64).product::<u64>() as f64 * 0.7f64.powi(-(m as i32) - 1);
            assert_relative_eq!(r.partial(&[m, 0, 0, 0]).unwrap(), want, max_relative = 1e-12);
        }
        let s = x.sin();
        assert_relative_eq!(s.partial(&[3, 0, 0, 0]).unwrap(), -0.7f64.cos(), max_relative = 1e-12);
        let e = x.scale(2.0).exp();
        assert_relative_eq!(e.partial(&[4, 0, 0, 0]).unwrap(), 16.0 * 1.4f64.exp(), max_relative = 1e-12);
        let q = x.powf(0.5);
        assert_relative_eq!(q.partial(&[2, 0, 0, 0]).unwrap(), -0.25 * 0.7f64.powf(-1.5), max_relative = 1e-12);
    }

    #[test]
    fn derivative_lowers_order() {
        let v = Jet::variables(&[0.3, 0.4], 4);
        let f = (&v[0] * &v[1]).sin();
        let fx = f.derivative(0);
        assert_eq!(fx.order(), 3);
        assert_relative_eq!(fx.value(), f.partial(&e2(1, 0)).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(fx.partial(&e2(1, 2)).unwrap(), f.partial(&e2(2, 2)).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn composition_matches_direct_evaluation() {
        let v = Jet::variables(&[0.2, -0.5], 3);
        let inner = vec![&v[0] * &v[1], v[0].sin()];
        let p = [inner[0].value(), inner[1].value()];
        let w = Jet::variables(&p, 3);
        let f = (&w[0] + &(&w[1] * &w[1])).exp();
        let composed = f.compose(&inner);
        let direct = (&inner[0] + &(&inner[1] * &inner[1])).exp();
        for (a, b) in composed.coeffs().iter().zip(direct.coeffs()) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-14);
        }
    }
}
