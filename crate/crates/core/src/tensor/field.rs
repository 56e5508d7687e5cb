use crate::geometry::{flat_index, multi_index, ChartId, GeometryError, TensorValue, Valence};
use crate::jet::{Exponent, Jet, MAX_DIM, MAX_ORDER};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Smoothness reported by analytic fields. Any request above `MAX_ORDER`
/// is refused by the jet layer anyway.
pub const C_INF: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field `{field}` is only C^{available} but C^{needed} is required")]
    InsufficientSmoothness { field: String, needed: usize, available: usize },
    #[error("derivative order {0} exceeds the supported maximum")]
    OrderTooHigh(usize),
    #[error("field `{field}`: {msg}")]
    Mismatch { field: String, msg: String },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{field}`: {msg}")]
    BadParams { field: String, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Per-component jets of a tensor field at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorJet {
    pub valence: Valence,
    pub dim: usize,
    pub comps: Vec<Jet>,
}

impl TensorJet {
    pub fn zeros(valence: Valence, dim: usize, order: usize) -> TensorJet {
        TensorJet { valence, dim, comps: vec![Jet::zero(dim, order); valence.n_components(dim)] }
    }

    pub fn order(&self) -> usize {
        self.comps.iter().map(Jet::order).min().unwrap_or(MAX_ORDER)
    }

    pub fn value(&self) -> TensorValue {
        TensorValue { valence: self.valence, dim: self.dim, data: self.comps.iter().map(Jet::value).collect() }
    }

    pub fn partial(&self, alpha: &Exponent) -> Option<TensorValue> {
        let data = self.comps.iter().map(|j| j.partial(alpha)).collect::<Option<Vec<_>>>()?;
        Some(TensorValue { valence: self.valence, dim: self.dim, data })
    }

    pub fn derivative(&self, l: usize) -> TensorJet {
        self.with_comps(self.comps.iter().map(|j| j.derivative(l)).collect())
    }

    pub fn truncate(&self, order: usize) -> TensorJet {
        self.with_comps(self.comps.iter().map(|j| j.truncate(order)).collect())
    }

    pub fn scale(&self, s: f64) -> TensorJet {
        self.with_comps(self.comps.iter().map(|j| j.scale(s)).collect())
    }

    pub fn axpy(&mut self, s: f64, other: &TensorJet) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(s, b);
        }
    }

    fn with_comps(&self, comps: Vec<Jet>) -> TensorJet {
        TensorJet { valence: self.valence, dim: self.dim, comps }
    }
}

/// A time-dependent `(r, s)` tensor field given in the coordinates of each
/// chart of an atlas.
pub trait TensorField: Send + Sync + fmt::Debug {
    fn valence(&self) -> Valence;
    fn dim(&self) -> usize;
    /// Largest `k` such that the field is `C^k` in space.
    fn smoothness(&self) -> usize;
    /// Whether the field is `C¹` in time (needed by the Stratonovich scheme).
    fn time_c1(&self) -> bool {
        true
    }
    fn name(&self) -> String;
    /// Jet of order `order`; callers guarantee `order <= smoothness()`.
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet;
}

pub type FieldRef = Arc<dyn TensorField>;

impl dyn TensorField {
    pub fn jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> Result<TensorJet, FieldError> {
        if order > self.smoothness() {
            return Err(FieldError::InsufficientSmoothness {
                field: self.name(),
                needed: order,
                available: self.smoothness(),
            });
        }
        if order > MAX_ORDER {
            return Err(FieldError::OrderTooHigh(order));
        }
        if x.len() != self.dim() {
            return Err(FieldError::Mismatch {
                field: self.name(),
                msg: format!("point has {} coordinates, field lives in dimension {}", x.len(), self.dim()),
            });
        }
        Ok(self.compute_jet(t, x, chart, order))
    }

    pub fn eval(&self, t: f64, x: &[f64], chart: ChartId) -> Result<TensorValue, FieldError> {
        Ok(self.jet(t, x, chart, 0)?.value())
    }

    /// `∂^α` of every component, `α` given per coordinate.
    pub fn partial(&self, t: f64, x: &[f64], chart: ChartId, alpha: &[u8]) -> Result<TensorValue, FieldError> {
        let mut e = [0u8; MAX_DIM];
        e[..alpha.len()].copy_from_slice(alpha);
        let order = alpha.iter().map(|&a| a as usize).sum();
        Ok(self.jet(t, x, chart, order)?.partial(&e).expect("order checked"))
    }
}

/// Closure form of a field: maps coordinate jets to component jets.
pub type JetFn = dyn Fn(f64, ChartId, &[Jet]) -> Vec<Jet> + Send + Sync;

#[derive(Clone)]
pub struct FnField {
    pub name: String,
    pub valence: Valence,
    pub dim: usize,
    pub smoothness: usize,
    pub time_c1: bool,
    pub f: Arc<JetFn>,
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} on R^{}", self.name, self.valence, self.dim)
    }
}

impl FnField {
    pub fn new(
        name: impl Into<String>,
        valence: Valence,
        dim: usize,
        f: impl Fn(f64, ChartId, &[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    ) -> FnField {
        FnField { name: name.into(), valence, dim, smoothness: C_INF, time_c1: true, f: Arc::new(f) }
    }

    pub fn into_ref(self) -> FieldRef {
        Arc::new(self)
    }
}

impl TensorField for FnField {
    fn valence(&self) -> Valence {
        self.valence
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn smoothness(&self) -> usize {
        self.smoothness
    }
    fn time_c1(&self) -> bool {
        self.time_c1
    }
    fn name(&self) -> String {
        self.name.clone()
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let vars = Jet::variables(x, order);
        let comps = (self.f)(t, chart, &vars);
        debug_assert_eq!(comps.len(), self.valence.n_components(self.dim));
        TensorJet { valence: self.valence, dim: self.dim, comps }
    }
}

/// Scalar multiple of time: `θ(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant {
        value: f64,
    },
    /// `a + b t`
    Affine {
        a: f64,
        b: f64,
    },
    /// `a e^{rate t}`
    Exp {
        a: f64,
        rate: f64,
    },
    /// `amp sin(freq t) + offset`
    Sine {
        amp: f64,
        freq: f64,
        offset: f64,
    },
    /// `before` for `t < at`, `after` otherwise (not C¹ in time).
    Switch {
        before: f64,
        after: f64,
        at: f64,
    },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant { value } => value,
            TimeProfile::Affine { a, b } => a + b * t,
            TimeProfile::Exp { a, rate } => a * (rate * t).exp(),
            TimeProfile::Sine { amp, freq, offset } => amp * (freq * t).sin() + offset,
            TimeProfile::Switch { before, after, at } => {
                if t < at {
                    before
                } else {
                    after
                }
            }
        }
    }

    pub fn time_c1(&self) -> bool {
        !matches!(self, TimeProfile::Switch { .. })
    }
}

/// `θ(t) H(x)`.
#[derive(Clone, Debug)]
pub struct ProfiledField {
    pub profile: TimeProfile,
    pub inner: FieldRef,
}

impl TensorField for ProfiledField {
    fn valence(&self) -> Valence {
        self.inner.valence()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn smoothness(&self) -> usize {
        self.inner.smoothness()
    }
    fn time_c1(&self) -> bool {
        self.profile.time_c1() && self.inner.time_c1()
    }
    fn name(&self) -> String {
        format!("θ(t)·{}", self.inner.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        self.inner.compute_jet(t, x, chart, order).scale(self.profile.value(t))
    }
}

/// Caps the declared smoothness of a field (used to model low-regularity
/// coefficients).
#[derive(Clone, Debug)]
pub struct Declared {
    pub inner: FieldRef,
    pub smoothness: usize,
}

impl TensorField for Declared {
    fn valence(&self) -> Valence {
        self.inner.valence()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn smoothness(&self) -> usize {
        self.smoothness.min(self.inner.smoothness())
    }
    fn time_c1(&self) -> bool {
        self.inner.time_c1()
    }
    fn name(&self) -> String {
        format!("{} (C^{})", self.inner.name(), self.smoothness)
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        self.inner.compute_jet(t, x, chart, order)
    }
}

/// The exterior derivative `df` of a scalar field.
#[derive(Clone, Debug)]
pub struct Differential {
    pub scalar: FieldRef,
}

impl TensorField for Differential {
    fn valence(&self) -> Valence {
        Valence::COVECTOR
    }
    fn dim(&self) -> usize {
        self.scalar.dim()
    }
    fn smoothness(&self) -> usize {
        self.scalar.smoothness().saturating_sub(1)
    }
    fn time_c1(&self) -> bool {
        self.scalar.time_c1()
    }
    fn name(&self) -> String {
        format!("d({})", self.scalar.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let f = &self.scalar.compute_jet(t, x, chart, order + 1).comps[0];
        TensorJet { valence: Valence::COVECTOR, dim: x.len(), comps: (0..x.len()).map(|l| f.derivative(l)).collect() }
    }
}

/// Tensor product `A ⊗ B`; requires `A` purely contravariant or `B` purely
/// covariant so that the result keeps contravariant slots first.
#[derive(Clone, Debug)]
pub struct Product {
    pub a: FieldRef,
    pub b: FieldRef,
}

impl Product {
    pub fn new(a: FieldRef, b: FieldRef) -> Result<Product, FieldError> {
        if a.dim() != b.dim() {
            return Err(FieldError::Mismatch { field: a.name(), msg: "dimension mismatch in tensor product".into() });
        }
        if a.valence().co > 0 && b.valence().contra > 0 {
            return Err(FieldError::Mismatch {
                field: a.name(),
                msg: "tensor product would interleave slot types".into(),
            });
        }
        Ok(Product { a, b })
    }
}

impl TensorField for Product {
    fn valence(&self) -> Valence {
        let (a, b) = (self.a.valence(), self.b.valence());
        Valence::new(a.contra + b.contra, a.co + b.co)
    }
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn smoothness(&self) -> usize {
        self.a.smoothness().min(self.b.smoothness())
    }
    fn time_c1(&self) -> bool {
        self.a.time_c1() && self.b.time_c1()
    }
    fn name(&self) -> String {
        format!("{}⊗{}", self.a.name(), self.b.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let ja = self.a.compute_jet(t, x, chart, order);
        let jb = self.b.compute_jet(t, x, chart, order);
        let mut comps = Vec::with_capacity(ja.comps.len() * jb.comps.len());
        for ca in &ja.comps {
            for cb in &jb.comps {
                comps.push(ca * cb);
            }
        }
        TensorJet { valence: self.valence(), dim: x.len(), comps }
    }
}

/// A field known only through its jet at one point (for example a jet built
/// from finite differences). Evaluating anywhere else is a logic error.
#[derive(Clone, Debug)]
pub struct LocalJet {
    pub point: Vec<f64>,
    pub jet: TensorJet,
}

impl TensorField for LocalJet {
    fn valence(&self) -> Valence {
        self.jet.valence
    }
    fn dim(&self) -> usize {
        self.jet.dim
    }
    fn smoothness(&self) -> usize {
        self.jet.order()
    }
    fn name(&self) -> String {
        "local jet".into()
    }
    fn compute_jet(&self, _t: f64, x: &[f64], _chart: ChartId, order: usize) -> TensorJet {
        debug_assert!(x.iter().zip(&self.point).all(|(a, b)| a == b), "local jet evaluated off its point");
        self.jet.truncate(order)
    }
}

/// Full contraction `⟨K, S⟩` of an `(r, s)` field with an `(s, r)` field.
#[derive(Clone, Debug)]
pub struct Pairing {
    pub k: FieldRef,
    pub s: FieldRef,
}

impl Pairing {
    pub fn new(k: FieldRef, s: FieldRef) -> Result<Pairing, FieldError> {
        if s.valence() != k.valence().dual() || s.dim() != k.dim() {
            return Err(FieldError::Mismatch { field: k.name(), msg: "pairing needs dual valences".into() });
        }
        Ok(Pairing { k, s })
    }
}

impl TensorField for Pairing {
    fn valence(&self) -> Valence {
        Valence::SCALAR
    }
    fn dim(&self) -> usize {
        self.k.dim()
    }
    fn smoothness(&self) -> usize {
        self.k.smoothness().min(self.s.smoothness())
    }
    fn name(&self) -> String {
        format!("<{}, {}>", self.k.name(), self.s.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let jk = self.k.compute_jet(t, x, chart, order);
        let js = self.s.compute_jet(t, x, chart, order);
        let n = x.len();
        let v = self.k.valence();
        let nu = n.pow(v.contra as u32);
        let nl = n.pow(v.co as u32);
        let mut acc = Jet::zero(n, order);
        for i in 0..nu {
            for j in 0..nl {
                acc = &acc + &(&jk.comps[i * nl + j] * &js.comps[j * nu + i]);
            }
        }
        TensorJet { valence: Valence::SCALAR, dim: n, comps: vec![acc] }
    }
}

/// Transform tensor jets with matrices of jets (contravariant slots by `a`,
/// covariant slots by `b`, as in `geometry::transform_tensor`).
pub fn transform_jets(k: &TensorJet, a: &[Vec<Jet>], b: &[Vec<Jet>]) -> TensorJet {
    let n = k.dim;
    let rank = k.valence.rank();
    let mut comps = k.comps.clone();
    for slot in 0..rank {
        let contra = slot < k.valence.contra;
        let next: Vec<Jet> = (0..comps.len())
            .map(|flat| {
                let idx = multi_index(flat, n, rank);
                let mut acc: Option<Jet> = None;
                for m in 0..n {
                    let mut src = idx.clone();
                    src[slot] = m;
                    let coef = if contra { &a[idx[slot]][m] } else { &b[m][idx[slot]] };
                    let term = coef * &comps[flat_index(&src, n)];
                    acc = Some(match acc {
                        None => term,
                        Some(s) => &s + &term,
                    });
                }
                acc.unwrap_or_else(|| comps[flat].clone())
            })
            .collect();
        comps = next;
    }
    TensorJet { valence: k.valence, dim: n, comps }
}

/// Inverse of a matrix of jets by Gauss-Jordan elimination (no pivoting; the
/// constant part must have non-vanishing leading minors).
pub fn invert_jets(m: &[Vec<Jet>]) -> Vec<Vec<Jet>> {
    let n = m.len();
    let nvar = m[0][0].dim();
    let order = m.iter().flatten().map(Jet::order).min().unwrap();
    let mut a: Vec<Vec<Jet>> = m.iter().map(|row| row.iter().map(|j| j.truncate(order)).collect()).collect();
    let mut inv: Vec<Vec<Jet>> =
        (0..n).map(|i| (0..n).map(|j| Jet::constant(nvar, order, if i == j { 1.0 } else { 0.0 })).collect()).collect();
    for p in 0..n {
        let r = a[p][p].recip();
        for j in 0..n {
            a[p][j] = &a[p][j] * &r;
            inv[p][j] = &inv[p][j] * &r;
        }
        for i in 0..n {
            if i == p {
                continue;
            }
            let f = a[i][p].clone();
            for j in 0..n {
                a[i][j] = &a[i][j] - &(&f * &a[p][j]);
                inv[i][j] = &inv[i][j] - &(&f * &inv[p][j]);
            }
        }
    }
    inv
}

/// Map of coordinate jets, used to pull fields back by explicit
/// diffeomorphisms of one chart.
pub type MapFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;

/// `F^* K` for a diffeomorphism `F` of a single chart.
#[derive(Clone)]
pub struct PulledBack {
    pub k: FieldRef,
    pub map: Arc<MapFn>,
    pub map_smoothness: usize,
}

impl fmt::Debug for PulledBack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F^*({:?})", self.k)
    }
}

impl TensorField for PulledBack {
    fn valence(&self) -> Valence {
        self.k.valence()
    }
    fn dim(&self) -> usize {
        self.k.dim()
    }
    fn smoothness(&self) -> usize {
        self.k.smoothness().min(self.map_smoothness.saturating_sub(1))
    }
    fn name(&self) -> String {
        format!("F^*{}", self.k.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let n = x.len();
        let vars = Jet::variables(x, order + 1);
        let y = (self.map)(&vars);
        let y0: Vec<f64> = y.iter().map(Jet::value).collect();
        let y_d: Vec<Jet> = y.iter().map(|j| j.truncate(order)).collect();
        let kj = self.k.compute_jet(t, &y0, chart, order);
        let composed =
            TensorJet { valence: kj.valence, dim: n, comps: kj.comps.iter().map(|c| c.compose(&y_d)).collect() };
        let jac: Vec<Vec<Jet>> = (0..n).map(|i| (0..n).map(|j| y[i].derivative(j)).collect()).collect();
        let inv = invert_jets(&jac);
        transform_jets(&composed, &inv, &jac)
    }
}
