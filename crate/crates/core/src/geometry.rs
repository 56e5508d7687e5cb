//! Chart atlases, tensor components and the transformation laws between
//! charts, pull-backs and push-forwards.
//!
//! Every chart `c` carries three concentric coordinate balls of radii
//! `3r > 2r > r` (called U, V and W). The W-balls cover the manifold, a flow
//! running in chart `c` hops to another chart once it leaves the V-ball, and
//! coordinates are trusted anywhere inside the U-ball.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type ChartId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is outside the overlap of charts {from} and {to}")]
    OutsideOverlap { from: ChartId, to: ChartId },
    #[error("no chart of the atlas contains the point")]
    NotCovered,
    #[error("unknown chart id {0}")]
    UnknownChart(ChartId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular Jacobian")]
    SingularJacobian,
}

/// Tensor type `(r, s)`: `r` contravariant and `s` covariant slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Valence {
    pub contra: usize,
    pub co: usize,
}

impl Valence {
    pub const SCALAR: Valence = Valence { contra: 0, co: 0 };
    pub const VECTOR: Valence = Valence { contra: 1, co: 0 };
    pub const COVECTOR: Valence = Valence { contra: 0, co: 1 };
    pub const MIXED: Valence = Valence { contra: 1, co: 1 };

    pub fn new(contra: usize, co: usize) -> Valence {
        Valence { contra, co }
    }

    pub fn rank(&self) -> usize {
        self.contra + self.co
    }

    pub fn n_components(&self, n: usize) -> usize {
        n.pow(self.rank() as u32)
    }

    /// The valence of tensors that pair fully with this one.
    pub fn dual(&self) -> Valence {
        Valence { contra: self.co, co: self.contra }
    }
}

impl std::fmt::Display for Valence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.contra, self.co)
    }
}

/// Decompose a row-major flat index into its `rank` slot indices.
pub fn multi_index(mut flat: usize, n: usize, rank: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in (0..rank).rev() {
        idx[slot] = flat % n;
        flat /= n;
    }
    idx
}

pub fn flat_index(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Components of an `(r, s)` tensor at one point in one chart, stored
/// row-major with contravariant slots first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorValue {
    pub valence: Valence,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl TensorValue {
    pub fn zeros(valence: Valence, dim: usize) -> TensorValue {
        TensorValue { valence, dim, data: vec![0.0; valence.n_components(dim)] }
    }

    pub fn new(valence: Valence, dim: usize, data: Vec<f64>) -> Result<TensorValue, GeometryError> {
        let expected = valence.n_components(dim);
        if data.len() != expected {
            return Err(GeometryError::DimensionMismatch { expected, got: data.len() });
        }
        Ok(TensorValue { valence, dim, data })
    }

    pub fn scalar(v: f64) -> TensorValue {
        TensorValue { valence: Valence::SCALAR, dim: 1, data: vec![v] }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat_index(idx, self.dim)]
    }

    pub fn scale(&self, s: f64) -> TensorValue {
        TensorValue { data: self.data.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    pub fn axpy(&mut self, s: f64, other: &TensorValue) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &TensorValue) -> TensorValue {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &TensorValue) -> TensorValue {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Apply `m` along one slot: `out[..i..] = Σ_k m[i,k] v[..k..]`, or with
/// `m` transposed when `transpose` is set.
fn mode_product(data: &[f64], n: usize, rank: usize, slot: usize, m: &DMatrix<f64>, transpose: bool) -> Vec<f64> {
    let stride = n.pow((rank - 1 - slot) as u32);
    let mut out = vec![0.0; data.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = (flat / stride) % n;
        let base = flat - i * stride;
        let mut acc = 0.0;
        for k in 0..n {
            let mik = if transpose { m[(k, i)] } else { m[(i, k)] };
            acc += mik * data[base + k * stride];
        }
        *o = acc;
    }
    out
}

/// The general transformation kernel: contravariant slots are contracted
/// with `a` (`a^i_k v^k`), covariant slots with `b` (`v_l b^l_j`).
pub fn transform_tensor(v: &TensorValue, a: &DMatrix<f64>, b: &DMatrix<f64>) -> TensorValue {
    let n = v.dim;
    let rank = v.valence.rank();
    let mut data = v.data.clone();
    for slot in 0..rank {
        let contra = slot < v.valence.contra;
        data = if contra {
            mode_product(&data, n, rank, slot, a, false)
        } else {
            mode_product(&data, n, rank, slot, b, true)
        };
    }
    TensorValue { valence: v.valence, dim: n, data }
}

/// Like `transform_tensor` but with one matrix per slot: `mats[p]` acts on
/// slot `p` (transposed on covariant slots).
pub fn transform_slots(v: &TensorValue, mats: &[&DMatrix<f64>]) -> TensorValue {
    let n = v.dim;
    let rank = v.valence.rank();
    assert_eq!(mats.len(), rank);
    let mut data = v.data.clone();
    for (slot, m) in mats.iter().enumerate() {
        data = mode_product(&data, n, rank, slot, m, slot >= v.valence.contra);
    }
    TensorValue { valence: v.valence, dim: n, data }
}

/// `φ^* K` given `jac = Dφ` at the base point and its inverse.
pub fn pullback(k: &TensorValue, jac: &DMatrix<f64>, inv_jac: &DMatrix<f64>) -> TensorValue {
    transform_tensor(k, inv_jac, jac)
}

/// `φ_* K` given `jac = Dφ` at the preimage and its inverse.
pub fn pushforward(k: &TensorValue, jac: &DMatrix<f64>, inv_jac: &DMatrix<f64>) -> TensorValue {
    transform_tensor(k, jac, inv_jac)
}

/// Full contraction of an `(r, s)` tensor with an `(s, r)` tensor.
pub fn pair(k: &TensorValue, s: &TensorValue) -> Result<f64, GeometryError> {
    if s.valence != k.valence.dual() || s.dim != k.dim {
        return Err(GeometryError::DimensionMismatch { expected: k.data.len(), got: s.data.len() });
    }
    let n = k.dim;
    let nu = n.pow(k.valence.contra as u32);
    let nl = n.pow(k.valence.co as u32);
    let mut acc = 0.0;
    for i in 0..nu {
        for j in 0..nl {
            acc += k.data[i * nl + j] * s.data[j * nu + i];
        }
    }
    Ok(acc)
}

pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    m.clone().try_inverse().ok_or(GeometryError::SingularJacobian)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Euclidean,
    Torus,
    Sphere,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub id: ChartId,
    pub center: Vec<f64>,
    pub r: f64,
}

impl Chart {
    pub fn radius_u(&self) -> f64 {
        3.0 * self.r
    }

    pub fn radius_v(&self) -> f64 {
        2.0 * self.r
    }

    pub fn radius_w(&self) -> f64 {
        self.r
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        if d2.is_finite() {
            d2.sqrt()
        } else {
            f64::INFINITY
        }
    }

    pub fn in_u(&self, x: &[f64]) -> bool {
        self.distance(x) < self.radius_u()
    }

    pub fn in_v(&self, x: &[f64]) -> bool {
        self.distance(x) < self.radius_v()
    }

    pub fn in_w(&self, x: &[f64]) -> bool {
        self.distance(x) < self.radius_w()
    }
}

/// A finite atlas of one of the supported manifolds.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartAtlas {
    pub manifold: Manifold,
    pub dim: usize,
    pub charts: Vec<Chart>,
}

fn wrap_angle(a: f64) -> f64 {
    // representative in (-π, π]
    let w = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl ChartAtlas {
    /// `ℝⁿ` with the single identity chart.
    pub fn euclidean(n: usize) -> ChartAtlas {
        ChartAtlas {
            manifold: Manifold::Euclidean,
            dim: n,
            charts: vec![Chart { id: 0, center: vec![0.0; n], r: 1e12 }],
        }
    }

    /// The flat torus `(ℝ/2πℤ)ⁿ` covered by `2ⁿ` shifted angle charts
    /// centered at `{0, π}ⁿ`.
    pub fn torus(n: usize) -> ChartAtlas {
        let r = 1.05 * (n as f64).sqrt() * PI / 2.0;
        let charts = (0..1usize << n)
            .map(|id| Chart { id, center: (0..n).map(|l| if id >> l & 1 == 1 { PI } else { 0.0 }).collect(), r })
            .collect();
        ChartAtlas { manifold: Manifold::Torus, dim: n, charts }
    }

    /// The unit sphere `S² ⊂ ℝ³` with stereographic charts from the south
    /// pole (id 0, centered at the north pole) and from the north pole (id 1).
    pub fn sphere() -> ChartAtlas {
        let chart = |id| Chart { id, center: vec![0.0, 0.0], r: 1.5 };
        ChartAtlas { manifold: Manifold::Sphere, dim: 2, charts: vec![chart(0), chart(1)] }
    }

    pub fn chart(&self, id: ChartId) -> Result<&Chart, GeometryError> {
        self.charts.get(id).ok_or(GeometryError::UnknownChart(id))
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Dimension of the abstract point representation.
    pub fn ambient_dim(&self) -> usize {
        match self.manifold {
            Manifold::Sphere => 3,
            _ => self.dim,
        }
    }

    /// Coordinates → abstract point (ℝⁿ point, angles in `[0, 2π)`, or the
    /// unit vector in ℝ³).
    pub fn to_point(&self, x: &[f64], chart: ChartId) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(x)?;
        self.chart(chart)?;
        Ok(match self.manifold {
            Manifold::Euclidean => x.to_vec(),
            Manifold::Torus => x.iter().map(|a| a.rem_euclid(2.0 * PI)).collect(),
            Manifold::Sphere => {
                let s = x[0] * x[0] + x[1] * x[1];
                let d = 1.0 + s;
                let z = (1.0 - s) / d;
                vec![2.0 * x[0] / d, 2.0 * x[1] / d, if chart == 0 { z } else { -z }]
            }
        })
    }

    /// Abstract point → coordinates in `chart`.
    pub fn from_point(&self, p: &[f64], chart: ChartId) -> Result<Vec<f64>, GeometryError> {
        let c = self.chart(chart)?;
        Ok(match self.manifold {
            Manifold::Euclidean => p.to_vec(),
            Manifold::Torus => p.iter().zip(&c.center).map(|(a, cc)| cc + wrap_angle(a - cc)).collect(),
            Manifold::Sphere => {
                let d = if chart == 0 { 1.0 + p[2] } else { 1.0 - p[2] };
                vec![p[0] / d, p[1] / d]
            }
        })
    }

    /// The lowest-id chart whose W-ball contains the point.
    pub fn locate_chart(&self, p: &[f64]) -> Result<ChartId, GeometryError> {
        if p.len() != self.ambient_dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.ambient_dim(), got: p.len() });
        }
        for c in &self.charts {
            let x = self.from_point(p, c.id)?;
            if c.in_w(&x) {
                return Ok(c.id);
            }
        }
        Err(GeometryError::NotCovered)
    }

    /// Coordinates of the same point in chart `to`.
    pub fn transition(&self, x: &[f64], from: ChartId, to: ChartId) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(x)?;
        let target = self.chart(to)?;
        if from == to {
            self.chart(from)?;
            return Ok(x.to_vec());
        }
        if !self.chart(from)?.in_u(x) {
            return Err(GeometryError::OutsideOverlap { from, to });
        }
        let y = match self.manifold {
            Manifold::Sphere => {
                let s = x[0] * x[0] + x[1] * x[1];
                vec![x[0] / s, x[1] / s]
            }
            _ => self.from_point(&self.to_point(x, from)?, to)?,
        };
        if !target.in_u(&y) {
            return Err(GeometryError::OutsideOverlap { from, to });
        }
        Ok(y)
    }

    /// `D(τ_to ∘ τ_from⁻¹)` at `x` (coordinates in chart `from`).
    pub fn transition_jacobian(&self, x: &[f64], from: ChartId, to: ChartId) -> Result<DMatrix<f64>, GeometryError> {
        self.transition(x, from, to)?;
        let n = self.dim;
        if from == to || self.manifold != Manifold::Sphere {
            return Ok(DMatrix::identity(n, n));
        }
        let s = x[0] * x[0] + x[1] * x[1];
        Ok(DMatrix::from_fn(2, 2, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta / s - 2.0 * x[i] * x[j] / (s * s)
        }))
    }

    /// Components of `v` (given at `x` in chart `from`) in chart `to`.
    pub fn change_chart(
        &self,
        v: &TensorValue,
        x: &[f64],
        from: ChartId,
        to: ChartId,
    ) -> Result<TensorValue, GeometryError> {
        if from == to {
            return Ok(v.clone());
        }
        let d = self.transition_jacobian(x, from, to)?;
        Ok(pushforward(v, &d, &invert(&d)?))
    }
}
