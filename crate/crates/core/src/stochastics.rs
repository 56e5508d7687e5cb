//! Driving processes on a uniform grid and the discrete stochastic integrals
//! built on them.
//!
//! Randomness is counter based: every normal draw is addressed by
//! `(seed, path, tag, component, index)`, so paths can be generated in any
//! order, on any number of workers, and refined dyadically by Brownian-bridge
//! midpoint insertion while keeping every coarse increment.

use crate::tensor::TimeProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("grid mismatch: paths of length {0} and {1}")]
    GridMismatch(usize, usize),
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("driver {driver} refers to Brownian component {component} but only {available} exist")]
    UnknownComponent { driver: usize, component: usize, available: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<TimeGrid, StochasticError> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(StochasticError::BadGrid(format!("horizon {horizon}, steps {steps}")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.steps as f64
    }

    pub fn refine(&self) -> TimeGrid {
        TimeGrid { horizon: self.horizon, steps: 2 * self.steps }
    }

    /// Grid index of a grid time.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.h()).round().max(0.0) as usize).min(self.steps)
    }
}

/// Addresses the normal draws of one ensemble member.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub path: u64,
}

impl RngStream {
    pub fn new(seed: u64, path: u64) -> RngStream {
        RngStream { seed, path }
    }

    /// `count` standard normals of the stream `(tag, component)`.
    pub fn normals(&self, tag: u64, component: u64, count: usize) -> Vec<f64> {
        let mut key = [0u8; 32];
        for (i, word) in [self.seed, self.path, tag, component].iter().enumerate() {
            key[8 * i..8 * i + 8].copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        (0..count).map(|_| rng.sample(StandardNormal)).collect()
    }
}

/// Finite-variation driver `A` with `A(0) = 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FvSpec {
    #[default]
    Zero,
    /// `rate · t`
    Linear { rate: f64 },
    /// `a t + b t²`
    Quadratic { a: f64, b: f64 },
    /// `amp · sin(freq t)`
    Sine { amp: f64, freq: f64 },
}

impl FvSpec {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            FvSpec::Zero => 0.0,
            FvSpec::Linear { rate } => rate * t,
            FvSpec::Quadratic { a, b } => a * t + b * t * t,
            FvSpec::Sine { amp, freq } => amp * (freq * t).sin(),
        }
    }
}

/// Continuous local martingale driver `M` with `M(0) = 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MartSpec {
    #[default]
    Zero,
    /// `M = B^component`
    Brownian { component: usize },
    /// `M = ∫ σ(s) dB^component(s)`
    Integral { component: usize, sigma: TimeProfile },
}

impl MartSpec {
    pub fn component(&self) -> Option<usize> {
        match self {
            MartSpec::Zero => None,
            MartSpec::Brownian { component } | MartSpec::Integral { component, .. } => Some(*component),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverDecl {
    #[serde(default)]
    pub fv: FvSpec,
    #[serde(default)]
    pub mart: MartSpec,
}

/// Everything random in one scenario: `brownian` independent Brownian
/// components and one `(A^i, M^i)` pair per declared driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    pub brownian: usize,
    #[serde(default)]
    pub drivers: Vec<DriverDecl>,
}

impl DriverSpec {
    pub fn validate(&self) -> Result<(), StochasticError> {
        for (i, d) in self.drivers.iter().enumerate() {
            if let Some(c) = d.mart.component() {
                if c >= self.brownian {
                    return Err(StochasticError::UnknownComponent {
                        driver: i,
                        component: c,
                        available: self.brownian,
                    });
                }
            }
        }
        Ok(())
    }
}

/// How `Δ[M^i, B^j]` enters the formulas.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketMode {
    /// Products of increments `ΔM ΔB`.
    #[default]
    Realized,
    /// The exact bracket increment `σ(t_k) h δ_{component, j}`.
    ClosedForm,
}

/// One realization of all drivers on one grid.
#[derive(Clone, Debug)]
pub struct DrivingPaths {
    pub spec: Arc<DriverSpec>,
    pub grid: TimeGrid,
    pub rng: RngStream,
    pub level: u32,
    /// `bm[j][k] = B^j(t_k)`
    pub bm: Vec<Vec<f64>>,
    pub fv: Vec<Vec<f64>>,
    pub mart: Vec<Vec<f64>>,
}

fn cumulative(increments: impl Iterator<Item = f64>, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

impl DrivingPaths {
    pub fn sample(spec: Arc<DriverSpec>, grid: TimeGrid, rng: RngStream) -> Result<DrivingPaths, StochasticError> {
        spec.validate()?;
        let sh = grid.h().sqrt();
        let bm = (0..spec.brownian)
            .map(|j| cumulative(rng.normals(0, j as u64, grid.steps).into_iter().map(|z| sh * z), grid.steps))
            .collect();
        Ok(DrivingPaths::assemble(spec, grid, rng, 0, bm))
    }

    fn assemble(spec: Arc<DriverSpec>, grid: TimeGrid, rng: RngStream, level: u32, bm: Vec<Vec<f64>>) -> DrivingPaths {
        let fv = spec.drivers.iter().map(|d| (0..=grid.steps).map(|k| d.fv.value(grid.t(k))).collect()).collect();
        let mart = spec
            .drivers
            .iter()
            .map(|d| match &d.mart {
                MartSpec::Zero => vec![0.0; grid.steps + 1],
                MartSpec::Brownian { component } => bm[*component].clone(),
                MartSpec::Integral { component, sigma } => {
                    let b: &Vec<f64> = &bm[*component];
                    cumulative((0..grid.steps).map(|k| sigma.value(grid.t(k)) * (b[k + 1] - b[k])), grid.steps)
                }
            })
            .collect();
        DrivingPaths { spec, grid, rng, level, bm, fv, mart }
    }

    /// The same realization on the grid with half the step: every coarse
    /// value is kept and each midpoint is drawn from the Brownian bridge.
    pub fn refine(&self) -> DrivingPaths {
        let grid = self.grid.refine();
        let half = 0.5 * self.grid.h().sqrt();
        let tag = 1 + self.level as u64;
        let bm = self
            .bm
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let z = self.rng.normals(tag, j as u64, self.grid.steps);
                let mut out = Vec::with_capacity(grid.steps + 1);
                for k in 0..self.grid.steps {
                    out.push(b[k]);
                    out.push(0.5 * (b[k] + b[k + 1]) + half * z[k]);
                }
                out.push(b[self.grid.steps]);
                out
            })
            .collect();
        DrivingPaths::assemble(self.spec.clone(), grid, self.rng, self.level + 1, bm)
    }

    pub fn db(&self, j: usize, m: usize) -> f64 {
        self.bm[j][m + 1] - self.bm[j][m]
    }

    pub fn da(&self, i: usize, m: usize) -> f64 {
        self.fv[i][m + 1] - self.fv[i][m]
    }

    pub fn dm(&self, i: usize, m: usize) -> f64 {
        self.mart[i][m + 1] - self.mart[i][m]
    }

    /// `Δ[M^i, B^j]` over step `m`.
    pub fn bracket(&self, i: usize, j: usize, m: usize, mode: BracketMode) -> f64 {
        match mode {
            BracketMode::Realized => self.dm(i, m) * self.db(j, m),
            BracketMode::ClosedForm => match &self.spec.drivers[i].mart {
                MartSpec::Brownian { component } if *component == j => self.grid.h(),
                MartSpec::Integral { component, sigma } if *component == j => {
                    sigma.value(self.grid.t(m)) * self.grid.h()
                }
                _ => 0.0,
            },
        }
    }
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StochasticError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(StochasticError::GridMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `∫ f dX` with left-point evaluation; the result is the running integral.
pub fn ito_integral(f: &[f64], x: &[f64]) -> Result<Vec<f64>, StochasticError> {
    check(f, x)?;
    let n = x.len() - 1;
    // adapted: only f[0..n] is ever read
    let f = &f[..n];
    Ok(cumulative((0..n).map(|k| f[k] * (x[k + 1] - x[k])), n))
}

/// `∫ f ∘ dX` with trapezoidal evaluation.
pub fn stratonovich_integral(f: &[f64], x: &[f64]) -> Result<Vec<f64>, StochasticError> {
    check(f, x)?;
    let n = x.len() - 1;
    Ok(cumulative((0..n).map(|k| 0.5 * (f[k] + f[k + 1]) * (x[k + 1] - x[k])), n))
}

/// Realized covariation `Σ ΔX ΔY`.
pub fn covariation(x: &[f64], y: &[f64]) -> Result<Vec<f64>, StochasticError> {
    check(x, y)?;
    let n = x.len() - 1;
    Ok(cumulative((0..n).map(|k| (x[k + 1] - x[k]) * (y[k + 1] - y[k])), n))
}

/// Riemann-Stieltjes sum `∫ f dA` against a finite-variation path.
pub fn fv_integral(f: &[f64], a: &[f64]) -> Result<Vec<f64>, StochasticError> {
    ito_integral(f, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec() -> Arc<DriverSpec> {
        Arc::new(DriverSpec {
            brownian: 2,
            drivers: vec![
                DriverDecl { fv: FvSpec::Linear { rate: 1.0 }, mart: MartSpec::Brownian { component: 1 } },
                DriverDecl {
                    fv: FvSpec::Zero,
                    mart: MartSpec::Integral { component: 0, sigma: TimeProfile::Affine { a: 1.0, b: 1.0 } },
                },
            ],
        })
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let r = RngStream::new(7, 3);
        assert_eq!(r.normals(0, 1, 5), r.normals(0, 1, 5));
        assert_ne!(r.normals(0, 1, 5), r.normals(0, 2, 5));
        assert_ne!(r.normals(0, 1, 5), RngStream::new(7, 4).normals(0, 1, 5));
    }

    #[test]
    fn refinement_keeps_coarse_values() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let p = DrivingPaths::sample(spec(), grid, RngStream::new(1, 0)).unwrap();
        let q = p.refine().refine();
        assert_eq!(q.grid.steps, 32);
        for j in 0..2 {
            for k in 0..=8 {
                assert_eq!(p.bm[j][k], q.bm[j][4 * k]);
            }
        }
        // designated-component martingales restrict bitwise
        for k in 0..=8 {
            assert_eq!(p.mart[0][k], q.mart[0][4 * k]);
            assert_eq!(p.fv[0][k], q.fv[0][4 * k]);
        }
    }

    #[test]
    fn bridge_midpoints_have_the_right_variance() {
        let grid = TimeGrid::new(1.0, 1).unwrap();
        let spec = Arc::new(DriverSpec { brownian: 1, drivers: vec![] });
        let n = 20000;
        let mut s2 = 0.0;
        for path in 0..n {
            let p = DrivingPaths::sample(spec.clone(), grid, RngStream::new(11, path)).unwrap().refine();
            let dev = p.bm[0][1] - 0.5 * p.bm[0][2];
            s2 += dev * dev;
        }
        // conditional variance of B(1/2) given B(1) is 1/4
        assert_relative_eq!(s2 / n as f64, 0.25, max_relative = 0.05);
    }

    #[test]
    fn stratonovich_minus_ito_is_half_covariation() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let p = DrivingPaths::sample(spec(), grid, RngStream::new(5, 0)).unwrap();
        let f: Vec<f64> = p.bm[0].iter().map(|b| b.sin()).collect();
        let ito = ito_integral(&f, &p.bm[0]).unwrap();
        let strat = stratonovich_integral(&f, &p.bm[0]).unwrap();
        let cov = covariation(&f, &p.bm[0]).unwrap();
        for k in 0..=64 {
            assert!((strat[k] - ito[k] - 0.5 * cov[k]).abs() < 1e-13);
        }
        assert!(ito_integral(&f[..10], &p.bm[0]).is_err());
    }

    #[test]
    fn closed_form_bracket_uses_sigma() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = DrivingPaths::sample(spec(), grid, RngStream::new(5, 0)).unwrap();
        assert_eq!(p.bracket(0, 1, 2, BracketMode::ClosedForm), 0.25);
        assert_eq!(p.bracket(0, 0, 2, BracketMode::ClosedForm), 0.0);
        assert_relative_eq!(p.bracket(1, 0, 2, BracketMode::ClosedForm), 1.5 * 0.25);
    }

    #[test]
    fn invalid_component_is_rejected() {
        let bad = Arc::new(DriverSpec {
            brownian: 1,
            drivers: vec![DriverDecl { fv: FvSpec::Zero, mart: MartSpec::Brownian { component: 3 } }],
        });
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert!(DrivingPaths::sample(bad, grid, RngStream::new(0, 0)).is_err());
    }
}
