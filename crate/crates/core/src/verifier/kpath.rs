use super::{GTerm, Scenario};
use crate::geometry::{ChartId, Valence};
use crate::stochastics::{DrivingPaths, TimeGrid};
use crate::tensor::{FieldRef, TensorField, TensorJet};
use std::sync::Arc;

/// Grid weights `W_i[k]` of `K(t_k) = K₀ + Σ_i W_i[k] H_i`.
#[derive(Clone, Debug)]
pub struct KPath {
    pub grid: TimeGrid,
    pub weights: Vec<Vec<f64>>,
}

/// Build `K(t_k) = K₀ + Σ_i ∫ G_i dA^i + Σ_i ∫ G_i dM^i` on the grid.
///
/// For `G_i = θ_i(t) H_i(x)` the integrals reduce to scalar weights. The
/// martingale integral is Itô (left point) unless `stratonovich` is set, in
/// which case it uses the trapezoid rule; the finite-variation integral is a
/// left-point Riemann-Stieltjes sum either way.
pub fn synthesize_k_path(g: &[GTerm], drivers: &DrivingPaths, stratonovich: bool) -> KPath {
    let grid = drivers.grid;
    let weights = g
        .iter()
        .map(|gt| {
            let theta: Vec<f64> = (0..=grid.steps).map(|k| gt.profile.value(grid.t(k))).collect();
            let mut w = Vec::with_capacity(grid.steps + 1);
            let mut acc = 0.0;
            w.push(0.0);
            for m in 0..grid.steps {
                let dm = drivers.dm(gt.driver, m);
                let mart = if stratonovich { 0.5 * (theta[m] + theta[m + 1]) * dm } else { theta[m] * dm };
                acc += theta[m] * drivers.da(gt.driver, m) + mart;
                w.push(acc);
            }
            w
        })
        .collect();
    KPath { grid, weights }
}

/// The synthesized `K` as a field; only defined at grid times.
#[derive(Clone, Debug)]
pub struct KPathField {
    pub k0: FieldRef,
    pub h: Vec<FieldRef>,
    pub path: Arc<KPath>,
}

impl KPathField {
    pub fn new(scenario: &Scenario, path: KPath) -> KPathField {
        KPathField {
            k0: scenario.k0.clone(),
            h: scenario.g.iter().map(|g| g.field.clone()).collect(),
            path: Arc::new(path),
        }
    }
}

impl TensorField for KPathField {
    fn valence(&self) -> Valence {
        self.k0.valence()
    }
    fn dim(&self) -> usize {
        self.k0.dim()
    }
    fn smoothness(&self) -> usize {
        self.h.iter().map(|f| f.smoothness()).fold(self.k0.smoothness(), usize::min)
    }
    fn time_c1(&self) -> bool {
        false
    }
    fn name(&self) -> String {
        format!("K[{}]", self.k0.name())
    }
    fn compute_jet(&self, t: f64, x: &[f64], chart: ChartId, order: usize) -> TensorJet {
        let k = self.path.grid.index_of(t);
        let mut j = self.k0.compute_jet(t, x, chart, order);
        for (hi, w) in self.h.iter().zip(&self.path.weights) {
            j.axpy(w[k], &hi.compute_jet(t, x, chart, order));
        }
        j
    }
}
