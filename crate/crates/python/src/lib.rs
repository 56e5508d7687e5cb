//! Python bindings for `kiw-core`.

use kiw_core::geometry::{self, Manifold, TensorValue, Valence};
use kiw_core::registry;
use kiw_core::run::{catalog, execute, RunConfig};
use kiw_core::tensor::{build_field, lie_derivative, FieldDecl, FieldRef};
use kiw_core::verifier::{convergence_study, ResidualReport, Scenario as CoreScenario, StudyConfig};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn manifold(name: &str) -> PyResult<Manifold> {
    match name {
        "euclidean" => Ok(Manifold::Euclidean),
        "torus" => Ok(Manifold::Torus),
        "sphere" => Ok(Manifold::Sphere),
        _ => Err(PyValueError::new_err(format!("unknown manifold `{name}`"))),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// A tensor field from the built-in library.
#[pyclass(frozen)]
struct Field {
    inner: FieldRef,
}

#[pymethods]
impl Field {
    #[new]
    #[pyo3(signature = (name, params, manifold_name = "euclidean", dim = 2, valence = None, smoothness = None))]
    fn new(
        name: &str,
        params: Vec<f64>,
        manifold_name: &str,
        dim: usize,
        valence: Option<(usize, usize)>,
        smoothness: Option<usize>,
    ) -> PyResult<Field> {
        let mut decl = FieldDecl::new(name, &params);
        if let Some((r, s)) = valence {
            decl = decl.with_valence(r, s);
        }
        if let Some(k) = smoothness {
            decl = decl.with_smoothness(k);
        }
        let m = manifold(manifold_name)?;
        let n = if m == Manifold::Sphere { 2 } else { dim };
        Ok(Field { inner: build_field(&decl, m, n).map_err(err)? })
    }

    #[getter]
    fn valence(&self) -> (usize, usize) {
        let v = self.inner.valence();
        (v.contra, v.co)
    }

    #[getter]
    fn smoothness(&self) -> usize {
        self.inner.smoothness()
    }

    /// Components at `x` (row-major, contravariant slots first).
    #[pyo3(signature = (x, t = 0.0, chart = 0))]
    fn eval(&self, x: Vec<f64>, t: f64, chart: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.eval(t, &x, chart).map_err(err)?.data)
    }

    /// `L_X K` for a vector field `X`.
    fn lie_derivative(&self, x: &Field) -> PyResult<Field> {
        Ok(Field { inner: lie_derivative(&self.inner, &x.inner, 0).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Field({}, valence={})", self.inner.name(), self.inner.valence())
    }
}

/// `F^*T` of an `(r,s)` tensor given `DF` and `(DF)^-1`.
#[pyfunction]
fn pullback(data: Vec<f64>, valence: (usize, usize), jac: Vec<Vec<f64>>, inv_jac: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let j = matrix(&jac)?;
    let v = TensorValue::new(Valence::new(valence.0, valence.1), j.nrows(), data).map_err(err)?;
    Ok(geometry::pullback(&v, &j, &matrix(&inv_jac)?).data)
}

/// `F_*T` of an `(r,s)` tensor given `DF` and `(DF)^-1`.
#[pyfunction]
fn pushforward(
    data: Vec<f64>,
    valence: (usize, usize),
    jac: Vec<Vec<f64>>,
    inv_jac: Vec<Vec<f64>>,
) -> PyResult<Vec<f64>> {
    let j = matrix(&jac)?;
    let v = TensorValue::new(Valence::new(valence.0, valence.1), j.nrows(), data).map_err(err)?;
    Ok(geometry::pushforward(&v, &j, &matrix(&inv_jac)?).data)
}

/// A validated verification scenario.
#[pyclass(frozen)]
struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// Built-in scenario by name.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Scenario> {
        let decl = registry::find(name).ok_or_else(|| PyValueError::new_err(format!("unknown scenario `{name}`")))?;
        Ok(Scenario { inner: CoreScenario::from_decl(&decl).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn theorem(&self) -> &'static str {
        self.inner.theorem.key()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Run the convergence study and return the report as a dict.
    #[pyo3(signature = (seed = 0, paths = 200, levels = 4, workers = 1))]
    fn study<'py>(
        &self,
        py: Python<'py>,
        seed: u64,
        paths: usize,
        levels: usize,
        workers: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = StudyConfig { seed, paths, levels, workers };
        let report = py.detach(|| convergence_study(&self.inner, &cfg)).map_err(err)?;
        report_dict(py, &report)
    }
}

fn report_dict<'py>(py: Python<'py>, r: &ResidualReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("scenario", &r.scenario)?;
    d.set_item("theorem", r.theorem.key())?;
    d.set_item("fitted_order", r.fitted_order)?;
    d.set_item("local_orders", r.local_orders.clone())?;
    d.set_item("stopped_fraction", r.stopped_fraction)?;
    d.set_item("steps", r.levels.iter().map(|l| l.steps).collect::<Vec<_>>())?;
    d.set_item("rms_sup_residual", r.levels.iter().map(|l| l.rms_sup_residual).collect::<Vec<_>>())?;
    d.set_item("jac_consistency_max", r.levels.iter().map(|l| l.jac_consistency_max).collect::<Vec<_>>())?;
    Ok(d)
}

/// Built-in scenarios as `(name, theorem, manifold)` tuples.
#[pyfunction]
fn list_scenarios() -> Vec<(String, String, String)> {
    catalog().into_iter().map(|e| (e.name, e.theorem, e.manifold)).collect()
}

/// Execute a TOML run configuration without touching the disk.
/// Returns `(exit_code, csv, manifest)`.
#[pyfunction]
#[pyo3(signature = (config, workers = 1))]
fn run_config(py: Python<'_>, config: &str, workers: usize) -> PyResult<(i32, String, String)> {
    let cfg = RunConfig::from_toml(config).map_err(err)?;
    match py.detach(|| execute(&cfg, workers)) {
        Ok(out) => Ok((out.exit_code(), out.csv, out.manifest)),
        Err(e) if e.exit_code() == 2 => Err(PyRuntimeError::new_err(e.to_string())),
        Err(e) => Err(err(e)),
    }
}

#[pymodule]
pub fn kiw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Field>()?;
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(pullback, m)?)?;
    m.add_function(wrap_pyfunction!(pushforward, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", kiw_core::run::VERSION)?;
    Ok(())
}
