//! Python bindings: rotations and sphere points, the observer building
//! blocks, scenarios and the verification sweep.
//!
//! Vectors cross the boundary as 3-sequences of floats and matrices as
//! nested 3×3 lists. Structured results (run summaries, property reports)
//! come back as plain dicts and lists.

use std::path::PathBuf;

use homobs_core::manifold::{self, Mat3, Vec3};
use homobs_core::observer::{self, CostFunction};
use homobs_core::runner::{self, RunError};
use homobs_core::scenario::{self, Scenario};
use homobs_core::sim::{self, Simulation};
use homobs_core::{
    AlgebraElement, GeometryError, InputSignal, IntegratorSpec, Method, OutputPoint,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: RunError) -> PyErr {
    match e {
        RunError::Scenario(e) => value_err(e),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn geometry_err(e: GeometryError) -> PyErr {
    value_err(e)
}

fn mat_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn rows_to_mat(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| rows[i][j])
}

fn point(v: [f64; 3]) -> PyResult<OutputPoint> {
    OutputPoint::new(Vec3::from(v)).map_err(geometry_err)
}

fn cost_fn(k: f64) -> PyResult<CostFunction> {
    CostFunction::new(k).map_err(value_err)
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

/// A rotation in SO(3), acting on the sphere by `act(R, y) = Rᵀy`.
#[pyclass(name = "Rotation", module = "homobs", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyRotation(manifold::GroupElement);

#[pymethods]
impl PyRotation {
    /// Builds a rotation from a 3×3 matrix; raises if it is not in SO(3).
    #[new]
    fn new(matrix: [[f64; 3]; 3]) -> PyResult<Self> {
        manifold::GroupElement::from_matrix(rows_to_mat(matrix))
            .map(Self)
            .map_err(geometry_err)
    }

    #[staticmethod]
    fn identity() -> Self {
        Self(manifold::GroupElement::identity())
    }

    /// `exp(hat(w))`.
    #[staticmethod]
    fn from_rotvec(w: [f64; 3]) -> Self {
        Self(manifold::group_exp(&AlgebraElement(Vec3::from(w))))
    }

    /// The rotation whose action sends `y0` to `y`.
    #[staticmethod]
    fn section(y: [f64; 3], y0: [f64; 3]) -> PyResult<Self> {
        manifold::section(&point(y)?, &point(y0)?)
            .map(Self)
            .map_err(geometry_err)
    }

    fn matrix(&self) -> [[f64; 3]; 3] {
        mat_to_rows(self.0.matrix())
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    fn angle(&self) -> f64 {
        self.0.angle()
    }

    fn act(&self, y: [f64; 3]) -> PyResult<[f64; 3]> {
        Ok(manifold::act(&self.0, &point(y)?).dir().into())
    }

    fn __mul__(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0)
    }

    fn __repr__(&self) -> String {
        format!("Rotation({:?})", self.matrix())
    }
}

/// Parsed and validated scenario.
#[pyclass(name = "Scenario", module = "homobs", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario(Scenario);

#[pymethods]
impl PyScenario {
    /// Parses scenario JSON; raises `ValueError` naming the offending field.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let s = scenario::parse_scenario(text).map_err(value_err)?;
        s.validate().map_err(value_err)?;
        Ok(Self(s))
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        scenario::preset(name).map(Self).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn mode(&self) -> String {
        self.0.mode.to_string()
    }

    /// Runs the scenario, writing artifacts into `out_dir`; returns the
    /// summary as a dict.
    #[pyo3(signature = (out_dir, seed=None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        out_dir: PathBuf,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let outcome = runner::run(&self.0, &out_dir, seed).map_err(run_err)?;
        json_to_py(py, &outcome.summary)
    }
}

#[pyfunction]
fn hat(w: [f64; 3]) -> [[f64; 3]; 3] {
    mat_to_rows(&manifold::hat(&Vec3::from(w)))
}

#[pyfunction]
fn vee(m: [[f64; 3]; 3]) -> PyResult<[f64; 3]> {
    manifold::vee(&rows_to_mat(m))
        .map(Into::into)
        .map_err(geometry_err)
}

/// Angle between two unit vectors.
#[pyfunction]
fn error_angle(yhat: [f64; 3], y: [f64; 3]) -> PyResult<f64> {
    Ok(observer::error_angle(&point(yhat)?, &point(y)?))
}

/// `2·atan(tan(θ0/2)·e^{−kt})`.
#[pyfunction]
fn error_angle_closed_form(theta0: f64, k: f64, t: f64) -> PyResult<f64> {
    observer::error_angle_closed_form(theta0, k, t).map_err(value_err)
}

/// `k(1 − ⟨ŷ, y⟩)`.
#[pyfunction]
#[pyo3(signature = (yhat, y, k=1.0))]
fn cost(yhat: [f64; 3], y: [f64; 3], k: f64) -> PyResult<f64> {
    Ok(observer::cost(&cost_fn(k)?, &point(yhat)?, &point(y)?))
}

/// The correction term `k(I − ŷŷᵀ)y`.
#[pyfunction]
#[pyo3(signature = (yhat, y, k=1.0))]
fn innovation(yhat: [f64; 3], y: [f64; 3], k: f64) -> PyResult<[f64; 3]> {
    Ok(
        observer::innovation_s2(&cost_fn(k)?, &point(yhat)?, &point(y)?)
            .vec()
            .into(),
    )
}

/// Simulates the projected observer with a constant gyro input and returns
/// `{"t": [...], "theta": [...], "yhat": [[...], ...]}`.
#[pyfunction]
#[pyo3(signature = (x0, yhat0, k=1.0, omega=[0.0, 0.0, 0.0], t_end=10.0, step=1e-3))]
fn simulate_projected<'py>(
    py: Python<'py>,
    x0: PyRotation,
    yhat0: [f64; 3],
    k: f64,
    omega: [f64; 3],
    t_end: f64,
    step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = Simulation::new(
        InputSignal::constant(Vec3::from(omega)),
        IntegratorSpec::new(Method::Rk4Project, step),
        t_end,
    );
    let record = sim::simulate_projected(&spec, &cost_fn(k)?, x0.0, point(yhat0)?)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    out.set_item("t", record.times())?;
    out.set_item("theta", record.angles())?;
    let yhat: Vec<[f64; 3]> = record.samples.iter().map(|s| s.yhat.dir().into()).collect();
    out.set_item("yhat", yhat)?;
    Ok(out)
}

/// Runs the randomized identity checks; returns one dict per property.
#[pyfunction]
#[pyo3(signature = (samples=1000, seed=0))]
fn verify<'py>(py: Python<'py>, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let results = homobs_core::verify_suite(samples, seed);
    let value =
        serde_json::to_value(results).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    scenario::PRESETS.to_vec()
}

#[pymodule]
fn homobs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", runner::CODE_VERSION)?;
    m.add_class::<PyRotation>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(hat, m)?)?;
    m.add_function(wrap_pyfunction!(vee, m)?)?;
    m.add_function(wrap_pyfunction!(error_angle, m)?)?;
    m.add_function(wrap_pyfunction!(error_angle_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(cost, m)?)?;
    m.add_function(wrap_pyfunction!(innovation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_projected, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    Ok(())
}
