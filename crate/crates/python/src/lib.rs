//! Python bindings. Sites are 0-based; configurations are lists of counts.
//!
//! Functionals and fields are built from registry specs, given either as a
//! JSON string or as a dict (serialized with the `json` module).

use calculus::exact::{exact_expectation, ou_pseudo_inverse};
use calculus::monte_carlo::{mc_expectation, sample_configurations, SamplerConfig};
use calculus::operators::{self, BracketKind};
use calculus::verifier::{self, BackendSelection, RunOptions, SuiteConfig};
use calculus::{Backend, Configuration, FieldSpec, FunctionalSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(s.to_str()?.to_owned());
    }
    let json = obj.py().import("json")?;
    json.call_method1("dumps", (obj,))?.extract()
}

fn json_object<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "GroundSpace", module = "poisson_calculus", frozen)]
struct PyGroundSpace {
    inner: calculus::GroundSpace,
}

impl PyGroundSpace {
    fn configuration(&self, counts: Vec<u32>) -> PyResult<Configuration> {
        self.inner.configuration(counts).map_err(value_error)
    }

    fn site(&self, z: usize) -> PyResult<usize> {
        self.inner.check_site(z).map_err(value_error)?;
        Ok(z)
    }
}

#[pymethods]
impl PyGroundSpace {
    #[new]
    fn new(weights: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: calculus::GroundSpace::new(weights).map_err(value_error)?,
        })
    }

    /// The space with weights (0.5, 1.0, 1.5).
    #[staticmethod]
    fn canonical() -> Self {
        Self {
            inner: calculus::GroundSpace::canonical(),
        }
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn site_count(&self) -> usize {
        self.inner.site_count()
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn measure_of(&self, sites: Vec<usize>) -> PyResult<f64> {
        self.inner
            .measure_of(&calculus::SiteSet::new(sites))
            .map_err(value_error)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("spaces serialize")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_error)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("GroundSpace({:?})", self.inner.weights())
    }
}

#[pyclass(name = "Functional", module = "poisson_calculus", frozen)]
struct PyFunctional {
    inner: calculus::Functional,
    space: calculus::GroundSpace,
}

#[pymethods]
impl PyFunctional {
    /// `Functional(space, {"name": "poly_count", "B": [1, 2], "degree": 2})`
    #[new]
    fn new(space: &PyGroundSpace, spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let spec: FunctionalSpec = serde_json::from_str(&json_text(spec)?).map_err(value_error)?;
        Ok(Self {
            inner: spec.build(&space.inner).map_err(value_error)?,
            space: space.inner.clone(),
        })
    }

    fn __call__(&self, counts: Vec<u32>) -> PyResult<f64> {
        let eta = self.space.configuration(counts).map_err(value_error)?;
        Ok(self.inner.eval(&eta))
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    /// Certified sup |F|, or None for unbounded functionals.
    #[getter]
    fn bound(&self) -> Option<f64> {
        self.inner.bound()
    }

    fn describe<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_object(py, &self.inner.describe().to_string())
    }

    fn __repr__(&self) -> String {
        format!("Functional({})", self.inner.describe())
    }
}

#[pyclass(name = "Field", module = "poisson_calculus", frozen)]
struct PyField {
    inner: calculus::RandomField,
    space: calculus::GroundSpace,
}

#[pymethods]
impl PyField {
    /// `Field(space, {"name": "site_count", "values": [1, 2, 3]})`
    #[new]
    fn new(space: &PyGroundSpace, spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let spec: FieldSpec = serde_json::from_str(&json_text(spec)?).map_err(value_error)?;
        Ok(Self {
            inner: spec.build(&space.inner).map_err(value_error)?,
            space: space.inner.clone(),
        })
    }

    /// The derivative field `DF`.
    #[staticmethod]
    fn derivative(f: &PyFunctional) -> Self {
        Self {
            inner: calculus::derivative_field(&f.inner),
            space: f.space.clone(),
        }
    }

    fn __call__(&self, counts: Vec<u32>, site: usize) -> PyResult<f64> {
        let eta = self.space.configuration(counts).map_err(value_error)?;
        self.space.check_site(site).map_err(value_error)?;
        Ok(self.inner.eval(&eta, site))
    }

    fn __repr__(&self) -> String {
        format!("Field({})", self.inner.describe())
    }
}

fn same_space(a: &calculus::GroundSpace, b: &calculus::GroundSpace) -> PyResult<()> {
    if a == b {
        Ok(())
    } else {
        Err(PyValueError::new_err(
            "arguments are bound to different spaces",
        ))
    }
}

#[pyfunction]
fn add_diff(f: &PyFunctional, counts: Vec<u32>, z: usize) -> PyResult<f64> {
    let space = PyGroundSpace {
        inner: f.space.clone(),
    };
    let eta = space.configuration(counts)?;
    Ok(calculus::add_diff(&f.inner, &eta, space.site(z)?))
}

#[pyfunction]
fn drop_diff(f: &PyFunctional, counts: Vec<u32>, z: usize) -> PyResult<f64> {
    let space = PyGroundSpace {
        inner: f.space.clone(),
    };
    let eta = space.configuration(counts)?;
    Ok(calculus::drop_diff(&f.inner, &eta, space.site(z)?))
}

#[pyfunction]
fn divergence(space: &PyGroundSpace, u: &PyField, counts: Vec<u32>) -> PyResult<f64> {
    same_space(&space.inner, &u.space)?;
    Ok(operators::divergence(
        &space.inner,
        &u.inner,
        &space.configuration(counts)?,
    ))
}

#[pyfunction]
fn ou_generator(space: &PyGroundSpace, f: &PyFunctional, counts: Vec<u32>) -> PyResult<f64> {
    same_space(&space.inner, &f.space)?;
    Ok(operators::ou_generator(
        &space.inner,
        &f.inner,
        &space.configuration(counts)?,
    ))
}

#[pyfunction]
fn gamma(
    space: &PyGroundSpace,
    f: &PyFunctional,
    g: &PyFunctional,
    counts: Vec<u32>,
) -> PyResult<f64> {
    same_space(&space.inner, &f.space)?;
    same_space(&space.inner, &g.space)?;
    Ok(operators::gamma(
        &space.inner,
        &f.inner,
        &g.inner,
        &space.configuration(counts)?,
    ))
}

/// `kind` is one of "gamma", "plus", "minus".
#[pyfunction]
fn bracket(
    space: &PyGroundSpace,
    u: &PyField,
    v: &PyField,
    kind: &str,
    counts: Vec<u32>,
) -> PyResult<f64> {
    let kind = match kind {
        "gamma" => BracketKind::Gamma,
        "plus" => BracketKind::Plus,
        "minus" => BracketKind::Minus,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown bracket kind `{other}`"
            )))
        }
    };
    same_space(&space.inner, &u.space)?;
    same_space(&space.inner, &v.space)?;
    Ok(operators::bracket(
        &space.inner,
        &u.inner,
        &v.inner,
        kind,
        &space.configuration(counts)?,
    ))
}

#[pyclass(name = "ExactEngine", module = "poisson_calculus", frozen)]
struct PyExactEngine {
    inner: calculus::ExactEngine,
}

#[pymethods]
impl PyExactEngine {
    #[new]
    #[pyo3(signature = (space, tol = 1e-12, budget = 2_000_000))]
    fn new(py: Python<'_>, space: &PyGroundSpace, tol: f64, budget: u64) -> PyResult<Self> {
        let space = space.inner.clone();
        let inner = py
            .detach(|| calculus::ExactEngine::new(&space, tol, budget))
            .map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn state_count(&self) -> usize {
        self.inner.table().len()
    }

    #[getter]
    fn caps(&self) -> Vec<u32> {
        self.inner.table().plan().caps.clone()
    }

    #[getter]
    fn tail_bound(&self) -> f64 {
        self.inner.table().tail_bound()
    }

    #[getter]
    fn boundary_leak(&self) -> f64 {
        self.inner.table().boundary_leak()
    }

    /// `{"value", "error_bound", "certified"}` for `E F`.
    fn expectation<'py>(&self, py: Python<'py>, f: &PyFunctional) -> PyResult<Bound<'py, PyDict>> {
        same_space(self.inner.space(), &f.space)?;
        let v = py.detach(|| exact_expectation(&f.inner, self.inner.table()));
        let d = PyDict::new(py);
        d.set_item("value", v.value)?;
        d.set_item("error_bound", v.error_bound)?;
        d.set_item("certified", v.certified)?;
        Ok(d)
    }

    /// `{"value", "error_bound"}` for the Dirichlet energy of `F` and `G`.
    fn dirichlet_energy<'py>(
        &self,
        py: Python<'py>,
        f: &PyFunctional,
        g: &PyFunctional,
    ) -> PyResult<Bound<'py, PyDict>> {
        same_space(self.inner.space(), &f.space)?;
        same_space(self.inner.space(), &g.space)?;
        let v = py
            .detach(|| operators::dirichlet_energy(&f.inner, &g.inner, &self.inner))
            .map_err(value_error)?;
        let d = PyDict::new(py);
        d.set_item("value", v.value)?;
        d.set_item("error_bound", v.error_bound())?;
        Ok(d)
    }

    /// Values of `L⁻¹(F − E F)` on the enumerated states, in table order.
    #[pyo3(signature = (f, tol = 1e-10))]
    fn ou_pseudo_inverse(&self, py: Python<'_>, f: &PyFunctional, tol: f64) -> PyResult<Vec<f64>> {
        same_space(self.inner.space(), &f.space)?;
        py.detach(|| ou_pseudo_inverse(&f.inner, self.inner.table(), tol))
            .map(|p| p.values)
            .map_err(value_error)
    }

    /// Enumerated states, in the order used by `ou_pseudo_inverse`.
    fn states(&self) -> Vec<Vec<u32>> {
        self.inner
            .table()
            .states()
            .iter()
            .map(|s| s.counts().to_vec())
            .collect()
    }
}

/// `{"mean", "std_error", "n"}` for `E F` over `samples` seeded draws.
#[pyfunction]
#[pyo3(signature = (space, f, seed, samples, workers = 1))]
fn mc_expectation_py<'py>(
    py: Python<'py>,
    space: &PyGroundSpace,
    f: &PyFunctional,
    seed: u64,
    samples: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    same_space(&space.inner, &f.space)?;
    let cfg = SamplerConfig::new(seed, samples, workers);
    let e = py
        .detach(|| mc_expectation(&f.inner, &space.inner, &cfg))
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("mean", e.mean)?;
    d.set_item("std_error", e.std_error)?;
    d.set_item("n", e.n)?;
    Ok(d)
}

#[pyfunction]
fn sample(space: &PyGroundSpace, seed: u64, count: u64) -> Vec<Vec<u32>> {
    sample_configurations(&space.inner, seed, count)
        .into_iter()
        .map(|c| c.counts().to_vec())
        .collect()
}

/// The bundled suite configuration as a JSON string.
#[pyfunction]
fn default_config() -> &'static str {
    verifier::DEFAULT_CONFIG
}

/// Runs the identity suite and returns the list of report dicts.
///
/// `config` is a JSON string, a dict, or None for the bundled config;
/// `backend` is "exact", "mc" or "both".
#[pyfunction]
#[pyo3(signature = (config = None, backend = "exact", timings = false))]
fn run_suite<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyAny>>,
    backend: &str,
    timings: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let text = match config {
        Some(c) => json_text(c)?,
        None => verifier::DEFAULT_CONFIG.to_string(),
    };
    let cfg = SuiteConfig::from_json(&text).map_err(value_error)?;
    let backends: BackendSelection = backend.parse().map_err(value_error)?;
    let reports = py
        .detach(|| verifier::run_suite(&cfg, &RunOptions { backends, timings }))
        .map_err(value_error)?;
    json_object(py, &verifier::to_json(&reports))
}

#[pymodule]
fn poisson_calculus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGroundSpace>()?;
    m.add_class::<PyFunctional>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyExactEngine>()?;
    m.add_function(wrap_pyfunction!(add_diff, m)?)?;
    m.add_function(wrap_pyfunction!(drop_diff, m)?)?;
    m.add_function(wrap_pyfunction!(divergence, m)?)?;
    m.add_function(wrap_pyfunction!(ou_generator, m)?)?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(bracket, m)?)?;
    m.add("mc_expectation", wrap_pyfunction!(mc_expectation_py, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    Ok(())
}
