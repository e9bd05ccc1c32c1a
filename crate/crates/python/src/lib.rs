//! Python bindings: load systems, evaluate the Lagrangian structures, run
//! suites, reduce, and check pair files.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rclab::dynamics::{integrate, ChartSystem, Monitors, VectorField};
use rclab::geometry::{CotangentPoint, TangentPoint};
use rclab::reduction::ReduceOptions;
use rclab::symmetry::{coadjoint_plus_form, SymmetrySpec};
use rclab::sysdef::{
    exit_code, load, load_pair, reduce_to_file, run_equivalence, run_suite, EquivalenceKind, Loaded, LoadedReduced,
    ReductionKind, Suite, SuiteOptions,
};

fn to_py(e: rclab::Error) -> PyErr {
    match exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A full or reduced system loaded from a JSON file or a built-in name.
#[pyclass(name = "System", frozen)]
struct PySystem {
    inner: Loaded,
}

impl PySystem {
    fn chart(&self) -> &dyn ChartSystem {
        match &self.inner {
            Loaded::Full(s) => &s.rcl.sys,
            Loaded::Reduced(r) => &r.red,
        }
    }

    fn point(&self, state: &[f64]) -> PyResult<TangentPoint> {
        let n = self.chart().dof();
        if state.len() != 2 * n {
            return Err(PyValueError::new_err(format!("state has {} values, expected {}", state.len(), 2 * n)));
        }
        Ok(TangentPoint::from_state(state))
    }

    fn field_at(&self, v: &TangentPoint) -> rclab::Result<Vec<f64>> {
        let xi = match &self.inner {
            Loaded::Full(s) => s.rcl.field().eval(v)?,
            Loaded::Reduced(r) => r.red.field().eval(v)?,
        };
        Ok(xi.components().iter().copied().collect())
    }
}

#[pymethods]
impl PySystem {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load(path).map(|inner| PySystem { inner }).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    /// Chart coordinates (the shape coordinates for a reduced system).
    #[getter]
    fn coords(&self) -> Vec<String> {
        self.chart().space().names().to_vec()
    }

    #[getter]
    fn is_reduced(&self) -> bool {
        matches!(self.inner, Loaded::Reduced(_))
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        match &self.inner {
            Loaded::Full(_) => Vec::new(),
            Loaded::Reduced(r) => r.red.warnings().to_vec(),
        }
    }

    fn energy(&self, state: Vec<f64>) -> PyResult<f64> {
        self.chart().energy(&self.point(&state)?).map_err(to_py)
    }

    /// `(q, p)` concatenated.
    fn legendre(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.chart().legendre(&self.point(&state)?).map_err(to_py)?.state())
    }

    fn inverse_legendre(&self, q: Vec<f64>, p: Vec<f64>) -> PyResult<Vec<f64>> {
        let alpha = CotangentPoint::new(q, p);
        Ok(self.chart().inverse_legendre(&alpha, None).map_err(to_py)?.state())
    }

    /// Chart matrix of the two-form, row by row.
    fn two_form(&self, state: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.chart().two_form(&self.point(&state)?).map_err(to_py)?.matrix;
        Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// The (controlled or reduced) field as `(dq, dq_dot)` components.
    fn field(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        self.field_at(&self.point(&state)?).map_err(to_py)
    }

    /// Parent state on the level set over a reduced state.
    fn lift(&self, state: Vec<f64>) -> PyResult<Vec<f64>> {
        match &self.inner {
            Loaded::Reduced(r) => Ok(r.red.lift(&self.point(&state)?).map_err(to_py)?.state()),
            Loaded::Full(_) => Err(PyValueError::new_err("lift needs a reduced system")),
        }
    }

    /// RK4 trajectory as a dict of `t`, `states` and `energy`.
    #[pyo3(signature = (state=None, t1=10.0, dt=1e-3))]
    fn simulate<'py>(&self, py: Python<'py>, state: Option<Vec<f64>>, t1: f64, dt: f64) -> PyResult<Bound<'py, PyDict>> {
        let chart = self.chart();
        let v0 = match state {
            Some(s) => self.point(&s)?,
            None => chart.space().center(),
        };
        let energy = |v: &TangentPoint| chart.energy(v);
        let monitors = Monitors {
            energy: Some(&energy),
            momentum: None,
            space: Some(chart.space()),
        };
        let result = match &self.inner {
            Loaded::Full(s) => integrate(&s.rcl.field(), &v0, t1, dt, monitors),
            Loaded::Reduced(r) => integrate(&r.red.field(), &v0, t1, dt, monitors),
        };
        let traj = result.map_err(|f| PyRuntimeError::new_err(f.to_string()))?;
        let out = PyDict::new(py);
        out.set_item("t", traj.times)?;
        out.set_item("states", traj.states.iter().map(TangentPoint::state).collect::<Vec<_>>())?;
        out.set_item("energy", traj.energy)?;
        Ok(out)
    }

    /// Run a suite and return the report as a dict.
    #[pyo3(signature = (suite="all", samples=200, seed=0, tol=None, mu=None))]
    fn check(
        &self,
        py: Python<'_>,
        suite: &str,
        samples: usize,
        seed: u64,
        tol: Option<f64>,
        mu: Option<Vec<f64>>,
    ) -> PyResult<Py<PyAny>> {
        let suite = Suite::parse(suite).map_err(to_py)?;
        let opts = SuiteOptions { samples, seed, tol, mu };
        let report = run_suite(&self.inner, suite, &opts).map_err(to_py)?;
        json_to_py(py, &report.to_json())
    }

    /// Point (or orbit) reduction at `mu`, defaulting to the file's value.
    #[pyo3(signature = (mu=None, orbit=false))]
    fn reduce(&self, mu: Option<Vec<f64>>, orbit: bool) -> PyResult<PySystem> {
        let Loaded::Full(sys) = &self.inner else {
            return Err(PyValueError::new_err("system is already reduced"));
        };
        let mu = mu
            .or_else(|| sys.mu.clone())
            .ok_or_else(|| PyValueError::new_err("no momentum value given"))?;
        let kind = if orbit { ReductionKind::Orbit } else { ReductionKind::Point };
        let (file, red) = reduce_to_file(sys, &mu, kind, ReduceOptions::default()).map_err(to_py)?;
        Ok(PySystem {
            inner: Loaded::Reduced(Box::new(LoadedReduced {
                def: file.reduced,
                parent: sys.clone(),
                red,
            })),
        })
    }

    fn __repr__(&self) -> String {
        let kind = if self.is_reduced() { "reduced" } else { "full" };
        format!("System({:?}, {kind}, coords={:?})", self.name(), self.coords())
    }
}

/// Check a pair file; `kind` is rcl, rpcl, rocl or thm43/44/53/54.
#[pyfunction]
#[pyo3(signature = (pair, kind="rcl", samples=200, seed=0, tol=None))]
fn equivalence(py: Python<'_>, pair: &str, kind: &str, samples: usize, seed: u64, tol: Option<f64>) -> PyResult<Py<PyAny>> {
    let k = EquivalenceKind::parse(kind).map_err(to_py)?;
    let opts = SuiteOptions {
        samples,
        seed,
        tol,
        mu: None,
    };
    let p = load_pair(pair).map_err(to_py)?;
    let report = run_equivalence(&p, k, &opts, &format!("equivalence --kind {kind}"), pair).map_err(to_py)?;
    json_to_py(py, &report.to_json())
}

/// `<nu, [xi, eta]>` for structure constants `c[k][i][j]`.
#[pyfunction]
fn plus_form(c: Vec<Vec<Vec<f64>>>, nu: Vec<f64>, xi: Vec<f64>, eta: Vec<f64>) -> PyResult<f64> {
    let d = c.len();
    if [nu.len(), xi.len(), eta.len()].iter().any(|&n| n != d) {
        return Err(PyValueError::new_err("vector lengths must match the algebra dimension"));
    }
    let spec = SymmetrySpec::algebra(d, c).map_err(to_py)?;
    Ok(coadjoint_plus_form(&spec, &nu, &xi, &eta))
}

#[pymodule]
fn rclab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(plus_form, m)?)?;
    m.add("BUILTIN_SYSTEMS", rclab::sysdef::BUILTIN_SYSTEMS.to_vec())?;
    m.add("BUILTIN_PAIRS", rclab::sysdef::BUILTIN_PAIRS.to_vec())?;
    Ok(())
}
