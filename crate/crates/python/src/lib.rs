//! Python bindings for the ambiguity-robust CLT toolkit.

use ambiclt_core::acceptance;
use ambiclt_core::closed_form::{IndicatorLimit, Side};
use ambiclt_core::exact::{to_f64, Rational};
use ambiclt_core::hypothesis::{self, Calibration, Decision, Theta};
use ambiclt_core::measures::{self, DiscreteMeasure, DEFAULT_TOL_VAR};
use ambiclt_core::pde::{self, PdeGrid, DEFAULT_BANDWIDTHS, DEFAULT_EPSILONS};
use ambiclt_core::statistics::{self, SwitchRule, Variant};
use ambiclt_core::terminal::TerminalFunction;
use ambiclt_core::worst_case::{self, DpConfig, DriftPolicy, LatticeModel, Sense, Statistic};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: ambiclt_core::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

fn side(name: &str) -> PyResult<Side> {
    match name {
        "upper" => Ok(Side::Upper),
        "lower" => Ok(Side::Lower),
        other => Err(PyValueError::new_err(format!("side must be upper or lower, got `{other}`"))),
    }
}

fn sense(name: &str) -> PyResult<Sense> {
    match name {
        "sup" => Ok(Sense::Sup),
        "inf" => Ok(Sense::Inf),
        other => Err(PyValueError::new_err(format!("sense must be sup or inf, got `{other}`"))),
    }
}

fn variant(name: &str) -> PyResult<Variant> {
    match name {
        "M" | "m" => Ok(Variant::M),
        "tilde" => Ok(Variant::Tilde),
        other => Err(PyValueError::new_err(format!("variant must be M or tilde, got `{other}`"))),
    }
}

fn statistic(theorem: &str, center: f64, alpha: f64, beta: f64) -> PyResult<Statistic> {
    Statistic::from_name(theorem, center, alpha, beta)
        .ok_or_else(|| PyValueError::new_err(format!("unknown theorem `{theorem}`")))
}

fn terminal(a: f64, b: f64, h: Option<f64>) -> PyResult<TerminalFunction> {
    match h {
        Some(h) => TerminalFunction::smoothed_indicator(a, b, h),
        None => TerminalFunction::indicator(a, b),
    }
    .map_err(py_err)
}

/// Mean-ambiguity interval `[mu_lower, mu_upper]` with common volatility `sigma`.
#[pyclass(name = "AmbiguityInterval", frozen, from_py_object)]
#[derive(Clone)]
struct PyInterval(measures::AmbiguityInterval);

#[pymethods]
impl PyInterval {
    #[new]
    #[pyo3(signature = (mu_lower, mu_upper, sigma = 1.0))]
    fn new(mu_lower: f64, mu_upper: f64, sigma: f64) -> PyResult<Self> {
        measures::AmbiguityInterval::new(mu_lower, mu_upper, sigma).map(PyInterval).map_err(py_err)
    }

    #[getter]
    fn mu_lower(&self) -> f64 {
        self.0.mu_lower
    }

    #[getter]
    fn mu_upper(&self) -> f64 {
        self.0.mu_upper
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    #[getter]
    fn center(&self) -> f64 {
        self.0.center()
    }

    /// Limit of the upper (or lower) expectation of `I[a, b]`.
    #[pyo3(signature = (a, b, side = "upper"))]
    fn indicator_limit(&self, a: f64, b: f64, side: &str) -> PyResult<f64> {
        let side = self::side(side)?;
        Ok(IndicatorLimit::new(self.0, a, b, side).evaluate().map_err(py_err)?.value)
    }

    /// PDE estimate of the same limit; returns a dict with the extrapolated
    /// value, the closed form and their gap.
    #[pyo3(signature = (a, b, side = "upper", nx = 2001, nt = 2000))]
    fn pde_estimate<'py>(
        &self,
        py: Python<'py>,
        a: f64,
        b: f64,
        side: &str,
        nx: usize,
        nt: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let side = self::side(side)?;
        let grid = PdeGrid::new(-10.0, 10.0, nx, nt).map_err(py_err)?;
        let est = py
            .detach(|| pde::indicator_estimate(&self.0, a, b, side, &grid, &DEFAULT_EPSILONS, &DEFAULT_BANDWIDTHS))
            .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("extrapolated", est.extrapolated)?;
        d.set_item("closed_form", est.closed_form)?;
        d.set_item("gap", est.gap)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("AmbiguityInterval({}, {}, sigma={})", self.0.mu_lower, self.0.mu_upper, self.0.sigma)
    }
}

/// Finite set of laws on a common set of outcomes.
#[pyclass(name = "MeasureSet", frozen, from_py_object)]
#[derive(Clone)]
struct PyMeasureSet(measures::MeasureSet);

#[pymethods]
impl PyMeasureSet {
    /// `values` is the common support; `laws` holds one probability vector per law.
    #[new]
    fn new(values: Vec<f64>, laws: Vec<Vec<f64>>) -> PyResult<Self> {
        let laws = laws
            .iter()
            .map(|p| DiscreteMeasure::from_f64(&values, p))
            .collect::<ambiclt_core::Result<Vec<_>>>()
            .map_err(py_err)?;
        let set = measures::MeasureSet::new(laws).map_err(py_err)?;
        measures::validate_measure_set(&set, DEFAULT_TOL_VAR).map_err(py_err)?;
        Ok(PyMeasureSet(set))
    }

    /// Two laws on `{1, -1, 0}` with weights `(p, q, 1-p-q)` and `(q, p, 1-p-q)`.
    #[staticmethod]
    #[pyo3(signature = (p = 0.6, q = 0.3))]
    fn coin(p: f64, q: f64) -> PyResult<Self> {
        measures::coin_example(p, q).map(PyMeasureSet).map_err(py_err)
    }

    /// Four-point error laws with means `±kappa` and standard deviation `sigma`.
    #[staticmethod]
    #[pyo3(signature = (kappa, sigma = 1.0))]
    fn symmetric_errors(kappa: f64, sigma: f64) -> PyResult<Self> {
        hypothesis::symmetric_error_model(kappa, sigma).map(PyMeasureSet).map_err(py_err)
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().iter().map(to_f64).collect()
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.0.means().iter().map(to_f64).collect()
    }

    fn interval(&self) -> PyResult<PyInterval> {
        measures::validate_measure_set(&self.0, DEFAULT_TOL_VAR).map(PyInterval).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Worst-case `sup_Q` (or `inf_Q`) of `E_Q[I[a,b](statistic)]` by dynamic
    /// programming. With `exact=True` the value is also returned as a fraction
    /// string.
    #[pyo3(signature = (n, a = -1.0, b = 1.0, theorem = "clt", sense = "sup", center = 0.0, h = None, exact = false))]
    #[allow(clippy::too_many_arguments)]
    fn worst_case<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        a: f64,
        b: f64,
        theorem: &str,
        sense: &str,
        center: f64,
        h: Option<f64>,
        exact: bool,
    ) -> PyResult<(f64, Option<String>)> {
        let stat = statistic(theorem, center, 1.0, 1.0)?;
        let sense = self::sense(sense)?;
        let phi = terminal(a, b, h)?;
        let model = LatticeModel::new(&self.0).map_err(py_err)?;
        let cfg = DpConfig::default();
        py.detach(|| {
            if exact {
                let out = worst_case::worst_case_value::<Rational>(&model, stat, &phi, n, sense, &cfg)?;
                Ok((to_f64(&out.value), Some(out.value.to_string())))
            } else {
                let out = worst_case::worst_case_value::<f64>(&model, stat, &phi, n, sense, &cfg)?;
                Ok((out.value, None))
            }
        })
        .map_err(py_err)
    }

    /// Monte Carlo `E_Q[I[a,b](statistic)]` under a built-in drift policy;
    /// returns `(estimate, stderr)`.
    #[pyo3(signature = (n, policy = "threshold", paths = 10_000, seed = 0, a = -1.0, b = 1.0, theorem = "special", center = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn monte_carlo(
        &self,
        py: Python<'_>,
        n: usize,
        policy: &str,
        paths: usize,
        seed: u64,
        a: f64,
        b: f64,
        theorem: &str,
        center: f64,
    ) -> PyResult<(f64, f64)> {
        let stat = statistic(theorem, center, 1.0, 1.0)?;
        let pol = DriftPolicy::builtins(center)
            .into_iter()
            .find(|p| p.name() == policy)
            .ok_or_else(|| PyValueError::new_err(format!("unknown policy `{policy}`")))?;
        let phi = terminal(a, b, None)?;
        let model = LatticeModel::new(&self.0).map_err(py_err)?;
        let est =
            py.detach(|| worst_case::mc_policy_value(&model, &pol, &phi, stat, n, paths, seed)).map_err(py_err)?;
        Ok((est.estimate, est.stderr))
    }
}

/// `M_n` (or its tilde variant) along one observed path.
#[pyfunction]
#[pyo3(signature = (xs, mu_lower, mu_upper, sigma = 1.0, center = 0.0, variant = "M"))]
fn path_statistic(xs: Vec<f64>, mu_lower: f64, mu_upper: f64, sigma: f64, center: f64, variant: &str) -> PyResult<f64> {
    let iv = measures::AmbiguityInterval::new(mu_lower, mu_upper, sigma).map_err(py_err)?;
    let rule = SwitchRule::new(center, iv);
    statistics::path_statistic(&xs, xs.len(), &rule, self::variant(variant)?).map_err(py_err)
}

/// Per-step `(m, mu_m, M_m)` triples along one observed path.
#[pyfunction]
#[pyo3(signature = (xs, mu_lower, mu_upper, sigma = 1.0, center = 0.0, variant = "M"))]
fn path_trace(
    xs: Vec<f64>,
    mu_lower: f64,
    mu_upper: f64,
    sigma: f64,
    center: f64,
    variant: &str,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let iv = measures::AmbiguityInterval::new(mu_lower, mu_upper, sigma).map_err(py_err)?;
    let rule = SwitchRule::new(center, iv);
    let rows = statistics::path_trace(&xs, xs.len(), &rule, self::variant(variant)?).map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.m, r.mu_m, r.value)).collect())
}

/// Robust test of `theta = theta0` under mean ambiguity `[-kappa, kappa]`.
#[pyclass(name = "TestSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyTestSpec(hypothesis::TestSpec);

#[pymethods]
impl PyTestSpec {
    #[new]
    #[pyo3(signature = (kappa = 0.0, sigma = 1.0, alpha = 0.05, theta0 = 0.0, xi = 1.0))]
    fn new(kappa: f64, sigma: f64, alpha: f64, theta0: f64, xi: f64) -> PyResult<Self> {
        hypothesis::TestSpec::new(kappa, sigma, alpha, theta0, xi).map(PyTestSpec).map_err(py_err)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn theta0(&self) -> f64 {
        self.0.theta0
    }

    /// Acceptance interval `(a, b)`: symmetric, or with the lower end fixed.
    #[pyo3(signature = (a_lower = None))]
    fn calibrate(&self, a_lower: Option<f64>) -> PyResult<(f64, f64)> {
        let mode = a_lower.map_or(Calibration::Symmetric, Calibration::GivenLower);
        hypothesis::calibrate_interval(&self.0, mode).map_err(py_err)
    }

    fn coverage(&self, a: f64, b: f64) -> PyResult<f64> {
        hypothesis::coverage(&self.0, a, b).map_err(py_err)
    }

    fn wrong_acceptance(&self, a: f64, b: f64, xi: f64) -> PyResult<f64> {
        hypothesis::wrong_acceptance(&self.0, a, b, xi).map_err(py_err)
    }

    fn power_curve(&self, a: f64, b: f64, xis: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        hypothesis::power_curve(&self.0, a, b, &xis).map_err(py_err)
    }

    /// Interval minimizing wrong acceptance at `xi` subject to coverage;
    /// returns `(a, b, objective)`.
    fn optimize(&self, xi: f64) -> PyResult<(f64, f64, f64)> {
        let o = hypothesis::optimize_ab(&self.0, xi).map_err(py_err)?;
        Ok((o.a, o.b, o.objective))
    }

    fn statistic(&self, data: Vec<f64>, a: f64, b: f64) -> PyResult<f64> {
        hypothesis::test_statistic(&data, &self.0, a, b).map_err(py_err)
    }

    /// `True` when the data are consistent with `theta0`.
    fn accepts(&self, data: Vec<f64>, a: f64, b: f64) -> PyResult<bool> {
        let m = hypothesis::test_statistic(&data, &self.0, a, b).map_err(py_err)?;
        let d = hypothesis::test_decision(m, a, b, &Theta::Point { value: self.0.theta0 }).map_err(py_err)?;
        Ok(d == Decision::Accept)
    }

    /// Monte Carlo acceptance rate with data `theta_true + Y`; returns `(rate, stderr)`.
    #[pyo3(signature = (a, b, theta_true, n = 400, paths = 10_000, seed = 0, policy = "threshold"))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        a: f64,
        b: f64,
        theta_true: f64,
        n: usize,
        paths: usize,
        seed: u64,
        policy: &str,
    ) -> PyResult<(f64, f64)> {
        let errors = hypothesis::symmetric_error_model(self.0.kappa, self.0.sigma).map_err(py_err)?;
        let pol = DriftPolicy::builtins(0.5 * (a + b))
            .into_iter()
            .find(|p| p.name() == policy)
            .ok_or_else(|| PyValueError::new_err(format!("unknown policy `{policy}`")))?;
        let est = py
            .detach(|| hypothesis::size_power_simulation(&errors, &self.0, a, b, theta_true, n, paths, seed, &pol))
            .map_err(py_err)?;
        Ok((est.accept_rate, est.stderr))
    }
}

/// Runs acceptance criteria (all when `ids` is empty) and returns
/// `(id, name, passed, metric, tolerance)` tuples.
#[pyfunction]
#[pyo3(signature = (ids = Vec::new()))]
fn run_acceptance(py: Python<'_>, ids: Vec<u8>) -> Vec<(u8, String, bool, f64, f64)> {
    py.detach(|| acceptance::run_suite(&ids))
        .into_iter()
        .map(|r| (r.id, r.name.to_string(), r.passed, r.metric, r.tolerance))
        .collect()
}

#[pymodule]
fn ambiclt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyInterval>()?;
    m.add_class::<PyMeasureSet>()?;
    m.add_class::<PyTestSpec>()?;
    m.add_function(wrap_pyfunction!(path_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(path_trace, m)?)?;
    m.add_function(wrap_pyfunction!(run_acceptance, m)?)?;
    Ok(())
}
