//! Python bindings. Results with nested structure (training traces, oracle
//! reports) cross the boundary as JSON and come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use roml_core::cem::CemState;
use roml_core::experiment::{ExperimentConfig, ProblemSpec};
use roml_core::metaalgo::{Algorithm, TrainConfig};
use roml_core::metamdp::KhazadDum;
use roml_core::oracles::{self, Fault};
use roml_core::{risk, rng, stats, Task};

fn err(e: roml_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn preset(name: &str) -> PyResult<ExperimentConfig> {
    match name {
        "khazad_dum" => Ok(ExperimentConfig::khazad_dum()),
        "sine" => Ok(ExperimentConfig::sine()),
        other => Err(PyValueError::new_err(format!("unknown preset {other:?}, expected khazad_dum or sine"))),
    }
}

/// Empirical lower-tail CVaR at level `alpha`.
#[pyfunction]
fn cvar(values: Vec<f64>, alpha: f64) -> PyResult<f64> {
    risk::cvar(&values, alpha).map_err(err)
}

#[pyfunction]
fn quantile(values: Vec<f64>, p: f64) -> PyResult<f64> {
    risk::quantile(&values, p).map_err(err)
}

#[pyfunction]
fn weighted_quantile(values: Vec<f64>, weights: Vec<f64>, p: f64) -> PyResult<f64> {
    risk::weighted_quantile(&values, &weights, p).map_err(err)
}

/// Mean and 95% t-interval as `(mean, lo, hi)`.
#[pyfunction]
fn mean_ci95(values: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let ci = stats::mean_ci95(&values).map_err(err)?;
    Ok((ci.mean, ci.lo, ci.hi))
}

/// One-sided sign test that `a` beats `b` pairwise; returns `(wins, losses, ties, p_value)`.
#[pyfunction]
fn sign_test_greater(a: Vec<f64>, b: Vec<f64>) -> PyResult<(usize, usize, usize, f64)> {
    let t = stats::sign_test_greater(&a, &b).map_err(err)?;
    Ok((t.wins, t.losses, t.ties, t.p_value))
}

/// Parametric task distribution.
#[pyclass(name = "TaskDistribution", frozen, from_py_object)]
#[derive(Clone)]
struct PyTaskDistribution(roml_core::TaskDistribution);

#[pymethods]
impl PyTaskDistribution {
    #[staticmethod]
    fn exponential(rate: f64) -> PyResult<Self> {
        roml_core::TaskDistribution::exponential(rate).map(Self).map_err(err)
    }

    #[staticmethod]
    fn beta_unit(phi: f64) -> PyResult<Self> {
        roml_core::TaskDistribution::beta_unit(phi).map(Self).map_err(err)
    }

    #[staticmethod]
    fn affine_beta(phi: f64, lo: f64, hi: f64) -> PyResult<Self> {
        roml_core::TaskDistribution::affine_beta(phi, lo, hi).map(Self).map_err(err)
    }

    #[staticmethod]
    fn product(components: Vec<PyTaskDistribution>) -> PyResult<Self> {
        roml_core::TaskDistribution::product(components.into_iter().map(|c| c.0).collect()).map(Self).map_err(err)
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.0.params()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn mean(&self) -> Vec<f64> {
        self.0.mean()
    }

    /// `n` tasks drawn from the stream derived from `seed`.
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut s = rng::stream(seed, &[rng::TAG_TASKS]);
        Ok(self.0.sample(&mut s, n).map_err(err)?.into_iter().map(|t| t.0).collect())
    }

    fn log_density(&self, task: Vec<f64>) -> f64 {
        self.0.log_density(&Task(task))
    }

    fn __repr__(&self) -> String {
        format!("TaskDistribution({:?})", self.0)
    }
}

/// Cross-entropy task sampler.
#[pyclass(name = "CemSampler")]
struct PyCemSampler {
    state: CemState,
}

#[pymethods]
impl PyCemSampler {
    #[new]
    #[pyo3(signature = (phi0, alpha, beta, nu = 0.0))]
    fn new(phi0: PyTaskDistribution, alpha: f64, beta: f64, nu: f64) -> PyResult<Self> {
        Ok(Self { state: CemState::new(phi0.0, alpha, beta, nu).map_err(err)? })
    }

    #[getter]
    fn phi(&self) -> PyTaskDistribution {
        PyTaskDistribution(self.state.phi.clone())
    }

    /// Draws a batch; returns `(tasks, importance_weights)`.
    fn sample_batch(&self, n: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let mut s = rng::stream(seed, &[rng::TAG_TASKS]);
        let b = self.state.sample_batch(n, &mut s).map_err(err)?;
        Ok((b.tasks.into_iter().map(|t| t.0).collect(), b.weights))
    }

    /// Refits the sampler on scored tasks and returns the update diagnostics.
    fn update<'py>(
        &mut self,
        py: Python<'py>,
        tasks: Vec<Vec<f64>>,
        weights: Vec<f64>,
        returns: Vec<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let tasks: Vec<Task> = tasks.into_iter().map(Task).collect();
        let (next, info) = self.state.update(&tasks, &weights, &returns).map_err(err)?;
        self.state = next;
        from_json(py, &info)
    }
}

/// Runs the analytic oracle suite; returns a list of report dicts.
#[pyfunction]
#[pyo3(signature = (inject_fault = false))]
fn oracle_check(py: Python<'_>, inject_fault: bool) -> PyResult<Bound<'_, PyAny>> {
    let fault = inject_fault.then_some(Fault::FlipBaselineSign);
    let reports = py.detach(|| oracles::run_oracle_suite(fault)).map_err(err)?;
    from_json(py, &reports)
}

/// ASCII rendering of the default Khazad-Dum map.
#[pyfunction]
fn khazad_dum_map() -> PyResult<String> {
    let env = KhazadDum::new(Default::default()).map_err(err)?;
    Ok(env.ascii_map())
}

/// Trains one algorithm on a preset and returns the trace as a dict.
///
/// `train` is an optional dict of training-config overrides, for example
/// `{"iterations": 20, "n_tasks": 8}`.
#[pyfunction]
#[pyo3(signature = (preset_name, algorithm, seed = 0, train = None))]
fn run<'py>(
    py: Python<'py>,
    preset_name: &str,
    algorithm: &str,
    seed: u64,
    train: Option<Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let exp = preset(preset_name)?;
    let algorithm: Algorithm = algorithm.parse().map_err(|e: roml_core::Error| err(e))?;
    let mut config = exp.cell(algorithm, seed);
    if let Some(overrides) = train {
        let text: String = py.import("json")?.call_method1("dumps", (overrides,))?.extract()?;
        let patch: serde_json::Value = serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let mut base = serde_json::to_value(&config).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let (Some(obj), Some(patch)) = (base.as_object_mut(), patch.as_object()) else {
            return Err(PyValueError::new_err("train overrides must be a dict"));
        };
        for (k, v) in patch {
            if !obj.contains_key(k) {
                return Err(PyValueError::new_err(format!("unknown train field {k:?}")));
            }
            obj.insert(k.clone(), v.clone());
        }
        config = serde_json::from_value::<TrainConfig>(base).map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    let problem: ProblemSpec = exp.problem.clone();
    let out = py.detach(|| roml_core::experiment::run_one(&problem, &config)).map_err(err)?;
    from_json(py, &out.trace)
}

#[pymodule]
fn roml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTaskDistribution>()?;
    m.add_class::<PyCemSampler>()?;
    m.add_function(wrap_pyfunction!(cvar, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(mean_ci95, m)?)?;
    m.add_function(wrap_pyfunction!(sign_test_greater, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add_function(wrap_pyfunction!(khazad_dum_map, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
