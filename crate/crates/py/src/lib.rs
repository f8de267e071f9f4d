use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use goldilocks::harness::experiment::{initial_network, train_toy};
use goldilocks::harness::{dataset::gen_toy_dataset, ExperimentConfig};
use goldilocks::linalg::DEFAULT_RANK_TOL;
use goldilocks::moments::{propagate_layer, GaussianMoments};
use goldilocks::odeflow::{implicit_invariant, invert_network_exact};
use goldilocks::{Activation, Error, Matrix};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Shape(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_activation(name: &str) -> PyResult<Activation> {
    name.parse::<Activation>().map_err(err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(err)
}

/// Value and derivative of the named activation at each x.
#[pyfunction]
fn activate(name: &str, xs: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
    let act = parse_activation(name)?;
    Ok(xs.into_iter().map(|x| act.eval(x)).collect())
}

#[pyfunction]
#[pyo3(signature = (rows, tol = DEFAULT_RANK_TOL))]
fn pseudoinverse(rows: Vec<Vec<f64>>, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(goldilocks::pseudoinverse(&matrix(rows)?, tol).map_err(err)?.to_rows())
}

#[pyfunction]
fn singular_values(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(goldilocks::svd(&matrix(rows)?).map_err(err)?.singular_values)
}

/// Second-order mean and covariance of A(W x + b) for x ~ N(mean, cov).
#[pyfunction]
fn propagate_moments(
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: &str,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let m = GaussianMoments::new(mean, matrix(cov)?).map_err(err)?;
    let out = propagate_layer(&m, &matrix(weights)?, &bias, parse_activation(activation)?).map_err(err)?;
    Ok((out.mean, out.cov.to_rows()))
}

/// `hump` is "lorentz" or "gauss".
#[pyfunction]
fn invariant(hump: &str, a: f64) -> PyResult<f64> {
    let kind = match hump {
        "lorentz" => goldilocks::activation::HumpKind::Lorentzian,
        "gauss" => goldilocks::activation::HumpKind::Gaussian,
        other => return Err(PyValueError::new_err(format!("unknown hump {other:?}"))),
    };
    implicit_invariant(kind, a).map_err(err)
}

fn config_from(json: Option<&str>) -> PyResult<ExperimentConfig> {
    match json {
        None => Ok(ExperimentConfig::default()),
        Some(s) => ExperimentConfig::from_json(s).map_err(err),
    }
}

/// Toy inputs and targets for a config given as JSON (defaults if omitted).
#[pyfunction]
#[pyo3(signature = (config = None))]
fn toy_dataset(config: Option<&str>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let cfg = config_from(config)?;
    let batch = gen_toy_dataset(&cfg.dataset, cfg.dataset_seed()).map_err(err)?;
    Ok((batch.inputs.to_rows(), batch.targets.to_rows()))
}

#[pyclass(name = "Network", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: goldilocks::Network,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: goldilocks::Network =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    /// Untrained network for a config.
    #[staticmethod]
    #[pyo3(signature = (config = None))]
    fn initial(config: Option<&str>) -> PyResult<Self> {
        Ok(Self {
            inner: initial_network(&config_from(config)?).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict(&x).map_err(err)
    }

    #[pyo3(signature = (output, tol = 1e-12, max_iter = 100))]
    fn invert(&self, output: Vec<f64>, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
        invert_network_exact(&self.inner, &output, tol, max_iter).map_err(err)
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(depth={}, input_dim={}, output_dim={})",
            self.inner.depth(),
            self.inner.input_dim(),
            self.inner.output_dim()
        )
    }
}

/// Trains the toy classifier; returns the network and per-epoch (loss, error).
#[pyfunction]
#[pyo3(signature = (config = None))]
fn train_toy_experiment(py: Python<'_>, config: Option<&str>) -> PyResult<(PyNetwork, Vec<(f64, f64)>)> {
    let cfg = config_from(config)?;
    let outcome = py.detach(|| train_toy(&cfg)).map_err(err)?;
    let history = outcome.metrics.iter().map(|m| (m.loss, m.train_error)).collect();
    Ok((PyNetwork { inner: outcome.network }, history))
}

#[pymodule]
fn goldilocks_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(activate, m)?)?;
    m.add_function(wrap_pyfunction!(pseudoinverse, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_moments, m)?)?;
    m.add_function(wrap_pyfunction!(invariant, m)?)?;
    m.add_function(wrap_pyfunction!(toy_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_toy_experiment, m)?)?;
    m.add_class::<PyNetwork>()?;
    Ok(())
}
