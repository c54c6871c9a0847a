//! Python bindings. Matrices cross the boundary as lists of rows and
//! structured reports as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ovaib::info_oracle::{self, IsotropicGaussian};
use ovaib::losses::{self, LossConfig, ModalityBundle, ScorerKind};
use ovaib::pipeline::{self, RunConfig};
use ovaib::synth::{self, GeneratorSpec};
use ovaib::verify::{run_gradcheck, run_verify, GradcheckConfig, Scope, VerifyOptions};
use ovaib::{Error, Matrix, Vector};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Empty(_) | Error::Json(_) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py_err)
}

fn vector(v: Vec<f64>) -> PyResult<Vector> {
    Vector::new(v).map_err(to_py_err)
}

fn parse_config(config: Option<&str>) -> PyResult<RunConfig> {
    match config {
        Some(text) => RunConfig::from_json(text).map_err(to_py_err),
        None => Ok(RunConfig::default()),
    }
}

/// A finite joint distribution over `M` discrete variables, probabilities in
/// row-major order of the alphabet sizes.
#[pyclass(name = "DiscreteJoint", module = "ovaib_py")]
struct PyDiscreteJoint {
    inner: info_oracle::DiscreteJoint,
}

#[pymethods]
impl PyDiscreteJoint {
    #[new]
    fn new(alphabet_sizes: Vec<usize>, probs: Vec<f64>) -> PyResult<Self> {
        let inner = info_oracle::DiscreteJoint::new(alphabet_sizes, probs).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn random(alphabet_sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = info_oracle::DiscreteJoint::random(&mut rng, &alphabet_sizes).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    fn entropy(&self, subset: Vec<usize>) -> PyResult<f64> {
        self.inner.entropy(&subset).map_err(to_py_err)
    }

    fn mutual_information(&self, a: Vec<usize>, b: Vec<usize>) -> PyResult<f64> {
        self.inner.mutual_information(&a, &b).map_err(to_py_err)
    }

    fn total_correlation(&self) -> f64 {
        self.inner.total_correlation()
    }

    fn dual_total_correlation(&self) -> f64 {
        self.inner.dual_total_correlation()
    }

    /// `I(X_m; X_rest)` for every `m`.
    fn ova_mi_terms(&self) -> Vec<f64> {
        self.inner.ova_mi_terms()
    }

    /// `(lower, dtc, upper, holds)`.
    fn check_sandwich(&self) -> (f64, f64, f64, bool) {
        let r = self.inner.check_sandwich();
        (r.lower, r.dtc, r.upper, r.holds)
    }

    fn __repr__(&self) -> String {
        format!("DiscreteJoint(alphabet_sizes={:?})", self.inner.alphabet_sizes())
    }
}

/// KL divergence between isotropic Gaussians `N(mu_p, var_p I)` and `N(mu_q, var_q I)`.
#[pyfunction]
fn gaussian_kl(mu_p: Vec<f64>, var_p: f64, mu_q: Vec<f64>, var_q: f64) -> PyResult<f64> {
    let p = IsotropicGaussian::new(vector(mu_p)?, var_p).map_err(to_py_err)?;
    let q = IsotropicGaussian::new(vector(mu_q)?, var_q).map_err(to_py_err)?;
    info_oracle::gaussian_kl(&p, &q).map_err(to_py_err)
}

/// Normalized product of equal-variance isotropic Gaussians: `(mean, variance)`.
#[pyfunction]
fn gaussian_product(means: Vec<Vec<f64>>, variance: f64) -> PyResult<(Vec<f64>, f64)> {
    let comps = means
        .into_iter()
        .map(|m| IsotropicGaussian::new(vector(m)?, variance).map_err(to_py_err))
        .collect::<PyResult<Vec<_>>>()?;
    let q = info_oracle::gaussian_product(&comps).map_err(to_py_err)?;
    Ok((q.mean().as_slice().to_vec(), q.variance()))
}

/// Ridge projection of `z` onto the span of `columns`.
#[pyfunction]
#[pyo3(signature = (columns, z, lam = 1e-8))]
fn ridge_project(columns: Vec<Vec<f64>>, z: Vec<f64>, lam: f64) -> PyResult<Vec<f64>> {
    let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let a = Matrix::from_columns(&cols).map_err(to_py_err)?;
    let p = ovaib::linalg::ridge_project(&a, &vector(z)?, lam).map_err(to_py_err)?;
    Ok(p.as_slice().to_vec())
}

#[pyfunction]
#[pyo3(signature = (z, rest, lam = 1e-8))]
fn projection_score(z: Vec<f64>, rest: Vec<Vec<f64>>, lam: f64) -> PyResult<f64> {
    let rest = rest.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
    losses::projection_score(&vector(z)?, &rest, lam).map_err(to_py_err)
}

/// Sufficiency, minimality and total loss of aligned embedding batches with
/// the geometric scorer.
#[pyfunction]
#[pyo3(signature = (batches, tau = 0.01, beta = 1.0, lam = 1e-8, include_positive = false))]
fn ova_ib_loss<'py>(py: Python<'py>, batches: Vec<Vec<Vec<f64>>>, tau: f64, beta: f64, lam: f64, include_positive: bool) -> PyResult<Bound<'py, PyAny>> {
    let bundle = ModalityBundle::new(batches.into_iter().map(matrix).collect::<PyResult<_>>()?).map_err(to_py_err)?;
    let cfg = LossConfig {
        tau,
        beta,
        lambda: lam,
        scorer: ScorerKind::Geometric,
        include_positive_in_denominator: include_positive,
    };
    cfg.validate().map_err(to_py_err)?;
    let values = losses::evaluate(&bundle, &cfg, &[]).map_err(to_py_err)?;
    json_to_py(py, &values)
}

/// Symmetric CLIP loss summed over every modality pair.
#[pyfunction]
#[pyo3(signature = (batches, tau = 0.01, include_positive = true))]
fn pairwise_clip_loss(batches: Vec<Vec<Vec<f64>>>, tau: f64, include_positive: bool) -> PyResult<f64> {
    let bundle = ModalityBundle::new(batches.into_iter().map(matrix).collect::<PyResult<_>>()?).map_err(to_py_err)?;
    losses::evaluate_clip(&bundle, tau, include_positive).map_err(to_py_err)
}

/// Draws `n` samples from a uniform synthetic spec. Returns a dict with
/// `observations` (one row list per modality), `essence` and `labels`.
#[pyfunction]
#[pyo3(signature = (n, num_modalities = 3, d_essence = 8, d_nuisance = 4, d_obs = 32, noise = 0.1, num_classes = 4, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn generate<'py>(
    py: Python<'py>,
    n: usize,
    num_modalities: usize,
    d_essence: usize,
    d_nuisance: usize,
    d_obs: usize,
    noise: f64,
    num_classes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = GeneratorSpec::uniform(num_modalities, d_essence, d_nuisance, d_obs, noise, num_classes, seed);
    let ds = synth::generate(&spec, n).map_err(to_py_err)?;
    let out = serde_json::json!({
        "observations": ds.observations.iter().map(Matrix::to_rows).collect::<Vec<_>>(),
        "essence": ds.essence.to_rows(),
        "labels": ds.labels,
    });
    json_to_py(py, &out)
}

/// The default run configuration as a JSON string.
#[pyfunction]
fn default_config() -> PyResult<String> {
    RunConfig::default().to_json().map_err(to_py_err)
}

/// Trains one seed and writes its artifacts to `out_dir`. Returns the final
/// training metrics and the checkpoint path.
#[pyfunction]
#[pyo3(signature = (out_dir, config = None, seed = 42))]
fn train<'py>(py: Python<'py>, out_dir: PathBuf, config: Option<&str>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let art = py.detach(|| pipeline::run_training(&cfg, seed, &out_dir)).map_err(to_py_err)?;
    let out = serde_json::json!({
        "final": art.outcome.records.last().map(|r| &r.metrics),
        "wall_seconds": art.outcome.wall_seconds,
        "checkpoint": art.checkpoint,
        "metrics": art.metrics,
    });
    json_to_py(py, &out)
}

/// Evaluates a checkpoint: retrieval, subset probes and nuisance probes.
#[pyfunction]
#[pyo3(signature = (checkpoint, out_dir, config = None))]
fn evaluate<'py>(py: Python<'py>, checkpoint: PathBuf, out_dir: PathBuf, config: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config)?;
    let report = py.detach(|| pipeline::run_evaluation(&cfg, &checkpoint, &out_dir)).map_err(to_py_err)?;
    json_to_py(py, &report)
}

/// Runs the seeded certification sweeps. `scope` is "oracle", "losses" or "all".
#[pyfunction]
#[pyo3(signature = (scope = "all", m = None, seed = 0))]
fn verify<'py>(py: Python<'py>, scope: &str, m: Option<usize>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let scope = match scope {
        "oracle" => Scope::Oracle,
        "losses" => Scope::Losses,
        "all" => Scope::All,
        other => return Err(PyValueError::new_err(format!("unknown scope {other:?}"))),
    };
    let opts = VerifyOptions {
        scope,
        m,
        seed,
        ..VerifyOptions::default()
    };
    let report = py.detach(|| run_verify(&opts)).map_err(to_py_err)?;
    json_to_py(py, &report)
}

/// Finite-difference check of every loss with the default configuration.
#[pyfunction]
#[pyo3(signature = (seed = None))]
fn gradcheck<'py>(py: Python<'py>, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = GradcheckConfig::default();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = py.detach(|| run_gradcheck(&cfg, false)).map_err(to_py_err)?;
    json_to_py(py, &report)
}

#[pymodule]
fn ovaib_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDiscreteJoint>()?;
    m.add_function(wrap_pyfunction!(gaussian_kl, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_product, m)?)?;
    m.add_function(wrap_pyfunction!(ridge_project, m)?)?;
    m.add_function(wrap_pyfunction!(projection_score, m)?)?;
    m.add_function(wrap_pyfunction!(ova_ib_loss, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_clip_loss, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
