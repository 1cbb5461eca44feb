//! Python bindings: ensembles, kernels, densities, gap tables, reference
//! kernels and Metropolis sampling.

use std::collections::HashMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use loggas::ensemble::{EnsembleConfig, EnsembleSpec};
use loggas::gram::PrecisionPolicy;
use loggas::kernel::{KernelEvaluator, TwoPointKernel};
use loggas::mc::{metropolis_run, ChainConfig};
use loggas::precision::Precision;
use loggas::reference::{self, ReferenceDensity, SeriesPolicy};
use loggas::stats::{self, Normalization, Placement, SGrid};
use loggas::{Error, ErrorKind};

fn to_py(e: impl Into<Error>) -> PyErr {
    let e: Error = e.into();
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Config => PyValueError::new_err(msg),
        ErrorKind::Numeric => PyRuntimeError::new_err(msg),
        ErrorKind::Io => PyOSError::new_err(msg),
    }
}

/// An ensemble `Π|r_i − r_j||s_i − s_j|^γ Π |x|^α e^{−V(x)}`.
#[pyclass(name = "Ensemble", module = "loggas_py", from_py_object)]
#[derive(Clone)]
pub struct PyEnsemble {
    inner: EnsembleSpec,
}

#[pymethods]
impl PyEnsemble {
    #[staticmethod]
    fn gue(n: usize) -> Self {
        Self {
            inner: EnsembleSpec::gue(n),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (n, theta, potential = "x^2"))]
    fn mb_hermite(n: usize, theta: f64, potential: &str) -> PyResult<Self> {
        let inner = EnsembleSpec::mb_hermite(n, theta, potential).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, theta, alpha = 0.0, potential = "x"))]
    fn mb_laguerre(n: usize, theta: f64, alpha: f64, potential: &str) -> PyResult<Self> {
        let inner = EnsembleSpec::mb_laguerre(n, theta, alpha, potential).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn critical(n: usize, q: f64) -> PyResult<Self> {
        let inner = EnsembleSpec::critical(n, q).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Build from a JSON config string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = EnsembleSpec::from_config_json(text).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = EnsembleSpec::load(std::path::Path::new(path)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_config().to_json_pretty()
    }

    fn with_gamma(&self, gamma: f64) -> PyResult<Self> {
        let inner = self.inner.clone().with_gamma(gamma).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (scale = None))]
    fn with_scale(&self, scale: Option<f64>) -> PyResult<Self> {
        let inner = self.inner.clone().with_scale(scale).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn __repr__(&self) -> String {
        let cfg: EnsembleConfig = self.inner.to_config();
        format!(
            "Ensemble(name={:?}, n={}, theta={}, gamma={})",
            cfg.name, cfg.n, cfg.theta, cfg.gamma
        )
    }
}

/// Finite-N kernel of an ensemble in scaled coordinates.
#[pyclass(name = "Kernel", module = "loggas_py", from_py_object)]
#[derive(Clone)]
pub struct PyKernel {
    inner: KernelEvaluator,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (ensemble, digits = None))]
    fn new(py: Python<'_>, ensemble: &PyEnsemble, digits: Option<u32>) -> PyResult<Self> {
        let policy = PrecisionPolicy {
            initial: digits.map(Precision::digits),
            ..PrecisionPolicy::default()
        };
        let spec = ensemble.inner.clone();
        let inner = py
            .detach(|| KernelEvaluator::build(&spec, &policy, None))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn digits(&self) -> u32 {
        self.inner.gram().precision.decimal_digits()
    }

    fn eval(&self, x: f64, y: f64) -> PyResult<f64> {
        self.inner.eval(x, y).map_err(to_py)
    }

    /// `K(x_i, x_j)` as nested lists.
    fn matrix(&self, py: Python<'_>, nodes: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = py.detach(|| self.inner.matrix(&nodes)).map_err(to_py)?;
        Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// ρ on a grid; `normalization` is "count" (∫ρ = N) or "unit".
    #[pyo3(signature = (xs, normalization = "count"))]
    fn density(&self, py: Python<'_>, xs: Vec<f64>, normalization: &str) -> PyResult<Vec<f64>> {
        let norm = match normalization {
            "count" => Normalization::ParticleCount,
            "unit" => Normalization::Unit,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown normalization {other:?}"
                )))
            }
        };
        let d = py
            .detach(|| stats::density(&self.inner, &xs, norm))
            .map_err(to_py)?;
        Ok(d.rho)
    }

    #[pyo3(signature = (tol = 1e-12))]
    fn trace(&self, py: Python<'_>, tol: f64) -> PyResult<f64> {
        py.detach(|| self.inner.trace(tol)).map_err(to_py)
    }

    #[pyo3(signature = (rel = 1e-6))]
    fn extent(&self, rel: f64) -> PyResult<(f64, f64)> {
        self.inner.extent(rel).map_err(to_py)
    }

    /// Gap probabilities. `mode` is "unfold", "raw" or "hard_edge"; returns a
    /// dict with keys `s`, `E`, `F`, `p` (the last three indexed `[n][k]`).
    #[pyo3(signature = (mode = "unfold", smax = 3.0, ds = 0.02, order = 32, levels = 2, center = None))]
    #[allow(clippy::too_many_arguments)]
    fn gap_table(
        &self,
        py: Python<'_>,
        mode: &str,
        smax: f64,
        ds: f64,
        order: usize,
        levels: usize,
        center: Option<f64>,
    ) -> PyResult<HashMap<String, Py<PyAny>>> {
        let placement = match mode {
            "unfold" => Placement::Unfolded { center },
            "raw" => Placement::Centered { center },
            "hard_edge" => Placement::HardEdge,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        let grid = SGrid::new(smax, ds).map_err(to_py)?;
        let k = self.inner.clone();
        let run = py
            .detach(|| stats::gap_statistics(k, placement, grid, order, levels))
            .map_err(to_py)?;
        let t = run.table;
        let mut out = HashMap::new();
        out.insert(
            "s".to_string(),
            t.s.clone().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "E".to_string(),
            t.e.clone().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "F".to_string(),
            t.f.clone().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "p".to_string(),
            t.p.clone().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "p0_integral".to_string(),
            t.p0_integral().into_pyobject(py)?.into_any().unbind(),
        );
        out.insert(
            "mean_spacing".to_string(),
            t.mean_spacing().into_pyobject(py)?.into_any().unbind(),
        );
        Ok(out)
    }
}

/// Metropolis samples of the joint density, one sorted list per sample.
#[pyfunction]
#[pyo3(signature = (ensemble, sweeps, burn_in, seed, step = 0.1, thinning = 1))]
fn sample(
    py: Python<'_>,
    ensemble: &PyEnsemble,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
    step: f64,
    thinning: usize,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let cfg = ChainConfig {
        step_size: step,
        thinning,
        ..ChainConfig::new(ensemble.inner.clone(), sweeps, burn_in, seed)
    };
    let chain = py.detach(|| metropolis_run(&cfg)).map_err(to_py)?;
    Ok((chain.samples, chain.acceptance_rate))
}

#[pyfunction]
fn sine_kernel(x: f64, y: f64) -> f64 {
    reference::sine_kernel(x, y)
}

#[pyfunction]
fn bessel_kernel(alpha: f64, x: f64, y: f64) -> PyResult<f64> {
    reference::bessel_kernel(alpha, x, y).map_err(to_py)
}

/// Hard-edge limit kernel `K^(α,θ)(x, y)`.
#[pyfunction]
fn laguerre_limit_kernel(alpha: f64, theta: f64, x: f64, y: f64) -> PyResult<f64> {
    reference::laguerre_limit_kernel(alpha, theta, x, y, SeriesPolicy::default()).map_err(to_py)
}

#[pyfunction]
fn hermite_limit_kernel(alpha: f64, theta: f64, x: f64, y: f64) -> PyResult<f64> {
    reference::hermite_limit_kernel(alpha, theta, x, y, SeriesPolicy::default()).map_err(to_py)
}

#[pyfunction]
fn semicircle(radius: f64, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let d = ReferenceDensity::semicircle(radius).map_err(to_py)?;
    Ok(xs.iter().map(|&x| d.eval(x)).collect())
}

#[pyfunction]
fn marchenko_pastur(ratio: f64, variance: f64, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let d = ReferenceDensity::marchenko_pastur(ratio, variance).map_err(to_py)?;
    Ok(xs.iter().map(|&x| d.eval(x)).collect())
}

#[pymodule]
fn loggas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(sine_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(bessel_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(laguerre_limit_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(hermite_limit_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(semicircle, m)?)?;
    m.add_function(wrap_pyfunction!(marchenko_pastur, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
