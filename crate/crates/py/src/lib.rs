//! Python bindings for the cache update planner: model construction, the
//! per-file solve, the multiplier search with policy mixing, and the seeded
//! simulator. Build with `cargo build --release -p aoi-cache-py` and place
//! the resulting `libaoi_cache_py.so` on the Python path as
//! `aoi_cache_py.so` (see python/smoke_test.py).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use aoi_cache::{cmdp, lagrange, model, oracle, policies, sim, Error};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mat_to_rows(m: &aoi_cache::linalg::Mat) -> Vec<Vec<f64>> {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

#[pyclass(frozen, from_py_object, name = "PopularityChain")]
#[derive(Clone)]
struct PyPopularityChain {
    inner: model::PopularityChain,
}

#[pymethods]
impl PyPopularityChain {
    #[new]
    fn new(transition: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyPopularityChain {
            inner: model::PopularityChain::new(transition).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn num_modes(&self) -> usize {
        self.inner.num_modes()
    }

    fn transition(&self) -> Vec<Vec<f64>> {
        mat_to_rows(self.inner.matrix())
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        model::stationary_distribution(&self.inner).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("PopularityChain(modes={})", self.inner.num_modes())
    }
}

#[pyclass(frozen, from_py_object, name = "FileModel")]
#[derive(Clone)]
struct PyFileModel {
    inner: model::FileModel,
}

#[pymethods]
impl PyFileModel {
    #[new]
    fn new(chain: PyPopularityChain, mode_weight: Vec<f64>) -> PyResult<Self> {
        Ok(PyFileModel {
            inner: model::FileModel::new(chain.inner, mode_weight).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn mode_weight(&self) -> Vec<f64> {
        self.inner.mode_weight.clone()
    }

    #[getter]
    fn chain(&self) -> PyPopularityChain {
        PyPopularityChain {
            inner: self.inner.chain.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!("FileModel(weights={:?})", self.inner.mode_weight)
    }
}

#[pyclass(frozen, from_py_object, name = "Ensemble")]
#[derive(Clone)]
struct PyEnsemble {
    inner: model::Ensemble,
}

#[pymethods]
impl PyEnsemble {
    #[new]
    fn new(files: Vec<PyFileModel>, bandwidth: usize) -> PyResult<Self> {
        let files = files.into_iter().map(|f| f.inner).collect();
        Ok(PyEnsemble {
            inner: model::Ensemble::new(files, bandwidth).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn num_files(&self) -> usize {
        self.inner.num_files()
    }

    #[getter]
    fn bandwidth(&self) -> usize {
        self.inner.bandwidth
    }

    fn file(&self, index: usize) -> PyResult<PyFileModel> {
        self.inner
            .files
            .get(index)
            .map(|f| PyFileModel { inner: f.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("no file at index {index}")))
    }

    fn __repr__(&self) -> String {
        format!(
            "Ensemble(files={}, bandwidth={})",
            self.inner.num_files(),
            self.inner.bandwidth
        )
    }
}

#[pyclass(frozen, name = "OccupationSolution")]
struct PyOccupationSolution {
    inner: cmdp::OccupationSolution,
}

#[pymethods]
impl PyOccupationSolution {
    #[getter]
    fn multiplier(&self) -> f64 {
        self.inner.multiplier
    }

    #[getter]
    fn age_bound(&self) -> usize {
        self.inner.age_bound
    }

    #[getter]
    fn aoi_cost(&self) -> f64 {
        self.inner.aoi_cost
    }

    #[getter]
    fn download_fraction(&self) -> f64 {
        self.inner.download_fraction
    }

    fn mu(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.inner.mu)
    }

    fn nu(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.inner.nu)
    }

    fn lagrangian_cost(&self) -> f64 {
        self.inner.lagrangian_cost()
    }

    fn __repr__(&self) -> String {
        format!(
            "OccupationSolution(W={}, aoi={:.6}, rate={:.6})",
            self.inner.multiplier, self.inner.aoi_cost, self.inner.download_fraction
        )
    }
}

#[pyclass(frozen, from_py_object, name = "StationaryPolicy")]
#[derive(Clone)]
struct PyStationaryPolicy {
    inner: cmdp::StationaryPolicy,
}

#[pymethods]
impl PyStationaryPolicy {
    #[getter]
    fn age_bound(&self) -> usize {
        self.inner.age_bound
    }

    fn xi(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.inner.xi)
    }

    /// Per-mode thresholds when the policy is threshold-shaped, else None.
    fn thresholds(&self) -> Option<Vec<usize>> {
        cmdp::threshold_profile(&self.inner)
    }
}

#[pyclass(frozen, name = "MultiplierResult")]
struct PyMultiplierResult {
    inner: lagrange::MultiplierResult,
}

#[pymethods]
impl PyMultiplierResult {
    #[getter]
    fn w_star(&self) -> f64 {
        self.inner.w_star
    }

    #[getter]
    fn w_left(&self) -> f64 {
        self.inner.w_left
    }

    #[getter]
    fn w_right(&self) -> f64 {
        self.inner.w_right
    }

    #[getter]
    fn d_left(&self) -> f64 {
        self.inner.d_left
    }

    #[getter]
    fn d_right(&self) -> f64 {
        self.inner.d_right
    }

    /// Mixing coefficient on the left (higher-rate) policy.
    #[getter]
    fn mixing_coefficient(&self) -> f64 {
        self.inner.lambda
    }

    /// Every (W, ensemble download rate) evaluation of the search.
    fn search_trace(&self) -> Vec<(f64, f64)> {
        self.inner.search_trace.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "MultiplierResult(w_star={:.6}, lambda={:.6})",
            self.inner.w_star, self.inner.lambda
        )
    }
}

#[pyclass(frozen, name = "RelaxedPolicy")]
struct PyRelaxedPolicy {
    inner: lagrange::RelaxedPolicy,
}

#[pymethods]
impl PyRelaxedPolicy {
    #[getter]
    fn analytic_aoi(&self) -> f64 {
        self.inner.analytic_aoi
    }

    #[getter]
    fn analytic_download_rate(&self) -> f64 {
        self.inner.analytic_download_rate
    }

    #[getter]
    fn per_file_aoi(&self) -> Vec<f64> {
        self.inner.per_file_aoi.clone()
    }

    #[getter]
    fn per_file_download(&self) -> Vec<f64> {
        self.inner.per_file_download.clone()
    }

    fn file_policy(&self, index: usize) -> PyResult<PyStationaryPolicy> {
        self.inner
            .policies
            .get(index)
            .map(|p| PyStationaryPolicy { inner: p.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("no file at index {index}")))
    }

    fn __repr__(&self) -> String {
        format!(
            "RelaxedPolicy(aoi={:.6}, rate={:.6})",
            self.inner.analytic_aoi, self.inner.analytic_download_rate
        )
    }
}

#[pyclass(frozen, name = "SimulationReport")]
struct PySimulationReport {
    inner: sim::SimulationReport,
}

#[pymethods]
impl PySimulationReport {
    #[getter]
    fn avg_weighted_aoi(&self) -> f64 {
        self.inner.avg_weighted_aoi
    }

    #[getter]
    fn avg_downloads_per_slot(&self) -> f64 {
        self.inner.avg_downloads_per_slot
    }

    #[getter]
    fn max_downloads_in_any_slot(&self) -> usize {
        self.inner.max_downloads_in_any_slot
    }

    #[getter]
    fn per_file_update_frequency(&self) -> Vec<f64> {
        self.inner.per_file_update_frequency.clone()
    }

    #[getter]
    fn max_age(&self) -> u32 {
        self.inner.max_age
    }

    /// (mean, variance) of the per-slot decision-set size, when recorded.
    #[getter]
    fn candidate_stats(&self) -> Option<(f64, f64)> {
        self.inner.candidate_stats.map(|s| (s.mean, s.variance))
    }

    fn per_file_mode_occupancy(&self) -> Vec<Vec<f64>> {
        self.inner.per_file_mode_occupancy.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "SimulationReport(aoi={:.6}, downloads={:.4}, max={})",
            self.inner.avg_weighted_aoi,
            self.inner.avg_downloads_per_slot,
            self.inner.max_downloads_in_any_slot
        )
    }
}

#[pyfunction]
fn two_mode_chain(q: f64) -> PyResult<PyPopularityChain> {
    Ok(PyPopularityChain {
        inner: model::two_mode_chain(q).map_err(to_py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (n, alpha, q, m, low_factor = 0.2, high_factor = 1.8))]
fn zipf_ensemble(
    n: usize,
    alpha: f64,
    q: f64,
    m: usize,
    low_factor: f64,
    high_factor: f64,
) -> PyResult<PyEnsemble> {
    Ok(PyEnsemble {
        inner: model::zipf_ensemble(n, alpha, q, low_factor, high_factor, m)
            .map_err(to_py_err)?,
    })
}

#[pyfunction]
fn homogeneous_ensemble(n: usize, m: usize, file: PyFileModel) -> PyResult<PyEnsemble> {
    Ok(PyEnsemble {
        inner: model::homogeneous_ensemble(n, m, file.inner).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn age_upper_bound(file: PyFileModel, w: f64) -> usize {
    cmdp::age_upper_bound(&file.inner, w)
}

#[pyfunction]
fn solve_per_file(file: PyFileModel, w: f64) -> PyResult<PyOccupationSolution> {
    Ok(PyOccupationSolution {
        inner: cmdp::solve_per_file(&file.inner, w).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn extract_policy(solution: &PyOccupationSolution) -> PyStationaryPolicy {
    PyStationaryPolicy {
        inner: cmdp::extract_policy(&solution.inner),
    }
}

#[pyfunction]
fn analytic_performance(policy: &PyStationaryPolicy, file: PyFileModel) -> PyResult<(f64, f64)> {
    cmdp::analytic_performance(&policy.inner, &file.inner).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (ensemble, tol = 1e-8))]
fn find_multiplier(ensemble: &PyEnsemble, tol: f64) -> PyResult<PyMultiplierResult> {
    Ok(PyMultiplierResult {
        inner: lagrange::find_multiplier(&ensemble.inner, tol).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn build_relaxed_policy(
    ensemble: &PyEnsemble,
    result: &PyMultiplierResult,
) -> PyResult<PyRelaxedPolicy> {
    Ok(PyRelaxedPolicy {
        inner: lagrange::build_relaxed_policy(&ensemble.inner, &result.inner)
            .map_err(to_py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (ensemble, tol = 1e-8))]
fn solve_relaxed(
    ensemble: &PyEnsemble,
    tol: f64,
) -> PyResult<(PyMultiplierResult, PyRelaxedPolicy)> {
    let (res, pol) = lagrange::solve_relaxed(&ensemble.inner, tol).map_err(to_py_err)?;
    Ok((
        PyMultiplierResult { inner: res },
        PyRelaxedPolicy { inner: pol },
    ))
}

/// Runs one seeded simulation. `policy` is one of "relaxed", "truncated",
/// "sqrt", "greedy"; the first two need `relaxed`.
#[pyfunction]
#[pyo3(signature = (ensemble, policy, horizon, warmup, seed,
                    relaxed = None, record_candidate_sizes = false))]
fn simulate(
    ensemble: &PyEnsemble,
    policy: &str,
    horizon: u64,
    warmup: u64,
    seed: u64,
    relaxed: Option<&PyRelaxedPolicy>,
    record_candidate_sizes: bool,
) -> PyResult<PySimulationReport> {
    let policy = policies::policy_by_name(policy, &ensemble.inner, relaxed.map(|r| &r.inner))
        .map_err(to_py_err)?;
    let cfg = sim::SimulationConfig {
        horizon,
        warmup,
        seed,
        record_candidate_sizes,
    };
    Ok(PySimulationReport {
        inner: sim::simulate(&ensemble.inner, policy.as_ref(), &cfg).map_err(to_py_err)?,
    })
}

/// Relative-value-iteration gain for the per-file problem (validation aid).
#[pyfunction]
fn rvi_gain(file: PyFileModel, w: f64, x_ub: usize) -> PyResult<f64> {
    Ok(oracle::rvi_solve(&file.inner, w, x_ub)
        .map_err(to_py_err)?
        .average_cost)
}

/// Best deterministic threshold vector and its cost (validation aid).
#[pyfunction]
fn enumerate_thresholds(file: PyFileModel, w: f64, x_ub: usize) -> PyResult<(Vec<usize>, f64)> {
    oracle::enumerate_thresholds(&file.inner, w, x_ub).map_err(to_py_err)
}

#[pymodule]
fn aoi_cache_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPopularityChain>()?;
    m.add_class::<PyFileModel>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyOccupationSolution>()?;
    m.add_class::<PyStationaryPolicy>()?;
    m.add_class::<PyMultiplierResult>()?;
    m.add_class::<PyRelaxedPolicy>()?;
    m.add_class::<PySimulationReport>()?;
    m.add_function(wrap_pyfunction!(two_mode_chain, m)?)?;
    m.add_function(wrap_pyfunction!(zipf_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneous_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(age_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(solve_per_file, m)?)?;
    m.add_function(wrap_pyfunction!(extract_policy, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_performance, m)?)?;
    m.add_function(wrap_pyfunction!(find_multiplier, m)?)?;
    m.add_function(wrap_pyfunction!(build_relaxed_policy, m)?)?;
    m.add_function(wrap_pyfunction!(solve_relaxed, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(rvi_gain, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_thresholds, m)?)?;
    Ok(())
}
