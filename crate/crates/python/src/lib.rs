//! Python bindings for `repps`, importable as `pyrepps`.
//!
//! Library errors raise `pyrepps.ReppsError` (a `ValueError`), except file
//! system failures, which raise `OSError`. Long-running calls (search,
//! generation) release the interpreter while they run.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use repps::datagen::{generate as gen_data, GenSpec};
use repps::dataset::{read_counter_trace, read_dataset, read_power_trace};
use repps::regress::{predict_dataset, Algorithm};
use repps::search::{kfold_split as split, run_search, SearchConfig, SearchReport};
use repps::{CounterName, CounterTrace, Dataset, FitDiagnostics, PowerModel, PowerTrace, SampleRow, SyncConfig};

create_exception!(pyrepps, ReppsError, PyValueError);

fn err(e: repps::Error) -> PyErr {
    match e {
        repps::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e => ReppsError::new_err(e.to_string()),
    }
}

fn names(list: Vec<String>) -> PyResult<Vec<CounterName>> {
    list.into_iter().map(|n| CounterName::new(n).map_err(err)).collect()
}

fn strings(list: &[CounterName]) -> Vec<String> {
    list.iter().map(|c| c.as_str().to_string()).collect()
}

/// Cumulative 32-bit counter samples keyed by cycle count.
#[pyclass(frozen, skip_from_py_object, name = "CounterTrace", module = "pyrepps")]
#[derive(Clone)]
struct PyCounterTrace(CounterTrace);

#[pymethods]
impl PyCounterTrace {
    #[new]
    fn new(run_id: String, counters: Vec<String>, time_keys: Vec<u64>, values: Vec<Vec<u32>>) -> PyResult<Self> {
        CounterTrace::new(run_id, names(counters)?, time_keys, values)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        read_counter_trace(&path).map(Self).map_err(err)
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_csv(&path).map_err(err)
    }

    #[getter]
    fn run_id(&self) -> &str {
        self.0.run_id()
    }

    #[getter]
    fn counters(&self) -> Vec<String> {
        strings(self.0.counters())
    }

    #[getter]
    fn time_keys(&self) -> Vec<u64> {
        self.0.time_keys().to_vec()
    }

    fn row(&self, i: usize) -> PyResult<Vec<u32>> {
        if i >= self.0.len() {
            return Err(pyo3::exceptions::PyIndexError::new_err(i));
        }
        Ok(self.0.row(i).to_vec())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("CounterTrace(run_id={:?}, samples={}, counters={})", self.0.run_id(), self.0.len(), self.0.counters().len())
    }
}

/// Power samples, with optional frequency, keyed by cycle count.
#[pyclass(frozen, skip_from_py_object, name = "PowerTrace", module = "pyrepps")]
#[derive(Clone)]
struct PyPowerTrace(PowerTrace);

#[pymethods]
impl PyPowerTrace {
    #[new]
    #[pyo3(signature = (run_id, time_keys, power_w, freq_mhz=None))]
    fn new(run_id: String, time_keys: Vec<u64>, power_w: Vec<f64>, freq_mhz: Option<Vec<f64>>) -> PyResult<Self> {
        PowerTrace::new(run_id, time_keys, power_w, freq_mhz).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        read_power_trace(&path).map(Self).map_err(err)
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_csv(&path).map_err(err)
    }

    #[getter]
    fn run_id(&self) -> &str {
        self.0.run_id()
    }

    #[getter]
    fn time_keys(&self) -> Vec<u64> {
        self.0.time_keys().to_vec()
    }

    #[getter]
    fn power_w(&self) -> Vec<f64> {
        self.0.power_w().to_vec()
    }

    #[getter]
    fn freq_mhz(&self) -> Option<Vec<f64>> {
        self.0.freq_mhz().map(<[f64]>::to_vec)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("PowerTrace(run_id={:?}, samples={})", self.0.run_id(), self.0.len())
    }
}

type RowTuple = (String, u64, Vec<u64>, f64, Option<f64>);
type SampleTuple = (String, u64, f64, f64);

/// Synchronised samples: one row per interval with counter deltas and power.
#[pyclass(frozen, skip_from_py_object, name = "Dataset", module = "pyrepps")]
#[derive(Clone)]
struct PyDataset(Dataset);

#[pymethods]
impl PyDataset {
    /// Builds a dataset from `(run_id, time_key, deltas, power_w, freq_mhz)` rows.
    #[new]
    fn new(counters: Vec<String>, rows: Vec<RowTuple>) -> PyResult<Self> {
        let rows = rows
            .into_iter()
            .map(|(run_id, time_key, deltas, power_w, freq_mhz)| SampleRow {
                time_key,
                deltas,
                power_w,
                freq_mhz,
                run_id,
            })
            .collect();
        Dataset::new(names(counters)?, rows, "python").map(Self).map_err(err)
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        read_dataset(&path).map(Self).map_err(err)
    }

    /// Concatenates datasets; with `prefix_runs`, run ids become `"<i>:<run>"`.
    #[staticmethod]
    #[pyo3(signature = (parts, prefix_runs=true))]
    fn concat(parts: Vec<PyRef<'_, PyDataset>>, prefix_runs: bool) -> PyResult<Self> {
        let parts = parts.iter().map(|p| p.0.clone()).collect();
        Dataset::concat(parts, prefix_runs).map(Self).map_err(err)
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_csv(&path).map_err(err)
    }

    #[getter]
    fn counters(&self) -> Vec<String> {
        strings(self.0.counters())
    }

    fn power(&self) -> Vec<f64> {
        self.0.power()
    }

    fn run_ids(&self) -> Vec<String> {
        self.0.run_ids().into_iter().map(str::to_string).collect()
    }

    /// Deltas of one counter across all rows.
    fn column(&self, counter: &str) -> PyResult<Vec<u64>> {
        let name = CounterName::new(counter).map_err(err)?;
        let j = self
            .0
            .counter_index(&name)
            .ok_or_else(|| err(repps::Error::UnknownCounter(counter.to_string())))?;
        Ok(self.0.rows().iter().map(|r| r.deltas[j]).collect())
    }

    fn rows(&self) -> Vec<RowTuple> {
        self.0
            .rows()
            .iter()
            .map(|r| (r.run_id.clone(), r.time_key, r.deltas.clone(), r.power_w, r.freq_mhz))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: PyRef<'_, PyDataset>) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Dataset(rows={}, counters={})", self.0.len(), self.0.counters().len())
    }
}

/// Linear power model `P = intercept + sum(coefficient * counter)`.
#[pyclass(frozen, skip_from_py_object, name = "PowerModel", module = "pyrepps")]
#[derive(Clone)]
struct PyPowerModel(PowerModel);

#[pymethods]
impl PyPowerModel {
    #[staticmethod]
    fn pmc(intercept_w: f64, terms: Vec<(String, f64)>) -> PyResult<Self> {
        let terms = terms
            .into_iter()
            .map(|(n, c)| CounterName::new(n).map(|n| (n, c)))
            .collect::<repps::Result<_>>()
            .map_err(err)?;
        PowerModel::pmc(intercept_w, terms).map(Self).map_err(err)
    }

    #[staticmethod]
    fn freq_baseline(intercept_w: f64, coefficient: f64) -> PyResult<Self> {
        PowerModel::freq_baseline(intercept_w, coefficient).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        PowerModel::from_json(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn read_json(path: PathBuf) -> PyResult<Self> {
        PowerModel::read_json(&path).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    fn write_json(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_json(&path).map_err(err)
    }

    /// `"pmc"` or `"freq_baseline"`.
    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            repps::regress::ModelKind::Pmc => "pmc",
            repps::regress::ModelKind::FreqBaseline => "freq_baseline",
        }
    }

    #[getter]
    fn intercept_w(&self) -> f64 {
        self.0.intercept_w()
    }

    #[getter]
    fn terms(&self) -> Vec<(String, f64)> {
        self.0
            .terms()
            .iter()
            .map(|t| (t.counter.clone(), t.coefficient))
            .collect()
    }

    /// Predicted watts for every row of `dataset`.
    fn predict(&self, dataset: PyRef<'_, PyDataset>) -> PyResult<Vec<f64>> {
        predict_dataset(&self.0, &dataset.0).map_err(err)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("PowerModel({})", self.0)
    }
}

/// Outcome of a counter-subset search.
#[pyclass(frozen, name = "SearchReport", module = "pyrepps")]
struct PySearchReport(SearchReport);

#[pymethods]
impl PySearchReport {
    #[getter]
    fn selected(&self) -> Vec<String> {
        strings(&self.0.selected)
    }

    #[getter]
    fn final_cv_mape_pct(&self) -> Option<f64> {
        self.0.final_cv_mape_pct
    }

    #[getter]
    fn final_model(&self) -> PyPowerModel {
        PyPowerModel(self.0.final_model.clone())
    }

    #[getter]
    fn stop_reason(&self) -> String {
        serde_label(&self.0.stop_reason)
    }

    #[getter]
    fn fold_mode(&self) -> String {
        serde_label(&self.0.fold_mode)
    }

    /// `(action, counter, cv_mape_pct)` for each accepted step.
    #[getter]
    fn iterations(&self) -> Vec<(String, String, f64)> {
        self.0
            .iterations
            .iter()
            .map(|it| (serde_label(&it.action), it.counter.as_str().to_string(), it.cv_mape_pct))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("SearchReport(selected={:?}, cv_mape_pct={:?})", self.selected(), self.0.final_cv_mape_pct)
    }
}

fn serde_label<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn diagnostics<'py>(py: Python<'py>, d: &FitDiagnostics) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("train_mape_pct", d.train_mape_pct)?;
    dict.set_item("residual_sse", d.residual_sse)?;
    dict.set_item("condition_warning", d.condition_warning)?;
    Ok(dict)
}

/// Joins a counter trace with a power trace into a dataset.
#[pyfunction]
#[pyo3(signature = (pmc, power, key_tolerance=0, drop_unmatched=true))]
fn synchronize(
    pmc: PyRef<'_, PyCounterTrace>,
    power: PyRef<'_, PyPowerTrace>,
    key_tolerance: u64,
    drop_unmatched: bool,
) -> PyResult<PyDataset> {
    let cfg = SyncConfig {
        key_tolerance,
        drop_unmatched,
    };
    repps::synchronize(&pmc.0, &power.0, &cfg).map(PyDataset).map_err(err)
}

/// Key-matching statistics as a dict.
#[pyfunction]
#[pyo3(signature = (pmc, power, key_tolerance=0))]
fn coverage_report<'py>(
    py: Python<'py>,
    pmc: PyRef<'_, PyCounterTrace>,
    power: PyRef<'_, PyPowerTrace>,
    key_tolerance: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SyncConfig {
        key_tolerance,
        ..SyncConfig::default()
    };
    let r = repps::coverage_report(&pmc.0, &power.0, &cfg);
    let dict = PyDict::new(py);
    dict.set_item("pmc_keys", r.pmc_keys)?;
    dict.set_item("power_keys", r.power_keys)?;
    dict.set_item("matched", r.matched)?;
    dict.set_item("unmatched_pmc", r.unmatched_pmc)?;
    dict.set_item("unmatched_power", r.unmatched_power)?;
    dict.set_item("ambiguous", r.ambiguous)?;
    dict.set_item("match_fraction", r.match_fraction)?;
    Ok(dict)
}

/// Least-squares fit on a fixed predictor list. Returns `(model, diagnostics)`.
#[pyfunction]
fn fit_ols<'py>(
    py: Python<'py>,
    dataset: PyRef<'_, PyDataset>,
    predictors: Vec<String>,
) -> PyResult<(PyPowerModel, Bound<'py, PyDict>)> {
    let (m, d) = repps::fit_ols(&dataset.0, &names(predictors)?).map_err(err)?;
    Ok((PyPowerModel(m), diagnostics(py, &d)?))
}

/// Power regressed on sensor frequency alone. Returns `(model, diagnostics)`.
#[pyfunction]
fn fit_freq_baseline<'py>(
    py: Python<'py>,
    dataset: PyRef<'_, PyDataset>,
) -> PyResult<(PyPowerModel, Bound<'py, PyDict>)> {
    let (m, d) = repps::fit_freq_baseline(&dataset.0).map_err(err)?;
    Ok((PyPowerModel(m), diagnostics(py, &d)?))
}

/// Mean absolute percentage error, in percent.
#[pyfunction]
fn mape(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    repps::mape(&actual, &predicted).map_err(err)
}

/// Returns `(mape_pct, [(run_id, time_key, actual_w, predicted_w), ...])`.
#[pyfunction]
#[pyo3(signature = (model, dataset, trace_out=None))]
fn validate(
    model: PyRef<'_, PyPowerModel>,
    dataset: PyRef<'_, PyDataset>,
    trace_out: Option<PathBuf>,
) -> PyResult<(f64, Vec<SampleTuple>)> {
    let v = repps::validate(&model.0, &dataset.0).map_err(err)?;
    if let Some(path) = trace_out {
        v.write_trace_csv(&path).map_err(err)?;
    }
    let samples = v
        .samples
        .into_iter()
        .map(|s| (s.run_id, s.time_key, s.actual_w, s.predicted_w))
        .collect();
    Ok((v.mape_pct, samples))
}

/// Returns `(mode, folds)` where mode is `"runs"` or `"blocks"`.
#[pyfunction]
#[pyo3(signature = (dataset, k, seed=0))]
fn kfold_split(dataset: PyRef<'_, PyDataset>, k: usize, seed: u64) -> PyResult<(String, Vec<Vec<usize>>)> {
    let s = split(&dataset.0, k, seed).map_err(err)?;
    Ok((serde_label(&s.mode), s.folds))
}

#[pyfunction]
#[pyo3(signature = (dataset, predictors, k, seed=0))]
fn cv_score(dataset: PyRef<'_, PyDataset>, predictors: Vec<String>, k: usize, seed: u64) -> PyResult<f64> {
    repps::search::cv_score(&dataset.0, &names(predictors)?, k, seed).map_err(err)
}

/// Runs bottom-up, top-down or exhaustive counter selection.
#[pyfunction]
#[pyo3(signature = (
    dataset,
    algorithm="bottom_up",
    folds=10,
    initial_set=vec![],
    max_events=None,
    candidate_pool=vec![],
    fold_seed=0,
    parallel=true,
))]
#[allow(clippy::too_many_arguments)]
fn search(
    py: Python<'_>,
    dataset: PyRef<'_, PyDataset>,
    algorithm: &str,
    folds: usize,
    initial_set: Vec<String>,
    max_events: Option<usize>,
    candidate_pool: Vec<String>,
    fold_seed: u64,
    parallel: bool,
) -> PyResult<PySearchReport> {
    let algorithm: Algorithm = algorithm.parse().map_err(err)?;
    let cfg = SearchConfig {
        algorithm,
        folds,
        initial_set: names(initial_set)?,
        max_events,
        candidate_pool: names(candidate_pool)?,
        fold_seed,
        parallel,
    };
    let ds = &dataset.0;
    py.detach(|| run_search(ds, &cfg)).map(PySearchReport).map_err(err)
}

/// JSON of the built-in generator spec, for editing before `generate`.
#[pyfunction]
fn default_gen_spec() -> PyResult<String> {
    serde_json::to_string_pretty(&GenSpec::default()).map_err(|e| err(e.into()))
}

/// Generates synthetic traces from a JSON spec (default spec if omitted).
/// Returns `([(CounterTrace, PowerTrace), ...], ground_truth_dataset)`.
#[pyfunction]
#[pyo3(signature = (spec_json=None))]
fn generate(py: Python<'_>, spec_json: Option<&str>) -> PyResult<(Vec<(PyCounterTrace, PyPowerTrace)>, PyDataset)> {
    let spec = match spec_json {
        Some(text) => GenSpec::from_json(text).map_err(err)?,
        None => GenSpec::default(),
    };
    let g = py.detach(|| gen_data(&spec)).map_err(err)?;
    let traces = g
        .traces
        .into_iter()
        .map(|(c, p)| (PyCounterTrace(c), PyPowerTrace(p)))
        .collect();
    Ok((traces, PyDataset(g.dataset)))
}

#[pymodule]
fn pyrepps(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ReppsError", m.py().get_type::<ReppsError>())?;
    m.add_class::<PyCounterTrace>()?;
    m.add_class::<PyPowerTrace>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPowerModel>()?;
    m.add_class::<PySearchReport>()?;
    m.add_function(wrap_pyfunction!(synchronize, m)?)?;
    m.add_function(wrap_pyfunction!(coverage_report, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ols, m)?)?;
    m.add_function(wrap_pyfunction!(fit_freq_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(cv_score, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(default_gen_spec, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
