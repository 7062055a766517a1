//! Python bindings: datasets, the synthetic generator, training,
//! prediction, evaluation and the AUC metric.

use dytgraph::config::KeyValues;
use dytgraph::eval::{self, TieMode};
use dytgraph::model::{self, EpochRecord, ModelConfig, PreparedData};
use dytgraph::numeric::ParameterStore;
use dytgraph::snapshots::{self, build_windows, forecast_sample, TrendSample};
use dytgraph::synthetic::{self, GeneratorConfig};
use dytgraph::Error;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyTuple};
use std::fs::File;
use std::io::{BufReader, BufWriter};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn value_text(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if v.is_instance_of::<PyBool>() {
        return Ok(if v.extract::<bool>()? { "true" } else { "false" }.to_string());
    }
    if v.is_instance_of::<PyList>() || v.is_instance_of::<PyTuple>() {
        let parts = v.try_iter()?.map(|item| Ok(item?.str()?.to_string())).collect::<PyResult<Vec<_>>>()?;
        return Ok(parts.join(","));
    }
    Ok(v.str()?.to_string())
}

fn key_values(settings: Option<&Bound<'_, PyDict>>) -> PyResult<KeyValues> {
    let mut kv = KeyValues::default();
    if let Some(d) = settings {
        for (k, v) in d.iter() {
            kv.set(&k.extract::<String>()?, value_text(&v)?);
        }
    }
    Ok(kv)
}

/// Interaction records with their community and attribute catalogs.
#[pyclass(module = "dytgraph", name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: snapshots::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: snapshots::Dataset::from_path(path).map_err(to_py)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| to_py(e.into()))?;
        self.inner.write_csv(BufWriter::new(file)).map_err(to_py)
    }

    #[getter]
    fn communities(&self) -> Vec<String> {
        self.inner.catalogs().communities().to_vec()
    }

    #[getter]
    fn attributes(&self) -> Vec<String> {
        self.inner.catalogs().attributes().to_vec()
    }

    #[getter]
    fn month_range(&self) -> Option<(u32, u32)> {
        self.inner.month_range()
    }

    /// `communities × attributes` sales of `month`.
    fn sales(&self, month: u32) -> Vec<Vec<f64>> {
        nested(&self.inner.sales_matrix(month))
    }

    /// `(labels, mask)` for `target`, each `communities × attributes`.
    #[pyo3(signature = (target, k_percent = 50.0))]
    fn labels(&self, target: u32, k_percent: f64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let l = snapshots::compute_labels(&self.inner, target, k_percent).map_err(to_py)?;
        Ok((nested(&l.labels), nested(&l.mask)))
    }

    /// Drops attributes selling fewer than `threshold` units in the
    /// reference month (the last month by default).
    #[pyo3(signature = (threshold, reference_month = None))]
    fn filter_min_sales(&self, threshold: u64, reference_month: Option<u32>) -> PyResult<Self> {
        let month = reference_month
            .or_else(|| self.inner.month_range().map(|(_, last)| last))
            .ok_or_else(|| PyValueError::new_err("dataset has no months"))?;
        Ok(Self {
            inner: self.inner.filter_min_sales(threshold, month).map_err(to_py)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.records().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(communities={}, attributes={}, months={})",
            self.inner.num_communities(),
            self.inner.num_attributes(),
            self.inner.num_months()
        )
    }
}

fn nested(m: &dytgraph::numeric::DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Synthetic dataset and its surge annotations `(month, community, attribute)`.
#[pyfunction]
#[pyo3(signature = (settings = None))]
fn generate(settings: Option<&Bound<'_, PyDict>>) -> PyResult<(PyDataset, Vec<(u32, String, String)>)> {
    let cfg = GeneratorConfig::from_key_values(&key_values(settings)?).map_err(to_py)?;
    let data = synthetic::generate(&cfg).map_err(to_py)?;
    let catalogs = data.dataset.catalogs();
    let annotations = data
        .annotations
        .iter()
        .map(|a| (a.month, catalogs.community(a.community).to_string(), catalogs.attribute(a.attribute).to_string()))
        .collect();
    Ok((PyDataset { inner: data.dataset }, annotations))
}

/// Model settings; keyword arguments override the defaults.
#[pyclass(module = "dytgraph", name = "ModelConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (**settings))]
    fn new(settings: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Ok(Self {
            inner: ModelConfig::from_key_values(&key_values(settings)?).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let kv = KeyValues::from_path(path).map_err(to_py)?;
        Ok(Self {
            inner: ModelConfig::from_key_values(&kv).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_config_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    fn __repr__(&self) -> String {
        format!("ModelConfig({})", self.inner.to_config_string().trim().replace('\n', ", "))
    }
}

/// Trained parameters with the config that shapes them.
#[pyclass(module = "dytgraph", name = "Model")]
struct PyModel {
    store: ParameterStore,
    config: ModelConfig,
    log: Vec<EpochRecord>,
    best_epoch: usize,
    best_validation_auc: Option<f64>,
}

impl PyModel {
    fn sample(&self, dataset: &snapshots::Dataset, target: Option<u32>) -> PyResult<TrendSample> {
        let split = build_windows(dataset, self.config.window, self.config.k_percent).map_err(to_py)?;
        let mut all: Vec<TrendSample> = split.train.into_iter().chain(split.valid).chain(split.test).collect();
        match target {
            None => Ok(all.pop().expect("at least one window")),
            Some(t) => all
                .into_iter()
                .find(|s| s.target_month == t)
                .ok_or_else(|| PyValueError::new_err(format!("month {t} is not the target of any labeled window"))),
        }
    }
}

#[pymethods]
impl PyModel {
    /// Trains on every window but the last two (validation and test).
    /// With `grid=True` searches the learning-rate × α grids.
    #[staticmethod]
    #[pyo3(signature = (dataset, config, grid = false))]
    fn train(py: Python<'_>, dataset: &PyDataset, config: &PyModelConfig, grid: bool) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let ds = &dataset.inner;
        py.detach(|| {
            let split = build_windows(ds, cfg.window, cfg.k_percent)?;
            let data = PreparedData::new(ds);
            if grid {
                let g = model::grid_search(&data, &split.train, &split.valid, &cfg)?;
                Ok((g.outcome, g.config))
            } else {
                Ok((model::train(&data, &split.train, &split.valid, &cfg)?, cfg))
            }
        })
        .map(|(outcome, config)| Self {
            store: outcome.store,
            config,
            log: outcome.log,
            best_epoch: outcome.best_epoch,
            best_validation_auc: outcome.best_validation_auc,
        })
        .map_err(to_py)
    }

    #[staticmethod]
    fn load(checkpoint: &str, config: &PyModelConfig) -> PyResult<Self> {
        let file = File::open(checkpoint).map_err(|e| to_py(e.into()))?;
        let store = ParameterStore::read_checkpoint(BufReader::new(file)).map_err(to_py)?;
        Ok(Self {
            store,
            config: config.inner.clone(),
            log: Vec::new(),
            best_epoch: 0,
            best_validation_auc: None,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let file = File::create(path).map_err(|e| to_py(e.into()))?;
        self.store.write_checkpoint(BufWriter::new(file)).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig {
            inner: self.config.clone(),
        }
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    #[getter]
    fn best_validation_auc(&self) -> Option<f64> {
        self.best_validation_auc
    }

    /// One `(epoch, train_loss, validation_auc)` tuple per epoch.
    #[getter]
    fn epoch_log(&self) -> Vec<(usize, f64, Option<f64>)> {
        self.log.iter().map(|r| (r.epoch, r.train_loss, r.validation_auc)).collect()
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// `communities × attributes` scores for the window targeting `target`.
    #[pyo3(signature = (dataset, target = None))]
    fn scores(&self, dataset: &PyDataset, target: Option<u32>) -> PyResult<Vec<Vec<f64>>> {
        model::check_compatible(&self.store, &self.config, dataset.inner.catalogs()).map_err(to_py)?;
        let sample = self.sample(&dataset.inner, target)?;
        let data = PreparedData::new(&dataset.inner);
        let p = model::predict(&self.store, &self.config, &data, &sample).map_err(to_py)?;
        Ok(nested(&p.scores))
    }

    /// Top `top` `(attribute, score)` per community for the month after the data ends.
    #[pyo3(signature = (dataset, top = 10))]
    fn predict(&self, dataset: &PyDataset, top: usize) -> PyResult<Vec<(String, Vec<(String, f64)>)>> {
        let ds = &dataset.inner;
        model::check_compatible(&self.store, &self.config, ds.catalogs()).map_err(to_py)?;
        let sample = forecast_sample(ds, self.config.window).map_err(to_py)?;
        let p = model::predict(&self.store, &self.config, &PreparedData::new(ds), &sample).map_err(to_py)?;
        let catalogs = ds.catalogs();
        Ok((0..catalogs.num_communities())
            .map(|c| {
                let tags = p
                    .top(c, top)
                    .iter()
                    .map(|&j| (catalogs.attribute(j).to_string(), p.scores.get(c, j)))
                    .collect();
                (catalogs.community(c).to_string(), tags)
            })
            .collect())
    }

    /// Macro AUC of the model and the month-on-month baseline plus
    /// per-community AUCs.
    #[pyo3(signature = (dataset, target = None))]
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset, target: Option<u32>) -> PyResult<Bound<'py, PyDict>> {
        let ds = &dataset.inner;
        model::check_compatible(&self.store, &self.config, ds.catalogs()).map_err(to_py)?;
        let sample = self.sample(ds, target)?;
        let p = model::predict(&self.store, &self.config, &PreparedData::new(ds), &sample).map_err(to_py)?;
        let report = eval::evaluate("model", &p, &sample, ds.catalogs(), 10, TieMode::Half).map_err(to_py)?;
        let mom = eval::mom_baseline(ds, sample.target_month, self.config.k_percent).map_err(to_py)?;
        let mom_report = eval::evaluate("mom", &mom, &sample, ds.catalogs(), 10, TieMode::Half).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("target_month", sample.target_month)?;
        out.set_item("model_auc", report.macro_auc)?;
        out.set_item("mom_auc", mom_report.macro_auc)?;
        let per: Vec<(String, Option<f64>, Option<f64>)> = report
            .communities
            .iter()
            .zip(&mom_report.communities)
            .map(|(a, b)| (a.community.clone(), a.auc, b.auc))
            .collect();
        out.set_item("communities", per)?;
        Ok(out)
    }
}

/// Probability that a positive outscores a negative; `None` without both classes.
#[pyfunction]
#[pyo3(signature = (scores, labels, strict = false))]
fn auc(scores: Vec<f64>, labels: Vec<bool>, strict: bool) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(eval::auc(&scores, &labels, if strict { TieMode::Strict } else { TieMode::Half }))
}

#[pymodule(name = "dytgraph")]
fn dytgraph_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    Ok(())
}
