//! Python module `hyperlfh`.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hyperlfh::config::{RunConfig, KEYS};
use hyperlfh::hetgraph::{load_graph_dir, save_graph_dir, HetPairGraph};
use hyperlfh::numcore::Real;
use hyperlfh::synthdata::generate;
use hyperlfh::trainer::{self, metrics_csv, Checkpoint, TrainOutcome};

fn py_err(e: hyperlfh::Error) -> PyErr {
    match e {
        hyperlfh::Error::Divergence { .. } => PyArithmeticError::new_err(e.to_string()),
        hyperlfh::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Precision {
    Single,
    Double,
}

fn precision(bits: u32) -> PyResult<Precision> {
    match bits {
        32 => Ok(Precision::Single),
        64 => Ok(Precision::Double),
        b => Err(PyValueError::new_err(format!("precision must be 32 or 64, got {b}"))),
    }
}

/// Column `v` of a `d×N` matrix becomes row `v` of the result.
fn node_rows<T: Real>(m: &hyperlfh::numcore::Matrix<T>) -> Vec<Vec<f64>> {
    let m = m.cast::<f64>();
    (0..m.cols()).map(|c| m.column(c)).collect()
}

/// Heterogeneous graph with typed nodes, typed directed edges, node features
/// and optional labels.
#[pyclass(name = "Graph", module = "hyperlfh", frozen)]
struct PyGraph {
    inner: HetPairGraph,
}

#[pymethods]
impl PyGraph {
    /// Reads `nodes.csv`, `edges.csv` and optional `labels.csv` from `dir`.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        load_graph_dir(&dir).map(|inner| Self { inner }).map_err(py_err)
    }

    /// Planted-class synthetic graph built from the `synth.*` keys of `config`.
    #[staticmethod]
    #[pyo3(signature = (config = None))]
    fn synthetic(config: Option<&PyConfig>) -> PyResult<Self> {
        let cfg = config.map(|c| c.inner.synth.clone()).unwrap_or_default();
        generate(&cfg).map(|inner| Self { inner }).map_err(py_err)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        save_graph_dir(&self.inner, &dir).map_err(py_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn num_node_types(&self) -> usize {
        self.inner.num_node_types()
    }

    #[getter]
    fn num_edge_types(&self) -> usize {
        self.inner.num_edge_types()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn node_types(&self) -> Vec<usize> {
        self.inner.node_types().to_vec()
    }

    /// `(src, dst, edge type)` triples.
    fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.inner.edges().iter().map(|e| (e.src, e.dst, e.etype)).collect()
    }

    /// One feature row per node.
    fn features(&self) -> Vec<Vec<f64>> {
        node_rows(self.inner.features())
    }

    fn labels(&self) -> Option<Vec<Option<usize>>> {
        self.inner.labels().map(<[_]>::to_vec)
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(nodes={}, edges={}, node_types={}, edge_types={}, classes={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.num_node_types(),
            self.inner.num_edge_types(),
            self.inner.num_classes()
        )
    }
}

/// Flat run configuration; see `Config.keys()` for every key.
#[pyclass(name = "Config", module = "hyperlfh")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults, updated by `overrides` (`{"train.alpha": 0.1, ...}`).
    #[new]
    #[pyo3(signature = (overrides = None))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut c = Self {
            inner: RunConfig::default(),
        };
        if let Some(d) = overrides {
            for (k, v) in d.iter() {
                let key: String = k.extract()?;
                let value = v.str()?.to_string();
                c.inner.set(&key, &value).map_err(py_err)?;
            }
        }
        c.inner.validate().map_err(py_err)?;
        Ok(c)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        RunConfig::load::<&str>(Some(&path), &[])
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    /// `(key, help)` for every key.
    #[staticmethod]
    fn keys() -> Vec<(&'static str, &'static str)> {
        KEYS.iter().map(|k| (k.key, k.help)).collect()
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let value = value.str()?.to_string();
        let mut next = self.inner.clone();
        next.set(key, &value).map_err(py_err)?;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .get(key)
            .ok_or_else(|| PyValueError::new_err(format!("unknown config key `{key}`")))
    }

    fn entries(&self) -> Vec<(String, String)> {
        self.inner.entries()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, dim={})", self.inner.seed, self.inner.train.dim)
    }
}

enum Trained {
    Single(TrainOutcome<f32>),
    Double(TrainOutcome<f64>),
}

macro_rules! with_outcome {
    ($t:expr, $o:ident => $body:expr) => {
        match $t {
            Trained::Single($o) => $body,
            Trained::Double($o) => $body,
        }
    };
}

/// Result of `train`: history, scores and the best-validation model.
#[pyclass(name = "TrainResult", module = "hyperlfh", frozen)]
struct PyTrainResult {
    outcome: Trained,
    meta: Vec<(String, String)>,
}

#[pymethods]
impl PyTrainResult {
    #[getter]
    fn best_epoch(&self) -> usize {
        with_outcome!(&self.outcome, o => o.best_epoch)
    }

    #[getter]
    fn best_val_f1(&self) -> f64 {
        with_outcome!(&self.outcome, o => o.best_val_f1)
    }

    #[getter]
    fn test_f1(&self) -> Option<f64> {
        with_outcome!(&self.outcome, o => o.test_f1)
    }

    /// `(epoch, train_loss, val_loss, val_f1)` per epoch.
    #[getter]
    fn history(&self) -> Vec<(usize, f64, f64, f64)> {
        with_outcome!(&self.outcome, o => o
            .history
            .iter()
            .map(|r| (r.epoch, r.train_loss, r.val_loss, r.val_f1))
            .collect())
    }

    fn metrics_csv(&self) -> String {
        with_outcome!(&self.outcome, o => metrics_csv(&o.history))
    }

    fn predict(&self) -> PyResult<Vec<usize>> {
        with_outcome!(&self.outcome, o => o.model.predict().map_err(py_err))
    }

    /// One representation row per node.
    fn embeddings(&self) -> PyResult<Vec<Vec<f64>>> {
        with_outcome!(&self.outcome, o => o.model.embeddings().map(|z| node_rows(&z)).map_err(py_err))
    }

    fn save_checkpoint(&self, path: PathBuf) -> PyResult<()> {
        let ck = with_outcome!(&self.outcome, o => Checkpoint::from_store(&o.model.store, self.meta.clone()));
        ck.save(&path).map_err(py_err)
    }
}

fn config_or_default(config: Option<&PyConfig>) -> RunConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Trains node classification on `graph` (reconstruction only when unlabelled).
#[pyfunction]
#[pyo3(signature = (graph, config = None, precision = 64))]
fn train(py: Python<'_>, graph: &PyGraph, config: Option<&PyConfig>, precision: u32) -> PyResult<PyTrainResult> {
    let bits = self::precision(precision)?;
    let cfg = config_or_default(config);
    let tc = cfg.train_config();
    let g = &graph.inner;
    let outcome = py
        .detach(|| match bits {
            Precision::Single => trainer::train::<f32>(g, &tc).map(Trained::Single),
            Precision::Double => trainer::train::<f64>(g, &tc).map(Trained::Double),
        })
        .map_err(py_err)?;
    let mut meta = cfg.entries();
    meta.push(("precision".into(), precision.to_string()));
    Ok(PyTrainResult { outcome, meta })
}

#[pyclass(name = "LinkResult", module = "hyperlfh", frozen, get_all)]
struct PyLinkResult {
    f1: f64,
    accuracy: f64,
    positives: usize,
    negatives: usize,
    eval_pairs: usize,
    warning: Option<String>,
}

#[pymethods]
impl PyLinkResult {
    fn __repr__(&self) -> String {
        format!(
            "LinkResult(f1={:.4}, accuracy={:.4}, eval_pairs={})",
            self.f1, self.accuracy, self.eval_pairs
        )
    }
}

/// Hides edges, trains on the residual graph and scores hidden pairs
/// against non-adjacent ones.
#[pyfunction]
#[pyo3(signature = (graph, config = None, precision = 64))]
fn link_prediction(py: Python<'_>, graph: &PyGraph, config: Option<&PyConfig>, precision: u32) -> PyResult<PyLinkResult> {
    let bits = self::precision(precision)?;
    let cfg = config_or_default(config);
    let tc = cfg.train_config();
    let g = &graph.inner;
    let report = py
        .detach(|| match bits {
            Precision::Single => trainer::run_link_prediction::<f32>(g, &tc, &cfg.link).map(|r| r.0),
            Precision::Double => trainer::run_link_prediction::<f64>(g, &tc, &cfg.link).map(|r| r.0),
        })
        .map_err(py_err)?;
    Ok(PyLinkResult {
        f1: report.f1,
        accuracy: report.accuracy,
        positives: report.positives,
        negatives: report.negatives,
        eval_pairs: report.eval_pairs,
        warning: report.warning,
    })
}

/// Runs `sweep.param` over `sweep.values` and `sweep.seeds`; returns
/// `(param, value, test_f1, seed)` rows.
#[pyfunction]
#[pyo3(signature = (graph, config = None))]
fn sweep(py: Python<'_>, graph: &PyGraph, config: Option<&PyConfig>) -> PyResult<Vec<(String, f64, f64, u64)>> {
    let cfg = config_or_default(config);
    let s = &cfg.sweep;
    let base = cfg.train_config();
    let g = &graph.inner;
    let rows = py
        .detach(|| trainer::sweep::<f64>(g, &base, s.param, &s.values, &s.seeds))
        .map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.param, r.value, r.f1, r.seed)).collect())
}

/// Largest relative gradient error on the six-node check instance.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<f64> {
    py.detach(|| {
        let (g, c) = trainer::gradcheck_instance(seed)?;
        trainer::gradcheck(&g, &c).map(|r| r.max_rel_error)
    })
    .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "hyperlfh")]
fn hyperlfh_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_class::<PyLinkResult>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(link_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("GRADCHECK_TOLERANCE", trainer::GRADCHECK_TOLERANCE)?;
    Ok(())
}
