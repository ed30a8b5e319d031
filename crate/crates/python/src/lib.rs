//! Python bindings: configs, datasets, training, evaluation, metrics and
//! exporters. Structured results cross the boundary as JSON and come back
//! as plain Python dicts and lists.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use bvae::data::{blob_bundle, data_dir, load_bundle, DataBundle, DatasetKind, DEFAULT_ROTATION_SEED};
use bvae::experiments::{self as exp, OutputMeta};
use bvae::train::{self as tr, Checkpoint, ProbeConfig, TrainOptions};

create_exception!(bvae, BvaeError, PyException, "Any error raised by the bvae core.");

fn err(e: bvae::BvaeError) -> PyErr {
    BvaeError::new_err(format!("[exit code {}] {e}", e.exit_code()))
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Training configuration. Fields are read and written through JSON.
#[pyclass(name = "TrainConfig", from_py_object)]
#[derive(Clone)]
struct PyTrainConfig {
    inner: tr::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    /// Defaults (standard VAE), with any JSON fields given in `overrides`.
    #[new]
    #[pyo3(signature = (overrides = None))]
    fn new(overrides: Option<&str>) -> PyResult<Self> {
        let inner = match overrides {
            Some(text) => tr::TrainConfig::from_json(text).map_err(err)?,
            None => tr::TrainConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn bvae(lambda_: f64) -> Self {
        Self {
            inner: tr::TrainConfig::bvae(lambda_),
        }
    }

    /// The config of one variant of a named preset.
    #[staticmethod]
    #[pyo3(signature = (name, variant, seed = 0, quick = false))]
    fn preset(name: &str, variant: &str, seed: u64, quick: bool) -> PyResult<Self> {
        let vs = exp::preset(name, seed, quick).map_err(err)?;
        let names: Vec<String> = vs.iter().map(|v| v.name.clone()).collect();
        vs.into_iter()
            .find(|v| v.name == variant)
            .map(|v| Self { inner: v.config })
            .ok_or_else(|| BvaeError::new_err(format!("preset {name} has no variant {variant:?}; expected one of {names:?}")))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| err(e.into()))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    /// A copy with the given JSON fields replaced.
    fn with_fields(&self, fields: &str) -> PyResult<Self> {
        let mut v = serde_json::to_value(&self.inner).map_err(|e| err(e.into()))?;
        let patch: serde_json::Value = serde_json::from_str(fields).map_err(|e| err(e.into()))?;
        let (Some(obj), Some(p)) = (v.as_object_mut(), patch.as_object()) else {
            return Err(BvaeError::new_err("fields must be a JSON object"));
        };
        for (k, val) in p {
            obj.insert(k.clone(), val.clone());
        }
        let inner = tr::TrainConfig::from_json(&v.to_string()).map_err(err)?;
        Ok(Self { inner })
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.epochs
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim
    }

    fn __repr__(&self) -> String {
        format!("TrainConfig(hash={})", self.inner.hash())
    }
}

/// A train/test pair of labeled image sets.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: DataBundle,
}

#[pymethods]
impl PyDataset {
    /// MNIST from `directory` (default: the `BVAE_DATA_DIR` location).
    #[staticmethod]
    #[pyo3(signature = (directory = None, rotated = false))]
    fn mnist(py: Python<'_>, directory: Option<PathBuf>, rotated: bool) -> PyResult<Self> {
        let dir = directory.unwrap_or_else(data_dir);
        let kind = if rotated { DatasetKind::MnistRotated } else { DatasetKind::Mnist };
        let inner = py.detach(|| load_bundle(&dir, kind, DEFAULT_ROTATION_SEED)).map_err(err)?;
        Ok(Self { inner })
    }

    /// Labeled 28×28 Gaussian-blob images for smoke tests.
    #[staticmethod]
    #[pyo3(signature = (n_train, n_test, seed = 0))]
    fn synthetic(n_train: usize, n_test: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: blob_bundle(n_train, n_test, seed).map_err(err)?,
        })
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.inner.train.len()
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.inner.test.len()
    }

    fn test_labels(&self) -> Vec<u8> {
        self.inner.test.labels.clone()
    }
}

/// A trained (or partially trained) model with its optimizer state.
#[pyclass(name = "Model")]
struct PyModel {
    inner: Checkpoint,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: tr::load_checkpoint(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        tr::save_checkpoint(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    #[getter]
    fn config(&self) -> PyTrainConfig {
        PyTrainConfig {
            inner: self.inner.config.clone(),
        }
    }

    /// Per-epoch losses and branch accuracies.
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.history)
    }

    /// Trains the remaining epochs, checkpointing to `checkpoint` if given.
    #[pyo3(signature = (data, checkpoint = None))]
    fn resume(&mut self, py: Python<'_>, data: &PyDataset, checkpoint: Option<PathBuf>) -> PyResult<()> {
        let opts = TrainOptions {
            checkpoint_path: checkpoint,
            stop_after: None,
        };
        let (ck, bundle) = (&mut self.inner, &data.inner);
        py.detach(|| tr::continue_training(ck, bundle, &opts)).map_err(err)
    }

    /// Latent means of the test (or train) images, one list per sample.
    #[pyo3(signature = (data, split = "test"))]
    fn encode(&self, data: &PyDataset, split: &str) -> PyResult<Vec<Vec<f32>>> {
        let set = match split {
            "test" => &data.inner.test,
            "train" => &data.inner.train,
            s => return Err(BvaeError::new_err(format!("split must be 'train' or 'test', got {s:?}"))),
        };
        let z = self.inner.encode_means(&set.images).map_err(err)?;
        Ok((0..z.rows()).map(|r| z.row(r).to_vec()).collect())
    }

    /// NMI/ACC/ARI of k-means on test codes plus probe accuracy and confusion.
    fn evaluate<'py>(&self, py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
        let (ck, b) = (&self.inner, &data.inner);
        let report = py
            .detach(|| tr::evaluate(ck, &tr::training_split(&ck.config, b), &b.test))
            .map_err(err)?;
        to_py(py, &report)
    }

    fn export_latent_scatter(&self, data: &PyDataset, path: PathBuf) -> PyResult<()> {
        exp::export_latent_scatter(&self.inner, &data.inner.test, &path).map_err(err)
    }

    /// Returns the image size `(width, height)`.
    fn export_decoder_grid(&self, path: PathBuf) -> PyResult<(usize, usize)> {
        exp::export_decoder_grid(&self.inner, &path).map_err(err)
    }

    /// Trains the probe and writes its confusion matrix; returns the accuracy.
    fn export_confusion(&self, py: Python<'_>, data: &PyDataset, csv_path: PathBuf, pgm_path: PathBuf) -> PyResult<f64> {
        let (ck, b) = (&self.inner, &data.inner);
        let probe = py
            .detach(|| {
                let cfg = ProbeConfig {
                    seed: ck.config.seed,
                    ..ProbeConfig::default()
                };
                tr::evaluate_probe(ck, &tr::training_split(&ck.config, b), &b.test, &cfg)
            })
            .map_err(err)?;
        exp::export_confusion(&probe.confusion, &OutputMeta::of(ck), &csv_path, &pgm_path).map_err(err)?;
        Ok(probe.accuracy)
    }

    fn export_sampled_reconstruction(&self, z: Vec<f64>, path: PathBuf) -> PyResult<()> {
        exp::export_sampled_reconstruction(&self.inner, &z, &path).map_err(err)
    }
}

/// Trains `config` on `data` from scratch.
#[pyfunction]
#[pyo3(signature = (config, data, checkpoint = None))]
fn train(py: Python<'_>, config: &PyTrainConfig, data: &PyDataset, checkpoint: Option<PathBuf>) -> PyResult<PyModel> {
    let opts = TrainOptions {
        checkpoint_path: checkpoint,
        stop_after: None,
    };
    let (cfg, b) = (&config.inner, &data.inner);
    let inner = py.detach(|| tr::train(cfg, b, &opts)).map_err(err)?;
    Ok(PyModel { inner })
}

#[pyfunction]
fn nmi(labels: Vec<usize>, clusters: Vec<usize>) -> PyResult<f64> {
    bvae::metrics::nmi(&labels, &clusters).map_err(err)
}

#[pyfunction]
fn acc(labels: Vec<usize>, clusters: Vec<usize>) -> PyResult<f64> {
    bvae::metrics::acc(&labels, &clusters).map_err(err)
}

#[pyfunction]
fn ari(labels: Vec<usize>, clusters: Vec<usize>) -> PyResult<f64> {
    bvae::metrics::ari(&labels, &clusters).map_err(err)
}

/// Metric implementations checked against brute-force oracles.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn metrics_selftest<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let results = bvae::metrics::run_selftest(seed).map_err(err)?;
    let rows: Vec<serde_json::Value> = results
        .iter()
        .map(|r| serde_json::json!({"name": r.name, "passed": r.passed, "detail": r.detail}))
        .collect();
    to_py(py, &rows)
}

/// Worst relative error of the per-layer finite-difference checks.
#[pyfunction]
#[pyo3(signature = (seed = 11))]
fn layer_grad_check(seed: u64) -> PyResult<Vec<(String, f64)>> {
    let reports = bvae::nn::layer_grad_checks(seed).map_err(err)?;
    Ok(reports.into_iter().map(|(n, r)| (n.to_string(), r.max_relative_error)).collect())
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    exp::PRESETS.to_vec()
}

#[pymodule]
#[pyo3(name = "bvae")]
pub fn bvae_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BvaeError", m.py().get_type::<BvaeError>())?;
    m.add("__version__", exp::CODE_VERSION)?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(acc, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_selftest, m)?)?;
    m.add_function(wrap_pyfunction!(layer_grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    Ok(())
}
