//! Python bindings for the benchmark toolkit.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use upar_core::data::{
    load_features, load_manifest, synth_generate, upar_split_presets, AttributeMask, LabelMatrix,
    Protocol, SynthConfig, SynthPreset,
};
use upar_core::metrics::{ConfidenceMatrix, MetricReport};
use upar_core::nn::SmoothingConfig;
use upar_core::schema::{default_upar_schema, load_schema, AttributeSchema};
use upar_core::trainer::{run_protocol as core_run_protocol, TrainConfig};

fn py_err(e: upar_core::Error) -> PyErr {
    match e {
        upar_core::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// An ordered attribute schema.
#[pyclass(name = "Schema", frozen)]
pub struct PySchema {
    inner: AttributeSchema,
}

#[pymethods]
impl PySchema {
    /// The default 40-attribute schema.
    #[staticmethod]
    fn default() -> Self {
        Self { inner: default_upar_schema() }
    }

    #[staticmethod]
    fn synthetic(count: usize) -> Self {
        Self { inner: AttributeSchema::synthetic(count) }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_schema(path).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        AttributeSchema::from_json_str(text).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    fn names(&self) -> Vec<String> {
        self.inner.names().map(str::to_string).collect()
    }

    fn categories(&self) -> Vec<String> {
        self.inner.categories().to_vec()
    }

    fn column_index(&self, name: &str) -> Option<usize> {
        self.inner.column_index(name)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Schema({} attributes, {} categories)",
            self.inner.len(),
            self.inner.categories().len()
        )
    }
}

/// Split presets as `(id, train_domains, eval_domains)` tuples.
#[pyfunction]
fn split_presets(protocol: &str) -> PyResult<Vec<(usize, Vec<String>, Vec<String>)>> {
    let p: Protocol = protocol.parse().map_err(py_err)?;
    Ok(upar_split_presets(p)
        .into_iter()
        .map(|s| {
            (
                s.id,
                s.train_domains.into_iter().collect(),
                s.eval_domains.into_iter().collect(),
            )
        })
        .collect())
}

#[pyfunction]
fn smooth_labels(labels: Vec<u8>, alpha: f64) -> PyResult<Vec<f64>> {
    let cfg = SmoothingConfig::new(alpha).map_err(py_err)?;
    Ok(upar_core::nn::smooth_labels(&labels, cfg))
}

fn matrices(
    labels: &[Vec<u8>],
    confidences: &[Vec<f64>],
    mask: Option<Vec<bool>>,
) -> PyResult<(LabelMatrix, ConfidenceMatrix, AttributeMask)> {
    let gt = LabelMatrix::from_rows(labels).map_err(py_err)?;
    let a = gt.n_attributes();
    if confidences.iter().any(|r| r.len() != a) {
        return Err(PyValueError::new_err("confidence rows must match the label width"));
    }
    let conf = ConfidenceMatrix::new(gt.instance_ids().to_vec(), a, confidences.concat())
        .map_err(py_err)?;
    let mask = AttributeMask::new(mask.unwrap_or_else(|| vec![true; a]));
    Ok((gt, conf, mask))
}

/// Recognition and retrieval metrics as a JSON report.
#[pyfunction]
#[pyo3(signature = (labels, confidences, threshold = 0.5, mask = None))]
fn evaluate(
    labels: Vec<Vec<u8>>,
    confidences: Vec<Vec<f64>>,
    threshold: f64,
    mask: Option<Vec<bool>>,
) -> PyResult<String> {
    let (gt, conf, mask) = matrices(&labels, &confidences, mask)?;
    let mut report = MetricReport::recognition(&conf, &gt, &mask, threshold, &[]).map_err(py_err)?;
    let r = upar_core::retrieval::evaluate_retrieval(&gt, &conf, &mask).map_err(py_err)?;
    report.map = Some(r.map);
    report.rank1 = Some(r.rank1);
    Ok(report.to_json())
}

/// `(mAP, rank-1)` of attribute-based retrieval.
#[pyfunction]
#[pyo3(signature = (labels, confidences, mask = None))]
fn retrieval(
    labels: Vec<Vec<u8>>,
    confidences: Vec<Vec<f64>>,
    mask: Option<Vec<bool>>,
) -> PyResult<(f64, f64)> {
    let (gt, conf, mask) = matrices(&labels, &confidences, mask)?;
    let r = upar_core::retrieval::evaluate_retrieval(&gt, &conf, &mask).map_err(py_err)?;
    Ok((r.map, r.rank1))
}

/// Synthetic dataset as a dict of ids, domains, partitions, labels and features.
#[pyfunction]
#[pyo3(signature = (preset = "easy", seed = 0, rows = None))]
fn synth(py: Python<'_>, preset: &str, seed: u64, rows: Option<usize>) -> PyResult<Py<PyAny>> {
    let preset: SynthPreset = preset.parse().map_err(py_err)?;
    let mut cfg = SynthConfig::preset(preset, seed);
    if let Some(r) = rows {
        cfg.rows_per_partition = [r; 3];
    }
    let (f, l) = synth_generate(&cfg).map_err(py_err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("ids", l.instance_ids().to_vec())?;
    dict.set_item("domains", l.domains().to_vec())?;
    dict.set_item(
        "partitions",
        l.partitions().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
    )?;
    dict.set_item("labels", (0..l.len()).map(|i| l.row(i).to_vec()).collect::<Vec<_>>())?;
    dict.set_item("features", (0..f.len()).map(|i| f.row(i).to_vec()).collect::<Vec<_>>())?;
    Ok(dict.into_any().unbind())
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    if let (Some(b), serde_json::Value::Object(o)) = (base.as_object_mut(), overrides) {
        for (k, v) in o {
            b.insert(k, v);
        }
    }
}

/// Runs a protocol on manifest/feature files; `config` is a JSON object of
/// training overrides. Returns the JSON report.
#[pyfunction]
#[pyo3(signature = (manifest, features, protocol = "cv", schema = None, config = None))]
fn run_protocol(
    py: Python<'_>,
    manifest: &str,
    features: &str,
    protocol: &str,
    schema: Option<&str>,
    config: Option<&str>,
) -> PyResult<String> {
    let schema = match schema {
        Some(p) => load_schema(p).map_err(py_err)?,
        None => default_upar_schema(),
    };
    let protocol: Protocol = protocol.parse().map_err(py_err)?;
    let mut value = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    if let Some(text) = config {
        let o = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        merge(&mut value, o);
    }
    let cfg: TrainConfig =
        serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let labels = load_manifest(manifest, &schema).map_err(py_err)?;
    let feats = load_features(features).map_err(py_err)?;
    let run = py
        .detach(|| core_run_protocol(protocol, &feats, &labels, &schema, &cfg, None))
        .map_err(py_err)?;
    Ok(run.to_json())
}

#[pymodule]
fn upar_bench(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchema>()?;
    m.add_function(wrap_pyfunction!(split_presets, m)?)?;
    m.add_function(wrap_pyfunction!(smooth_labels, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(retrieval, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    Ok(())
}
