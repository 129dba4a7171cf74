//! Python bindings: frames, inventories, SPIS subsampling, synthesis,
//! evaluation, and the micro parser, exposed with string/tuple interfaces so
//! the module needs nothing beyond the standard library on the Python side.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::topkit::benchmark::{spis_scan, spis_subsample, SpisConfig};
use ::topkit::dataset::{extract_ontology, Dataset, Sample};
use ::topkit::evaluate::{self, Prediction};
use ::topkit::frame;
use ::topkit::inventory;
use ::topkit::model::decode::{DecodeCause, DecodeFailure};
use ::topkit::model::{self, ModelConfig, ParserMode, TrainConfig};
use ::topkit::synth;
use ::topkit::{Frame, Inventory, InventoryVariant, OntologyLabel};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn dataset_from_tuples(samples: Vec<(String, String, String)>) -> PyResult<Dataset> {
    let mut out = Vec::with_capacity(samples.len());
    for (domain, utterance, frame_text) in samples {
        let parsed = frame::parse_frame(&frame_text).map_err(value_err)?;
        out.push(Sample::new(domain, utterance, parsed));
    }
    Ok(Dataset::new(out))
}

fn dataset_to_tuples(dataset: &Dataset) -> Vec<(String, String, String)> {
    dataset
        .samples
        .iter()
        .map(|s| (s.domain.clone(), s.utterance.clone(), s.frame.serialize()))
        .collect()
}

fn parse_variant(name: &str) -> PyResult<InventoryVariant> {
    name.parse().map_err(value_err)
}

/// A parsed intent-slot frame.
#[pyclass(name = "Frame", from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: Frame,
}

#[pymethods]
impl PyFrame {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyFrame { inner: frame::parse_frame(text).map_err(value_err)? })
    }

    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    fn is_nested(&self) -> bool {
        self.inner.is_nested()
    }

    fn ontology_tokens(&self) -> Vec<String> {
        self.inner.ontology_tokens()
    }

    fn utterance_tokens(&self) -> Vec<String> {
        frame::utterance_tokens(&self.inner)
    }

    /// List of (code, path, message) validation issues; empty means valid.
    fn validate(&self) -> Vec<(String, Vec<usize>, String)> {
        self.inner
            .validate()
            .issues
            .into_iter()
            .map(|i| (format!("{:?}", i.code), i.path, i.message))
            .collect()
    }

    fn __str__(&self) -> String {
        self.inner.serialize()
    }

    fn __repr__(&self) -> String {
        format!("Frame({:?})", self.inner.serialize())
    }

    fn __eq__(&self, other: &PyFrame) -> bool {
        self.inner == other.inner
    }
}

/// A per-domain component table.
#[pyclass(name = "Inventory", skip_from_py_object)]
#[derive(Clone)]
struct PyInventory {
    inner: Inventory,
}

#[pymethods]
impl PyInventory {
    #[new]
    fn new(domain: &str, labels: Vec<String>) -> PyResult<Self> {
        let parsed: Result<Vec<OntologyLabel>, _> =
            labels.iter().map(|l| OntologyLabel::parse(l)).collect();
        let inner =
            inventory::build_inventory(domain, &parsed.map_err(value_err)?).map_err(value_err)?;
        Ok(PyInventory { inner })
    }

    #[getter]
    fn domain(&self) -> String {
        self.inner.domain().to_string()
    }

    /// Components as (index, type, span, raw_label) tuples.
    fn components(&self) -> Vec<(usize, String, String, String)> {
        self.inner
            .components()
            .iter()
            .map(|c| {
                (c.index, c.kind.as_str().to_string(), c.span.clone(), c.label.raw().to_string())
            })
            .collect()
    }

    fn linearize(&self, variant: &str) -> PyResult<String> {
        Ok(inventory::linearize(&self.inner, parse_variant(variant)?))
    }

    fn to_index_frame(&self, frame: &PyFrame) -> PyResult<String> {
        let idx = inventory::to_index_frame(&frame.inner, &self.inner).map_err(value_err)?;
        Ok(idx.serialize())
    }

    fn from_index_frame(&self, text: &str) -> PyResult<PyFrame> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let idx = inventory::IndexFrame::parse_tokens(&tokens).map_err(value_err)?;
        let frame = inventory::from_index_frame(&idx, &self.inner).map_err(value_err)?;
        Ok(PyFrame { inner: frame })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Inventory(domain={:?}, components={})", self.inner.domain(), self.inner.len())
    }
}

/// Natural-language span of an ontology label, e.g. `SL:TIME_ZONE` -> `time zone`.
#[pyfunction]
fn derive_span(label: &str) -> PyResult<String> {
    let parsed = OntologyLabel::parse(label).map_err(value_err)?;
    Ok(inventory::derive_span(&parsed))
}

/// SPIS subsampling over (domain, utterance, frame) tuples. With
/// `shuffle=False` the greedy scan runs in the given order.
#[pyfunction]
#[pyo3(signature = (samples, k, seed = 0, shuffle = true))]
fn spis(
    samples: Vec<(String, String, String)>,
    k: usize,
    seed: u64,
    shuffle: bool,
) -> PyResult<Vec<(String, String, String)>> {
    if k == 0 {
        return Err(PyValueError::new_err("k must be >= 1"));
    }
    let dataset = dataset_from_tuples(samples)?;
    let subset = if shuffle {
        spis_subsample(&dataset, &SpisConfig::new(k, seed))
    } else {
        spis_scan(&dataset, k)
    };
    Ok(dataset_to_tuples(&subset))
}

/// Distinct ontology labels of one domain in a tuple corpus.
#[pyfunction]
fn ontology_of(samples: Vec<(String, String, String)>, domain: &str) -> PyResult<Vec<String>> {
    let dataset = dataset_from_tuples(samples)?;
    Ok(extract_ontology(&dataset, domain).iter().map(|l| l.raw().to_string()).collect())
}

/// Deterministic synthetic multi-domain corpus as (domain, utterance, frame)
/// tuples.
#[pyfunction]
#[pyo3(signature = (seed = 13, samples_per_domain = 0))]
fn synth_corpus(seed: u64, samples_per_domain: usize) -> PyResult<Vec<(String, String, String)>> {
    let corpus = if samples_per_domain == 0 {
        synth::default_benchmark_suite(seed)
    } else {
        synth::generate_suite(&synth::default_suite_specs(), samples_per_domain, seed)
            .map_err(value_err)?
    };
    Ok(dataset_to_tuples(&corpus))
}

/// Exact match between aligned prediction and gold frame strings. Returns
/// (em, matches, n); unparseable predictions count as misses.
#[pyfunction]
fn exact_match(predictions: Vec<String>, golds: Vec<String>) -> PyResult<(f64, usize, usize)> {
    let preds: Vec<Prediction> = predictions
        .iter()
        .map(|line| {
            frame::parse_frame(line).map_err(|e| DecodeFailure {
                tokens: line.split_whitespace().map(str::to_string).collect(),
                cause: DecodeCause::Parse(e.to_string()),
            })
        })
        .collect();
    let golds: Result<Vec<Frame>, _> = golds.iter().map(|g| frame::parse_frame(g)).collect();
    let report =
        evaluate::exact_match(&preds, &golds.map_err(value_err)?).map_err(value_err)?;
    Ok((report.em, report.matches(), report.n))
}

/// Minimal token edit script between two frames: (distance, rendered diff).
#[pyfunction]
fn frame_diff(prediction: &str, gold: &str) -> PyResult<(usize, String)> {
    let p = frame::parse_frame(prediction).map_err(value_err)?;
    let g = frame::parse_frame(gold).map_err(value_err)?;
    let script = evaluate::frame_diff(&p, &g);
    Ok((script.distance, script.render()))
}

/// Compositionality and ontology size of one domain in a tuple corpus:
/// (compositionality, ontology_size, samples).
#[pyfunction]
fn domain_profile(
    samples: Vec<(String, String, String)>,
    domain: &str,
) -> PyResult<(f64, usize, usize)> {
    let dataset = dataset_from_tuples(samples)?;
    let p = evaluate::domain_profile(&dataset, domain).map_err(value_err)?;
    Ok((p.compositionality, p.ontology_size, p.samples))
}

/// A trained micro parser.
#[pyclass(name = "Parser")]
struct PyParser {
    model: model::TrainedModel,
    inventories: BTreeMap<String, Inventory>,
}

#[pymethods]
impl PyParser {
    /// Train a parser on a tuple corpus.
    ///
    /// `mode` is "inventory-pointer" or "copy-generate"; dimensions default
    /// to a tiny but workable configuration.
    #[staticmethod]
    #[pyo3(signature = (
        samples,
        mode = "inventory-pointer",
        variant = "index-type-span",
        epochs = 30,
        seed = 0,
        layers = 1,
        model_dim = 32,
        heads = 2,
        ffn_dim = 64,
        learning_rate = 1.5e-3,
        batch_size = 8,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        samples: Vec<(String, String, String)>,
        mode: &str,
        variant: &str,
        epochs: usize,
        seed: u64,
        layers: usize,
        model_dim: usize,
        heads: usize,
        ffn_dim: usize,
        learning_rate: f64,
        batch_size: usize,
    ) -> PyResult<Self> {
        let dataset = dataset_from_tuples(samples)?;
        let mode: ParserMode = mode.parse().map_err(value_err)?;
        let mut inventories = BTreeMap::new();
        for domain in dataset.domains() {
            let labels: Vec<OntologyLabel> =
                extract_ontology(&dataset, &domain).into_iter().collect();
            let inv = inventory::build_inventory(&domain, &labels).map_err(value_err)?;
            inventories.insert(domain, inv);
        }
        let config = ModelConfig {
            mode,
            inventory_variant: parse_variant(variant)?,
            layers,
            model_dim,
            heads,
            ffn_dim,
            seed,
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            epochs,
            batch_size,
            learning_rate,
            seed,
            ..TrainConfig::default()
        };
        let (model, _) =
            model::train_fresh(&dataset, &inventories, config, &tc).map_err(runtime_err)?;
        Ok(PyParser { model, inventories })
    }

    /// Greedy-decode one utterance; raises RuntimeError on decode failure.
    fn predict(&self, domain: &str, utterance: &str) -> PyResult<PyFrame> {
        let inventory = self
            .inventories
            .get(domain)
            .ok_or_else(|| PyValueError::new_err(format!("unknown domain `{domain}`")))?;
        match model::predict(&self.model, utterance, inventory) {
            Ok(frame) => Ok(PyFrame { inner: frame }),
            Err(failure) => Err(runtime_err(failure)),
        }
    }

    /// Final training loss of the last stage.
    fn final_loss(&self) -> Option<f64> {
        self.model.training_log.last().map(|e| e.loss)
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.model.vocab.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Parser(mode={}, vocab={}, domains={})",
            self.model.config.mode,
            self.model.vocab.len(),
            self.inventories.len()
        )
    }
}

#[pymodule(name = "topkit")]
fn topkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PyInventory>()?;
    m.add_class::<PyParser>()?;
    m.add_function(wrap_pyfunction!(derive_span, m)?)?;
    m.add_function(wrap_pyfunction!(spis, m)?)?;
    m.add_function(wrap_pyfunction!(ontology_of, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(frame_diff, m)?)?;
    m.add_function(wrap_pyfunction!(domain_profile, m)?)?;
    Ok(())
}
