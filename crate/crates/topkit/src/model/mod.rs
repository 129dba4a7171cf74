//! Micro seq2seq parser supporting the two formulations under comparison:
//! inventory-pointer decoding (indices reference inventory components through
//! encoder self-attention) and the copy-generate baseline (ontology labels
//! become dedicated decoder vocabulary entries with learned embeddings).
//!
//! Training is teacher-forced log loss with Adam, single-threaded and
//! deterministic under fixed seeds; all arithmetic is `f64`.

pub mod autodiff;
pub mod checkpoint;
pub mod decode;
pub mod gradcheck;
pub mod transformer;
pub mod vocab;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::frame::Frame;
use crate::inventory::{
    linearize, to_index_frame, Inventory, InventoryError, InventoryVariant, OntologyLabel,
};
use crate::model::transformer::{append_embedding_rows, init_params, Graph, ParamSet};
use crate::model::vocab::{BOS, EOS, SEP};

pub use crate::model::decode::{predict, DecodeCause, DecodeFailure};
pub use crate::model::gradcheck::{grad_check, GradCheckReport};
pub use crate::model::vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("source sequence length {len} exceeds max_source_len {max}")]
    SourceTooLong { len: usize, max: usize },
    #[error("target sequence length {len} exceeds max_target_len {max}")]
    TargetTooLong { len: usize, max: usize },
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error("component index {index} exceeds the reserved index-token block (m_max={m_max})")]
    IndexOutOfRange { index: usize, m_max: usize },
    #[error("no inventory provided for domain `{0}`")]
    MissingInventory(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr too high or bad data)")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("gradient checking requires dropout = 0 (objective must be deterministic)")]
    DropoutEnabled,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// Which parser formulation the model implements.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum ParserMode {
    InventoryPointer,
    CopyGenerate,
}

impl ParserMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParserMode::InventoryPointer => "inventory-pointer",
            ParserMode::CopyGenerate => "copy-generate",
        }
    }
}

impl std::str::FromStr for ParserMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inventory-pointer" | "inventory_pointer" | "inventory" | "pointer" => {
                Ok(ParserMode::InventoryPointer)
            }
            "copy-generate" | "copy_generate" | "copygen" => Ok(ParserMode::CopyGenerate),
            other => Err(format!("unknown parser mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ParserMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: ParserMode,
    pub inventory_variant: InventoryVariant,
    /// Encoder and decoder stack depth.
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
    pub dropout: f64,
    /// Size of the reserved index-token block shared across domains.
    pub m_max: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: ParserMode::InventoryPointer,
            inventory_variant: InventoryVariant::IndexTypeSpan,
            layers: 2,
            model_dim: 64,
            heads: 4,
            ffn_dim: 128,
            max_source_len: 256,
            max_target_len: 64,
            dropout: 0.0,
            m_max: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "model_dim {} must be a positive multiple of heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(ModelError::InvalidConfig("layers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.max_target_len < 1 || self.max_source_len < 1 {
            return Err(ModelError::InvalidConfig("sequence limits must be >= 1".into()));
        }
        if self.m_max < 1 {
            return Err(ModelError::InvalidConfig("m_max must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            epochs: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
}

/// A parser with its configuration, vocabulary, parameters, and the loss
/// history accumulated across training stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
    pub training_log: Vec<LogEntry>,
}

impl TrainedModel {
    /// Fresh seeded initialization for the given vocabulary.
    pub fn init(config: ModelConfig, vocab: Vocabulary) -> Result<TrainedModel, ModelError> {
        config.validate()?;
        let params = init_params(&config, vocab.len());
        Ok(TrainedModel { config, vocab, params, training_log: Vec::new() })
    }
}

/// What a training stage changed beyond the parameters.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Vocabulary entries appended for unseen ontology labels (copy-generate
    /// adaptation); always empty in inventory-pointer mode.
    pub added_vocab: Vec<String>,
    pub epoch_losses: Vec<f64>,
}

/// Encoder input ids. Inventory-pointer mode concatenates the linearized
/// inventory, a separator, and the utterance; copy-generate sees the
/// utterance alone. An empty utterance is legal but logged as a warning.
pub fn build_source(
    utterance: &str,
    inventory: &Inventory,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<Vec<usize>, ModelError> {
    if utterance.split_whitespace().next().is_none() {
        log::warn!("building source for an empty utterance");
    }
    let mut ids = Vec::new();
    match config.mode {
        ParserMode::InventoryPointer => {
            let linearized = linearize(inventory, config.inventory_variant);
            for tok in linearized.split(' ') {
                ids.push(vocab.id_or_unk(tok));
            }
            ids.push(SEP);
            ids.extend(vocab.encode_words(utterance));
        }
        ParserMode::CopyGenerate => {
            ids.extend(vocab.encode_words(utterance));
            if ids.is_empty() {
                ids.push(SEP); // keep the encoder non-degenerate
            }
        }
    }
    if ids.len() > config.max_source_len {
        return Err(ModelError::SourceTooLong { len: ids.len(), max: config.max_source_len });
    }
    Ok(ids)
}

/// Decoder target ids wrapped in begin/end markers. Pointer mode emits the
/// index-form serialization; copy-generate emits label-form tokens through
/// the augmented vocabulary.
pub fn build_target(
    frame: &Frame,
    inventory: &Inventory,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<Vec<usize>, ModelError> {
    let mut ids = vec![BOS];
    match config.mode {
        ParserMode::InventoryPointer => {
            let index_frame = to_index_frame(frame, inventory)?;
            for tok in index_frame.serialize().split(' ') {
                if let Ok(i) = tok.parse::<usize>() {
                    // Pointer indices must stay within the reserved block.
                    let id = vocab
                        .index_token_id(i)
                        .ok_or(ModelError::IndexOutOfRange { index: i, m_max: vocab.m_max() })?;
                    ids.push(id);
                } else {
                    ids.push(vocab.id_or_unk(&tok.to_lowercase()));
                }
            }
        }
        ParserMode::CopyGenerate => {
            let serialized = frame.serialize();
            let tokens: Vec<&str> = serialized.split(' ').collect();
            ids.extend(vocab.encode_frame_tokens(&tokens));
        }
    }
    ids.push(EOS);
    if ids.len() > config.max_target_len {
        return Err(ModelError::TargetTooLong { len: ids.len(), max: config.max_target_len });
    }
    Ok(ids)
}

/// Mean negative log likelihood per target position over a batch, in eval
/// mode (no dropout).
pub fn loss(model: &TrainedModel, batch: &[(Vec<usize>, Vec<usize>)]) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let v = model.vocab.len();
    for (src, tgt) in batch {
        if tgt.len() < 2 {
            return Err(ModelError::ShapeMismatch(
                "target must contain at least begin and end markers".into(),
            ));
        }
        if src.len() > model.config.max_source_len {
            return Err(ModelError::SourceTooLong {
                len: src.len(),
                max: model.config.max_source_len,
            });
        }
        if tgt.len() > model.config.max_target_len {
            return Err(ModelError::TargetTooLong {
                len: tgt.len(),
                max: model.config.max_target_len,
            });
        }
        if src.iter().chain(tgt.iter()).any(|&id| id >= v) {
            return Err(ModelError::ShapeMismatch(format!(
                "token id out of range for vocabulary of size {v}"
            )));
        }
    }
    let mut total_ce = 0.0;
    let mut total_tokens = 0usize;
    for (src, tgt) in batch {
        let mut graph = Graph::new(&model.config, &model.params, None);
        let node = graph.sample_loss(src, tgt);
        total_ce += graph.tape.value(node)[[0, 0]];
        total_tokens += tgt.len() - 1;
    }
    Ok(total_ce / total_tokens as f64)
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Array2<f64>> =
            params.values().iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Adam { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, params: &mut ParamSet, grads: &mut [Array2<f64>], tc: &TrainConfig) {
        if let Some(clip) = tc.grad_clip {
            let norm: f64 =
                grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
            if norm > clip {
                let scale = clip / norm;
                for g in grads.iter_mut() {
                    *g *= scale;
                }
            }
        }
        self.t += 1;
        let bc1 = 1.0 - tc.beta1.powi(self.t);
        let bc2 = 1.0 - tc.beta2.powi(self.t);
        for ((p, m), (v, g)) in params
            .values_mut()
            .iter_mut()
            .zip(&mut self.m)
            .zip(self.v.iter_mut().zip(grads.iter()))
        {
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = tc.beta1 * *m + (1.0 - tc.beta1) * g;
                *v = tc.beta2 * *v + (1.0 - tc.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= tc.learning_rate * mhat / (vhat.sqrt() + tc.adam_epsilon);
            });
        }
    }
}

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut h = base ^ a.wrapping_mul(0x9e3779b97f4a7c15) ^ b.wrapping_mul(0xc2b2ae3d27d4eb4f);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^ (h >> 33)
}

/// Convert a dataset to (source, target) id pairs using each sample's domain
/// inventory.
pub fn prepare_pairs(
    dataset: &Dataset,
    inventories: &BTreeMap<String, Inventory>,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>, ModelError> {
    let mut pairs = Vec::with_capacity(dataset.len());
    for sample in &dataset.samples {
        let inventory = inventories
            .get(&sample.domain)
            .ok_or_else(|| ModelError::MissingInventory(sample.domain.clone()))?;
        let src = build_source(&sample.utterance, inventory, config, vocab)?;
        let tgt = build_target(&sample.frame, inventory, config, vocab)?;
        pairs.push((src, tgt));
    }
    Ok(pairs)
}

/// One training stage over a dataset, continuing from the model's current
/// parameters. Two-stage transfer is two calls: source split, then target
/// split.
///
/// In copy-generate mode, ontology labels present in `dataset` but absent
/// from the vocabulary are appended first, each backed by one fresh seeded
/// embedding row; inventory-pointer mode never touches the vocabulary.
pub fn train(
    model: &mut TrainedModel,
    dataset: &Dataset,
    inventories: &BTreeMap<String, Inventory>,
    tc: &TrainConfig,
    split: &str,
) -> Result<TrainReport, ModelError> {
    let mut report = TrainReport::default();

    if model.config.mode == ParserMode::CopyGenerate {
        let mut unseen: Vec<OntologyLabel> = Vec::new();
        for domain in dataset.domains() {
            for label in crate::dataset::extract_ontology(dataset, &domain) {
                if model.vocab.id_of(&format!("[{}", label.raw())).is_none() {
                    unseen.push(label);
                }
            }
        }
        if !unseen.is_empty() {
            report.added_vocab = model.vocab.extend_with_labels(&unseen);
            append_embedding_rows(
                &mut model.params,
                report.added_vocab.len(),
                mix_seed(tc.seed, 0xadd0, model.vocab.len() as u64),
            );
            log::info!(
                "copy-generate adaptation: added {} vocabulary entries",
                report.added_vocab.len()
            );
        }
    } else {
        log::info!("inventory-pointer adaptation: vocabulary unchanged");
    }

    let pairs = prepare_pairs(dataset, inventories, &model.config, &model.vocab)?;
    if pairs.is_empty() || tc.epochs == 0 {
        return Ok(report);
    }

    let mut adam = Adam::new(&model.params);
    let mut grads: Vec<Array2<f64>> =
        model.params.values().iter().map(|p| Array2::zeros(p.raw_dim())).collect();

    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(tc.seed, epoch as u64, 1));
        order.shuffle(&mut rng);

        let mut epoch_ce = 0.0;
        let mut epoch_tokens = 0usize;
        for (batch_idx, chunk) in order.chunks(tc.batch_size.max(1)).enumerate() {
            for g in &mut grads {
                g.fill(0.0);
            }
            let mut batch_ce = 0.0;
            let mut batch_tokens = 0usize;
            for &idx in chunk {
                let (src, tgt) = &pairs[idx];
                let dropout_seed = mix_seed(tc.seed, epoch as u64, idx as u64);
                let mut graph = Graph::new(&model.config, &model.params, Some(dropout_seed));
                let loss_node = graph.sample_loss(src, tgt);
                batch_ce += graph.tape.value(loss_node)[[0, 0]];
                batch_tokens += tgt.len() - 1;
                let node_grads = graph.tape.backward(loss_node);
                for (p, node) in graph.param_nodes().iter().enumerate() {
                    if let Some(g) = &node_grads[node.0] {
                        grads[p] += g;
                    }
                }
            }
            if !batch_ce.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: batch_idx });
            }
            let scale = 1.0 / batch_tokens as f64;
            for g in &mut grads {
                *g *= scale;
            }
            adam.step(&mut model.params, &mut grads, tc);
            epoch_ce += batch_ce;
            epoch_tokens += batch_tokens;
        }
        let epoch_loss = epoch_ce / epoch_tokens as f64;
        model.training_log.push(LogEntry { epoch, split: split.to_string(), loss: epoch_loss });
        report.epoch_losses.push(epoch_loss);
    }
    Ok(report)
}

/// Build a vocabulary from the dataset and inventories, initialize a model,
/// and run one training stage. Convenience wrapper for single-stage use.
pub fn train_fresh(
    dataset: &Dataset,
    inventories: &BTreeMap<String, Inventory>,
    model_config: ModelConfig,
    tc: &TrainConfig,
) -> Result<(TrainedModel, TrainReport), ModelError> {
    let invs: Vec<&Inventory> = inventories.values().collect();
    let vocab = Vocabulary::build(dataset, &invs, model_config.mode, model_config.m_max);
    let mut model = TrainedModel::init(model_config, vocab)?;
    let report = train(&mut model, dataset, inventories, tc, "train")?;
    Ok((model, report))
}
