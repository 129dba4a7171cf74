//! Self-describing model checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian u32 header length, a JSON header
//! (config, vocabulary, training log, tensor directory), then the raw tensor
//! data as little-endian f64 in directory order. Save followed by load is
//! bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::transformer::ParamSet;
use crate::model::vocab::Vocabulary;
use crate::model::{LogEntry, ModelConfig, TrainedModel};

const MAGIC: &[u8; 8] = b"TKMD0001";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("corrupt header: {0}")]
    BadHeader(String),
    #[error("truncated tensor data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: ModelConfig,
    vocab_tokens: Vec<String>,
    m_max: usize,
    training_log: Vec<LogEntry>,
    tensors: Vec<TensorMeta>,
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let header = Header {
        format: "topkit-model".to_string(),
        config: model.config.clone(),
        vocab_tokens: model.vocab.tokens().to_vec(),
        m_max: model.vocab.m_max(),
        training_log: model.training_log.clone(),
        tensors: model
            .params
            .names()
            .iter()
            .zip(model.params.values())
            .map(|(name, v)| TensorMeta { name: name.clone(), rows: v.nrows(), cols: v.ncols() })
            .collect(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(MAGIC).map_err(io_err)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io_err)?;
    file.write_all(&header_json).map_err(io_err)?;
    let mut buf = Vec::new();
    for tensor in model.params.values() {
        for &x in tensor.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    file.write_all(&buf).map_err(io_err)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel, CheckpointError> {
    let io_err = |source| CheckpointError::Io { path: path.display().to_string(), source };
    let mut file = std::fs::File::open(path).map_err(io_err)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;

    let mut data = Vec::new();
    file.read_to_end(&mut data).map_err(io_err)?;
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols * 8).sum();
    if data.len() != expected {
        return Err(CheckpointError::Truncated { expected, found: data.len() });
    }

    let mut params = ParamSet::new();
    let mut offset = 0usize;
    for meta in &header.tensors {
        let n = meta.rows * meta.cols;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let start = offset + i * 8;
            let bytes: [u8; 8] = data[start..start + 8].try_into().unwrap();
            values.push(f64::from_le_bytes(bytes));
        }
        offset += n * 8;
        let tensor = Array2::from_shape_vec((meta.rows, meta.cols), values)
            .map_err(|e| CheckpointError::BadHeader(e.to_string()))?;
        params.add(&meta.name, tensor);
    }

    Ok(TrainedModel {
        config: header.config,
        vocab: Vocabulary::from_tokens(header.vocab_tokens, header.m_max),
        params,
        training_log: header.training_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Sample};
    use crate::frame::parse_frame;
    use crate::inventory::{build_inventory, OntologyLabel};
    use crate::model::{ParserMode, TrainConfig};
    use std::collections::BTreeMap;

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let labels: Vec<OntologyLabel> = ["IN:A", "SL:B"]
            .iter()
            .map(|s| OntologyLabel::parse(s).unwrap())
            .collect();
        let inv = build_inventory("d", &labels).unwrap();
        let ds = Dataset::new(vec![Sample::new(
            "d",
            "do the thing",
            parse_frame("[IN:A [SL:B thing ] ]").unwrap(),
        )]);
        let inventories = BTreeMap::from([("d".to_string(), inv)]);
        let config = crate::model::ModelConfig {
            mode: ParserMode::CopyGenerate,
            layers: 1,
            model_dim: 8,
            heads: 2,
            ffn_dim: 16,
            m_max: 4,
            ..Default::default()
        };
        let tc = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let (model, _) = crate::model::train_fresh(&ds, &inventories, config, &tc).unwrap();

        let dir = std::env::temp_dir().join(format!("topkit-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.tkmd");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();

        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.vocab, model.vocab);
        assert_eq!(loaded.training_log, model.training_log);
        assert_eq!(loaded.params.names(), model.params.names());
        for (a, b) in loaded.params.values().iter().zip(model.params.values()) {
            assert_eq!(a.dim(), b.dim());
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_non_checkpoints() {
        let dir = std::env::temp_dir().join(format!("topkit-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bogus.tkmd");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::BadMagic)));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
