//! Greedy decoding into frames.
//!
//! Decoding never panics on malformed model output: anything that fails to
//! parse back into a frame is returned as a structured [`DecodeFailure`],
//! which evaluation counts as a non-match.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{parse_frame, Frame};
use crate::inventory::{from_index_frame, IndexFrame, Inventory, InventoryError};
use crate::model::transformer::Graph;
use crate::model::vocab::{BOS, EOS};
use crate::model::{build_source, ParserMode, TrainedModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeCause {
    /// Output tokens did not parse as a frame.
    Parse(String),
    /// Pointer index with no inventory component.
    UnknownIndex(usize),
    /// Nothing was generated before the length budget ran out.
    EmptyOutput,
    /// The encoder input exceeded `max_source_len`.
    SourceTooLong,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("decode failure ({cause:?}): `{}`", tokens.join(" "))]
pub struct DecodeFailure {
    pub tokens: Vec<String>,
    pub cause: DecodeCause,
}

impl DecodeFailure {
    pub fn empty_output(tokens: Vec<String>) -> Self {
        DecodeFailure { tokens, cause: DecodeCause::EmptyOutput }
    }
}

/// Greedy argmax decode of raw ids, starting from the begin marker. The
/// returned sequence excludes begin/end markers; generation stops at the end
/// marker or when the total budget `max_target_len` is exhausted.
pub fn greedy_decode_ids(model: &TrainedModel, src: &[usize]) -> Vec<usize> {
    let mut graph = Graph::new(&model.config, &model.params, None);
    let memory = graph.encode(src);
    let mut seq = vec![BOS];
    while seq.len() < model.config.max_target_len {
        let logits = graph.decode(&seq, memory);
        let row = graph.tape.value(logits).row(seq.len() - 1).to_owned();
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (i, &score) in row.iter().enumerate() {
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        if best == EOS {
            break;
        }
        seq.push(best);
    }
    seq.remove(0);
    seq
}

/// Greedy decode of one utterance into a frame. Pointer-mode outputs pass
/// through the inventory's index dictionary; copy-generate outputs reparse
/// directly.
pub fn predict(
    model: &TrainedModel,
    utterance: &str,
    inventory: &Inventory,
) -> Result<Frame, DecodeFailure> {
    let src = match build_source(utterance, inventory, &model.config, &model.vocab) {
        Ok(src) => src,
        Err(_) => {
            return Err(DecodeFailure {
                tokens: Vec::new(),
                cause: DecodeCause::SourceTooLong,
            })
        }
    };
    let ids = greedy_decode_ids(model, &src);
    let tokens = model.vocab.decode(&ids);
    if tokens.is_empty() {
        return Err(DecodeFailure::empty_output(tokens));
    }
    match model.config.mode {
        ParserMode::InventoryPointer => {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            let index_frame = IndexFrame::parse_tokens(&refs).map_err(|e| DecodeFailure {
                tokens: tokens.clone(),
                cause: DecodeCause::Parse(e.to_string()),
            })?;
            from_index_frame(&index_frame, inventory).map_err(|e| {
                let cause = match e {
                    InventoryError::UnknownIndex(i) => DecodeCause::UnknownIndex(i),
                    other => DecodeCause::Parse(other.to_string()),
                };
                DecodeFailure { tokens: tokens.clone(), cause }
            })
        }
        ParserMode::CopyGenerate => {
            parse_frame(&tokens.join(" ")).map_err(|e| DecodeFailure {
                tokens: tokens.clone(),
                cause: DecodeCause::Parse(e.to_string()),
            })
        }
    }
}
