//! Finite-difference verification of the training objective.
//!
//! Compares analytic gradients of the summed per-position log loss against
//! central differences at double precision. Coordinates are sampled among
//! those with non-negligible analytic gradient, since relative error is
//! meaningless at the finite-difference noise floor; the magnitude cutoff is
//! `MIN_GRAD_MAGNITUDE`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::inventory::Inventory;
use crate::model::transformer::Graph;
use crate::model::vocab::Vocabulary;
use crate::model::{build_source, build_target, ModelConfig, ModelError, TrainedModel};

/// Analytic gradients below this magnitude are excluded from relative
/// comparison.
pub const MIN_GRAD_MAGNITUDE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    pub checked: usize,
    /// False when no coordinates were compared.
    pub valid: bool,
}

/// Check `n_checks` randomly chosen parameter coordinates of a freshly
/// initialized model on one sample. Requires dropout = 0.
pub fn grad_check(
    config: &ModelConfig,
    sample: &Sample,
    inventory: &Inventory,
    epsilon: f64,
    n_checks: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    if config.dropout > 0.0 {
        return Err(ModelError::DropoutEnabled);
    }
    if n_checks == 0 {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            mean_rel_error: 0.0,
            checked: 0,
            valid: false,
        });
    }
    let ds = Dataset::new(vec![sample.clone()]);
    let vocab = Vocabulary::build(&ds, &[inventory], config.mode, config.m_max);
    let mut model = TrainedModel::init(config.clone(), vocab)?;
    let src = build_source(&sample.utterance, inventory, &model.config, &model.vocab)?;
    let tgt = build_target(&sample.frame, inventory, &model.config, &model.vocab)?;

    let forward = |model: &TrainedModel| -> f64 {
        let mut graph = Graph::new(&model.config, &model.params, None);
        let loss = graph.sample_loss(&src, &tgt);
        graph.tape.value(loss)[[0, 0]]
    };

    // Analytic pass.
    let mut graph = Graph::new(&model.config, &model.params, None);
    let loss = graph.sample_loss(&src, &tgt);
    let node_grads = graph.tape.backward(loss);
    let analytic: Vec<ndarray::Array2<f64>> = graph
        .param_nodes()
        .iter()
        .zip(model.params.values())
        .map(|(node, p)| {
            node_grads[node.0]
                .clone()
                .unwrap_or_else(|| ndarray::Array2::zeros(p.raw_dim()))
        })
        .collect();
    drop(graph);

    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (p, grad) in analytic.iter().enumerate() {
        for ((r, c), &g) in grad.indexed_iter() {
            if g.abs() >= MIN_GRAD_MAGNITUDE {
                candidates.push((p, r, c));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(n_checks);
    if candidates.is_empty() {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            mean_rel_error: 0.0,
            checked: 0,
            valid: false,
        });
    }

    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    for &(p, r, c) in &candidates {
        let name = model.params.names()[p].clone();
        let original = model.params.value(&name)[[r, c]];
        model.params.value_mut(&name)[[r, c]] = original + epsilon;
        let plus = forward(&model);
        model.params.value_mut(&name)[[r, c]] = original - epsilon;
        let minus = forward(&model);
        model.params.value_mut(&name)[[r, c]] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[p][[r, c]];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        max_rel = max_rel.max(rel);
        sum_rel += rel;
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        mean_rel_error: sum_rel / candidates.len() as f64,
        checked: candidates.len(),
        valid: true,
    })
}
