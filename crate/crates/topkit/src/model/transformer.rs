//! Micro pre-norm encoder-decoder transformer assembled on the autodiff
//! tape. The embedding matrix is shared between the encoder input, decoder
//! input, and output projection, so adapting the vocabulary means appending
//! embedding rows and nothing else.

use std::collections::HashMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::autodiff::{NodeId, Tape, NEG_INF};
use crate::model::ModelConfig;

pub const EMBEDDING: &str = "embedding";
const INIT_STD: f64 = 0.02;

/// Named parameter tensors in a stable order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, name: &str) -> &Array2<f64> {
        &self.values[self.index[name]]
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Array2<f64> {
        &mut self.values[self.index[name]]
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet::new()
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    use rand::Rng;
    // Box-Muller keeps us off distribution-crate version churn.
    let mut draw = || {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
    };
    Array2::from_shape_simple_fn((rows, cols), &mut draw)
}

fn add_attention_params(params: &mut ParamSet, prefix: &str, d: usize, rng: &mut ChaCha8Rng) {
    for proj in ["wq", "wk", "wv", "wo"] {
        params.add(&format!("{prefix}.{proj}"), normal(rng, d, d, INIT_STD));
    }
    for bias in ["bq", "bk", "bv", "bo"] {
        params.add(&format!("{prefix}.{bias}"), Array2::zeros((1, d)));
    }
}

fn add_layer_norm_params(params: &mut ParamSet, prefix: &str, d: usize) {
    params.add(&format!("{prefix}.g"), Array2::ones((1, d)));
    params.add(&format!("{prefix}.b"), Array2::zeros((1, d)));
}

fn add_ffn_params(params: &mut ParamSet, prefix: &str, d: usize, f: usize, rng: &mut ChaCha8Rng) {
    params.add(&format!("{prefix}.w1"), normal(rng, d, f, INIT_STD));
    params.add(&format!("{prefix}.b1"), Array2::zeros((1, f)));
    params.add(&format!("{prefix}.w2"), normal(rng, f, d, INIT_STD));
    params.add(&format!("{prefix}.b2"), Array2::zeros((1, d)));
}

/// Seeded parameter initialization for the given vocabulary size.
pub fn init_params(config: &ModelConfig, vocab_size: usize) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.model_dim;
    let mut params = ParamSet::new();
    params.add(EMBEDDING, normal(&mut rng, vocab_size, d, INIT_STD));
    for i in 0..config.layers {
        add_layer_norm_params(&mut params, &format!("enc{i}.ln1"), d);
        add_attention_params(&mut params, &format!("enc{i}.attn"), d, &mut rng);
        add_layer_norm_params(&mut params, &format!("enc{i}.ln2"), d);
        add_ffn_params(&mut params, &format!("enc{i}.ffn"), d, config.ffn_dim, &mut rng);
    }
    for i in 0..config.layers {
        add_layer_norm_params(&mut params, &format!("dec{i}.ln1"), d);
        add_attention_params(&mut params, &format!("dec{i}.self_attn"), d, &mut rng);
        add_layer_norm_params(&mut params, &format!("dec{i}.ln2"), d);
        add_attention_params(&mut params, &format!("dec{i}.cross_attn"), d, &mut rng);
        add_layer_norm_params(&mut params, &format!("dec{i}.ln3"), d);
        add_ffn_params(&mut params, &format!("dec{i}.ffn"), d, config.ffn_dim, &mut rng);
    }
    add_layer_norm_params(&mut params, "enc_final_ln", d);
    add_layer_norm_params(&mut params, "dec_final_ln", d);
    params
}

/// Grow the embedding matrix by `extra` seeded random rows (copy-generate
/// vocabulary extension). Existing rows are untouched.
pub fn append_embedding_rows(params: &mut ParamSet, extra: usize, seed: u64) {
    if extra == 0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let emb = params.value_mut(EMBEDDING);
    let d = emb.ncols();
    let new_rows = normal(&mut rng, extra, d, INIT_STD);
    let mut grown = Array2::zeros((emb.nrows() + extra, d));
    grown.slice_mut(ndarray::s![..emb.nrows(), ..]).assign(emb);
    grown.slice_mut(ndarray::s![emb.nrows().., ..]).assign(&new_rows);
    *emb = grown;
}

fn sinusoidal_encoding(len: usize, d: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((len, d));
    for pos in 0..len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            pe[[pos, 2 * i]] = angle.sin();
            pe[[pos, 2 * i + 1]] = angle.cos();
        }
    }
    pe
}

fn causal_mask(len: usize) -> Array2<f64> {
    let mut mask = Array2::zeros((len, len));
    for i in 0..len {
        for j in i + 1..len {
            mask[[i, j]] = NEG_INF;
        }
    }
    mask
}

/// One forward construction over a tape. Parameters are cloned in as leaves
/// so their gradients can be read back by position after `backward`.
pub struct Graph<'a> {
    pub tape: Tape,
    config: &'a ModelConfig,
    param_nodes: Vec<NodeId>,
    param_index: &'a HashMap<String, usize>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'a> Graph<'a> {
    /// `dropout_seed` enables training-mode dropout; `None` runs in eval
    /// mode regardless of the configured rate.
    pub fn new(config: &'a ModelConfig, params: &'a ParamSet, dropout_seed: Option<u64>) -> Self {
        let mut tape = Tape::new();
        let param_nodes =
            params.values().iter().map(|v| tape.leaf(v.clone())).collect();
        let dropout_rng = match dropout_seed {
            Some(seed) if config.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Graph { tape, config, param_nodes, param_index: &params.index, dropout_rng }
    }

    pub fn param_node(&self, name: &str) -> NodeId {
        self.param_nodes[self.param_index[name]]
    }

    pub fn param_nodes(&self) -> &[NodeId] {
        &self.param_nodes
    }

    fn dropout(&mut self, x: NodeId) -> NodeId {
        let Some(rng) = self.dropout_rng.as_mut() else { return x };
        use rand::Rng;
        let p = self.config.dropout;
        let keep = 1.0 - p;
        let shape = self.tape.value(x).raw_dim();
        let mask = Array2::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.tape.mul_const(x, mask)
    }

    fn layer_norm(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let g = self.param_node(&format!("{prefix}.g"));
        let b = self.param_node(&format!("{prefix}.b"));
        self.tape.layer_norm(x, g, b)
    }

    fn projection(&mut self, x: NodeId, prefix: &str, w: &str, b: &str) -> NodeId {
        let w = self.param_node(&format!("{prefix}.{w}"));
        let b = self.param_node(&format!("{prefix}.{b}"));
        let xw = self.tape.matmul(x, w);
        self.tape.add_row(xw, b)
    }

    /// Multi-head scaled dot-product attention; `mask` is added to every
    /// head's score matrix before the softmax.
    fn attention(
        &mut self,
        queries_from: NodeId,
        keys_values_from: NodeId,
        prefix: &str,
        mask: Option<&Array2<f64>>,
    ) -> NodeId {
        let d = self.config.model_dim;
        let heads = self.config.heads;
        let dh = d / heads;
        let q = self.projection(queries_from, prefix, "wq", "bq");
        let k = self.projection(keys_values_from, prefix, "wk", "bk");
        let v = self.projection(keys_values_from, prefix, "wv", "bv");
        let mut contexts = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.slice_cols(q, h * dh, dh);
            let kh = self.tape.slice_cols(k, h * dh, dh);
            let vh = self.tape.slice_cols(v, h * dh, dh);
            let kt = self.tape.transpose(kh);
            let scores = self.tape.matmul(qh, kt);
            let scaled = self.tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let masked = match mask {
                Some(m) => self.tape.add_const(scaled, m),
                None => scaled,
            };
            let weights = self.tape.softmax_rows(masked);
            contexts.push(self.tape.matmul(weights, vh));
        }
        let merged = self.tape.concat_cols(&contexts);
        self.projection(merged, prefix, "wo", "bo")
    }

    fn ffn(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let w1 = self.param_node(&format!("{prefix}.w1"));
        let b1 = self.param_node(&format!("{prefix}.b1"));
        let w2 = self.param_node(&format!("{prefix}.w2"));
        let b2 = self.param_node(&format!("{prefix}.b2"));
        let h = self.tape.matmul(x, w1);
        let h = self.tape.add_row(h, b1);
        let h = self.tape.gelu(h);
        let h = self.tape.matmul(h, w2);
        self.tape.add_row(h, b2)
    }

    fn embed(&mut self, ids: &[usize]) -> NodeId {
        let emb = self.param_node(EMBEDDING);
        let x = self.tape.gather(emb, ids);
        let x = self.tape.scale(x, (self.config.model_dim as f64).sqrt());
        let pe = sinusoidal_encoding(ids.len(), self.config.model_dim);
        let x = self.tape.add_const(x, &pe);
        self.dropout(x)
    }

    /// Encode a source id sequence; returns the final-normed memory.
    pub fn encode(&mut self, src_ids: &[usize]) -> NodeId {
        let mut x = self.embed(src_ids);
        for i in 0..self.config.layers {
            let normed = self.layer_norm(x, &format!("enc{i}.ln1"));
            let attended = self.attention(normed, normed, &format!("enc{i}.attn"), None);
            let attended = self.dropout(attended);
            x = self.tape.add(x, attended);
            let normed = self.layer_norm(x, &format!("enc{i}.ln2"));
            let ff = self.ffn(normed, &format!("enc{i}.ffn"));
            let ff = self.dropout(ff);
            x = self.tape.add(x, ff);
        }
        self.layer_norm(x, "enc_final_ln")
    }

    /// Decode (teacher-forced) against encoder memory; returns logits, one
    /// row per decoder input position.
    pub fn decode(&mut self, tgt_in_ids: &[usize], memory: NodeId) -> NodeId {
        let mask = causal_mask(tgt_in_ids.len());
        let mut x = self.embed(tgt_in_ids);
        for i in 0..self.config.layers {
            let normed = self.layer_norm(x, &format!("dec{i}.ln1"));
            let attended =
                self.attention(normed, normed, &format!("dec{i}.self_attn"), Some(&mask));
            let attended = self.dropout(attended);
            x = self.tape.add(x, attended);
            let normed = self.layer_norm(x, &format!("dec{i}.ln2"));
            let attended =
                self.attention(normed, memory, &format!("dec{i}.cross_attn"), None);
            let attended = self.dropout(attended);
            x = self.tape.add(x, attended);
            let normed = self.layer_norm(x, &format!("dec{i}.ln3"));
            let ff = self.ffn(normed, &format!("dec{i}.ffn"));
            let ff = self.dropout(ff);
            x = self.tape.add(x, ff);
        }
        let x = self.layer_norm(x, "dec_final_ln");
        let emb = self.param_node(EMBEDDING);
        let emb_t = self.tape.transpose(emb);
        self.tape.matmul(x, emb_t)
    }

    /// Sum of per-position cross entropies for one sample under teacher
    /// forcing: input `target[..n-1]`, labels `target[1..]`.
    pub fn sample_loss(&mut self, src_ids: &[usize], tgt_ids: &[usize]) -> NodeId {
        let memory = self.encode(src_ids);
        let logits = self.decode(&tgt_ids[..tgt_ids.len() - 1], memory);
        self.tape.cross_entropy_sum(logits, &tgt_ids[1..])
    }
}
