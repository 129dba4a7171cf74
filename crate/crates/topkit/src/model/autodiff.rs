//! Reverse-mode automatic differentiation over 2-D `f64` tensors.
//!
//! Each forward pass records ops on a tape; `backward` replays them in
//! reverse, accumulating gradients into lazily allocated buffers. All math is
//! double precision with a fixed evaluation order, so identical inputs give
//! bit-identical losses and gradients.

use ndarray::{s, Array2, Axis};

pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Additive mask value for disallowed attention positions.
pub const NEG_INF: f64 = -1e30;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    /// Broadcast-add a 1 x d row vector to every row of an n x d matrix.
    AddRow(usize, usize),
    Scale(usize, f64),
    Gelu(usize),
    SoftmaxRows(usize),
    LayerNorm { x: usize, gain: usize, bias: usize },
    SliceCols { x: usize, start: usize, len: usize },
    ConcatCols(Vec<usize>),
    Transpose(usize),
    AddConst(usize),
    MulConst(usize, Array2<f64>),
    Gather { table: usize, ids: Vec<usize> },
    /// Sum over rows of -log softmax(logits)[row, target[row]]; emits 1 x 1.
    CrossEntropySum { logits: usize, targets: Vec<usize> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(value, Op::MatMul(a.0, b.0))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(value, Op::Add(a.0, b.0))
    }

    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let value = &self.nodes[x.0].value + &self.nodes[row.0].value;
        self.push(value, Op::AddRow(x.0, row.0))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let value = &self.nodes[x.0].value * factor;
        self.push(value, Op::Scale(x.0, factor))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.mapv(|v| {
            let u = GELU_C * (v + GELU_A * v * v * v);
            0.5 * v * (1.0 + u.tanh())
        });
        self.push(value, Op::Gelu(x.0))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let mut value = self.nodes[x.0].value.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(value, Op::SoftmaxRows(x.0))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let g = &self.nodes[gain.0].value;
        let b = &self.nodes[bias.0].value;
        let d = xv.ncols() as f64;
        let mut value = Array2::zeros(xv.raw_dim());
        for (i, row) in xv.rows().into_iter().enumerate() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (j, &v) in row.iter().enumerate() {
                value[[i, j]] = (v - mean) * inv * g[[0, j]] + b[[0, j]];
            }
        }
        self.push(value, Op::LayerNorm { x: x.0, gain: gain.0, bias: bias.0 })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let value = self.nodes[x.0].value.slice(s![.., start..start + len]).to_owned();
        self.push(value, Op::SliceCols { x: x.0, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|id| self.nodes[id.0].value.view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat shapes");
        self.push(value, Op::ConcatCols(parts.iter().map(|id| id.0).collect()))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.t().to_owned();
        self.push(value, Op::Transpose(x.0))
    }

    pub fn add_const(&mut self, x: NodeId, constant: &Array2<f64>) -> NodeId {
        let value = &self.nodes[x.0].value + constant;
        self.push(value, Op::AddConst(x.0))
    }

    pub fn mul_const(&mut self, x: NodeId, constant: Array2<f64>) -> NodeId {
        let value = &self.nodes[x.0].value * &constant;
        self.push(value, Op::MulConst(x.0, constant))
    }

    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = &self.nodes[table.0].value;
        let mut value = Array2::zeros((ids.len(), t.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            value.row_mut(i).assign(&t.row(id));
        }
        self.push(value, Op::Gather { table: table.0, ids: ids.to_vec() })
    }

    /// Numerically stable sum of per-row cross entropies.
    pub fn cross_entropy_sum(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let l = &self.nodes[logits.0].value;
        assert_eq!(l.nrows(), targets.len(), "one target per logit row");
        let mut total = 0.0;
        for (row, &target) in l.rows().into_iter().zip(targets) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[target];
        }
        let value = Array2::from_elem((1, 1), total);
        self.push(value, Op::CrossEntropySum { logits: logits.0, targets: targets.to_vec() })
    }

    /// Backpropagate from a scalar (1 x 1) node. Returns per-node gradients;
    /// entries are `None` where no gradient flows.
    pub fn backward(&self, loss: NodeId) -> Vec<Option<Array2<f64>>> {
        assert_eq!(self.nodes[loss.0].value.dim(), (1, 1), "loss must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..self.nodes.len()).rev() {
            let Some(grad) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(grad); // keep for the caller
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = grad.dot(&self.nodes[*b].value.t());
                    let db = self.nodes[*a].value.t().dot(&grad);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, grad.clone());
                    accumulate(&mut grads, *b, grad);
                }
                Op::AddRow(x, row) => {
                    let drow = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *row, drow);
                    accumulate(&mut grads, *x, grad);
                }
                Op::Scale(x, factor) => {
                    accumulate(&mut grads, *x, &grad * *factor);
                }
                Op::Gelu(x) => {
                    let xv = &self.nodes[*x].value;
                    let mut dx = grad;
                    ndarray::Zip::from(&mut dx).and(xv).for_each(|g, &v| {
                        let u = GELU_C * (v + GELU_A * v * v * v);
                        let t = u.tanh();
                        let deriv = 0.5 * (1.0 + t)
                            + 0.5 * v * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        *g *= deriv;
                    });
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &self.nodes[i].value;
                    let mut dx = Array2::zeros(y.raw_dim());
                    for (r, (grow, yrow)) in
                        grad.rows().into_iter().zip(y.rows()).enumerate()
                    {
                        let dot: f64 = grow.iter().zip(yrow.iter()).map(|(g, y)| g * y).sum();
                        for (c, (&g, &y)) in grow.iter().zip(yrow.iter()).enumerate() {
                            dx[[r, c]] = y * (g - dot);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::LayerNorm { x, gain, bias } => {
                    let xv = &self.nodes[*x].value;
                    let g = &self.nodes[*gain].value;
                    let d = xv.ncols() as f64;
                    let mut dx = Array2::zeros(xv.raw_dim());
                    let mut dgain = Array2::zeros((1, xv.ncols()));
                    let mut dbias = Array2::zeros((1, xv.ncols()));
                    for (r, row) in xv.rows().into_iter().enumerate() {
                        let mean = row.sum() / d;
                        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
                        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|&v| (v - mean) * inv).collect();
                        let dxhat: Vec<f64> =
                            (0..xv.ncols()).map(|c| grad[[r, c]] * g[[0, c]]).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / d;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                        for c in 0..xv.ncols() {
                            dgain[[0, c]] += grad[[r, c]] * xhat[c];
                            dbias[[0, c]] += grad[[r, c]];
                            dx[[r, c]] =
                                inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *bias, dbias);
                }
                Op::SliceCols { x, start, len } => {
                    let mut dx = Array2::zeros(self.nodes[*x].value.raw_dim());
                    dx.slice_mut(s![.., *start..*start + *len]).assign(&grad);
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.nodes[p].value.ncols();
                        let dp = grad.slice(s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads, p, dp);
                        offset += w;
                    }
                }
                Op::Transpose(x) => {
                    accumulate(&mut grads, *x, grad.t().to_owned());
                }
                Op::AddConst(x) => {
                    accumulate(&mut grads, *x, grad);
                }
                Op::MulConst(x, constant) => {
                    accumulate(&mut grads, *x, &grad * constant);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Array2::zeros(self.nodes[*table].value.raw_dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut target = dt.row_mut(id);
                        target += &grad.row(r);
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::CrossEntropySum { logits, targets } => {
                    let l = &self.nodes[*logits].value;
                    let scale = grad[[0, 0]];
                    let mut dl = Array2::zeros(l.raw_dim());
                    for (r, (row, &target)) in l.rows().into_iter().zip(targets).enumerate() {
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        for (c, &v) in row.iter().enumerate() {
                            let p = (v - max).exp() / denom;
                            dl[[r, c]] = scale * (p - if c == target { 1.0 } else { 0.0 });
                        }
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }
        grads
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], idx: usize, delta: Array2<f64>) {
    match &mut grads[idx] {
        Some(existing) => *existing += &delta,
        slot @ None => *slot = Some(delta),
    }
}
