//! Reverse-mode autodiff over [`Tensor`] values. Forward values are computed
//! eagerly as ops are appended; `backward` walks the tape in reverse and
//! accumulates gradients for every parameter group it touched.
//!
//! Construction order is a topological order by definition, so the reverse
//! sweep is a single pass with no explicit graph search.

use crate::params::{Grads, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    GatherRows { param: ParamId, rows: Vec<usize> },
    Add(NodeId, NodeId),
    AddRow { x: NodeId, row: NodeId },
    Mul(NodeId, NodeId),
    Scale { x: NodeId, c: f64 },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, len: usize },
    RowSlice { x: NodeId, index: usize },
    LeakyRelu { x: NodeId, slope: f64 },
    Elu { x: NodeId, alpha: f64 },
    Tanh(NodeId),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    MeanRows(NodeId),
    SumAll(NodeId),
    LayerNormRows { x: NodeId, gamma: NodeId, beta: NodeId, eps: f64 },
    Dropout { x: NodeId, mask: Vec<f64> },
    BceFromLogits { logits: NodeId, labels: Vec<f64>, weights: Vec<f64>, eps: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

const GELU_COEF: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    let u = (2.0 / std::f64::consts::PI).sqrt() * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEF * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.params.get(id).clone();
        self.push(value, Op::Param(id))
    }

    /// Select rows of a parameter matrix (embedding lookup). Repeated row
    /// indices are allowed; their gradients accumulate.
    pub fn gather_rows(&mut self, param: ParamId, rows: Vec<usize>) -> NodeId {
        let table = self.params.get(param);
        let mut value = Tensor::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            value.row_mut(i).copy_from_slice(table.row(r));
        }
        self.push(value, Op::GatherRows { param, rows })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).add(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    /// Broadcast-add a 1×n row to every row of an m×n matrix.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let (xv, rv) = (self.value(x), self.value(row));
        assert_eq!(rv.rows(), 1);
        assert_eq!(xv.cols(), rv.cols());
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (d, s) in value.row_mut(r).iter_mut().zip(rv.row(0)) {
                *d += s;
            }
        }
        self.push(value, Op::AddRow { x, row })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape());
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(av.rows(), av.cols(), data);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).scale(c);
        self.push(value, Op::Scale { x, c })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows);
            for r in 0..rows {
                value.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut value = Tensor::zeros(total, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols);
            for r in 0..pv.rows() {
                value.row_mut(offset + r).copy_from_slice(pv.row(r));
            }
            offset += pv.rows();
        }
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        assert!(start + len <= xv.cols());
        let mut value = Tensor::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            value.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(value, Op::SliceCols { x, start, len })
    }

    pub fn row_slice(&mut self, x: NodeId, index: usize) -> NodeId {
        let xv = self.value(x);
        assert!(index < xv.rows());
        let value = Tensor::row_vector(xv.row(index).to_vec());
        self.push(value, Op::RowSlice { x, index })
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu { x, slope })
    }

    pub fn elu(&mut self, x: NodeId, alpha: f64) -> NodeId {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { alpha * (v.exp() - 1.0) });
        self.push(value, Op::Elu { x, alpha })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(gelu);
        self.push(value, Op::Gelu(x))
    }

    /// Softmax along each row.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    /// Column-wise mean over rows: m×n → 1×n.
    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let m = xv.rows() as f64;
        let mut value = Tensor::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (d, s) in value.row_mut(0).iter_mut().zip(xv.row(r)) {
                *d += s;
            }
        }
        for v in value.data_mut() {
            *v /= m;
        }
        self.push(value, Op::MeanRows(x))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::SumAll(x))
    }

    /// Row-wise layer normalization with learnable scale and shift.
    pub fn layer_norm_rows(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> NodeId {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        assert_eq!(gv.shape(), (1, xv.cols()));
        assert_eq!(bv.shape(), (1, xv.cols()));
        let n = xv.cols() as f64;
        let mut value = Tensor::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for (c, &v) in row.iter().enumerate() {
                let norm = (v - mean) * inv;
                value.set(r, c, gv.at(0, c) * norm + bv.at(0, c));
            }
        }
        self.push(value, Op::LayerNormRows { x, gamma, beta, eps })
    }

    /// Inverted dropout with a pre-drawn mask of 0.0 / (1/(1-p)) entries.
    pub fn dropout(&mut self, x: NodeId, mask: Vec<f64>) -> NodeId {
        let xv = self.value(x);
        assert_eq!(mask.len(), xv.len());
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_vec(xv.rows(), xv.cols(), data);
        self.push(value, Op::Dropout { x, mask })
    }

    /// Binary cross-entropy summed over the batch. `logits` is B×2; the
    /// positive-class probability is sigmoid(z1 - z0), clamped to
    /// [eps, 1-eps]. Each example's loss is scaled by its weight.
    pub fn bce_from_logits(
        &mut self,
        logits: NodeId,
        labels: Vec<f64>,
        weights: Vec<f64>,
        eps: f64,
    ) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.cols(), 2, "expected two logits per example");
        assert_eq!(labels.len(), lv.rows());
        assert_eq!(weights.len(), lv.rows());
        let mut total = 0.0;
        for j in 0..lv.rows() {
            let p = sigmoid(lv.at(j, 1) - lv.at(j, 0)).clamp(eps, 1.0 - eps);
            total -= weights[j] * (labels[j] * p.ln() + (1.0 - labels[j]) * (1.0 - p).ln());
        }
        self.push(Tensor::scalar(total), Op::BceFromLogits { logits, labels, weights, eps })
    }

    /// Reverse sweep from a scalar root, accumulating parameter gradients.
    pub fn backward(&self, root: NodeId, grads: &mut Grads) {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be scalar");
        let mut node_grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        node_grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = node_grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(id) => grads.get_mut(*id).add_assign(&g),
                Op::GatherRows { param, rows } => {
                    let pg = grads.get_mut(*param);
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, s) in pg.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d += s;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut node_grads, a.0, g.clone());
                    accumulate(&mut node_grads, b.0, g);
                }
                Op::AddRow { x, row } => {
                    let mut row_grad = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, s) in row_grad.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut node_grads, row.0, row_grad);
                    accumulate(&mut node_grads, x.0, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = elementwise(&g, bv, |x, y| x * y);
                    let gb = elementwise(&g, av, |x, y| x * y);
                    accumulate(&mut node_grads, a.0, ga);
                    accumulate(&mut node_grads, b.0, gb);
                }
                Op::Scale { x, c } => accumulate(&mut node_grads, x.0, g.scale(*c)),
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga = g.matmul(&bv.transpose());
                    let gb = av.transpose().matmul(&g);
                    accumulate(&mut node_grads, a.0, ga);
                    accumulate(&mut node_grads, b.0, gb);
                }
                Op::Transpose(x) => accumulate(&mut node_grads, x.0, g.transpose()),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.nodes[p.0].value.cols();
                        let mut part = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            part.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        accumulate(&mut node_grads, p.0, part);
                        offset += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.nodes[p.0].value.rows();
                        let mut part = Tensor::zeros(rows, g.cols());
                        for r in 0..rows {
                            part.row_mut(r).copy_from_slice(g.row(offset + r));
                        }
                        accumulate(&mut node_grads, p.0, part);
                        offset += rows;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        gx.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::RowSlice { x, index } => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    gx.row_mut(*index).copy_from_slice(g.row(0));
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = &self.nodes[x.0].value;
                    let gx = elementwise(&g, xv, |gi, v| if v > 0.0 { gi } else { gi * slope });
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::Elu { x, alpha } => {
                    let xv = &self.nodes[x.0].value;
                    let gx = elementwise(&g, xv, |gi, v| {
                        if v > 0.0 {
                            gi
                        } else {
                            gi * alpha * v.exp()
                        }
                    });
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::Tanh(x) => {
                    let yv = &self.nodes[i].value;
                    let gx = elementwise(&g, yv, |gi, y| gi * (1.0 - y * y));
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::Gelu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = elementwise(&g, xv, |gi, v| gi * gelu_grad(v));
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::SoftmaxRows(x) => {
                    let yv = &self.nodes[i].value;
                    let mut gx = Tensor::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(yv.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols() {
                            gx.set(r, c, yv.at(r, c) * (g.at(r, c) - dot));
                        }
                    }
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::MeanRows(x) => {
                    let xv = &self.nodes[x.0].value;
                    let scale = 1.0 / xv.rows() as f64;
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        for (d, s) in gx.row_mut(r).iter_mut().zip(g.row(0)) {
                            *d = s * scale;
                        }
                    }
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::SumAll(x) => {
                    let xv = &self.nodes[x.0].value;
                    let gx = Tensor::from_vec(
                        xv.rows(),
                        xv.cols(),
                        vec![g.to_scalar(); xv.len()],
                    );
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::LayerNormRows { x, gamma, beta, eps } => {
                    let xv = &self.nodes[x.0].value;
                    let gv = &self.nodes[gamma.0].value;
                    let n = xv.cols() as f64;
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    let mut ggamma = Tensor::zeros(1, xv.cols());
                    let mut gbeta = Tensor::zeros(1, xv.cols());
                    for r in 0..xv.rows() {
                        let row = xv.row(r);
                        let mean = row.iter().sum::<f64>() / n;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let inv = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                        let ghat: Vec<f64> =
                            (0..xv.cols()).map(|c| g.at(r, c) * gv.at(0, c)).collect();
                        let mean_ghat = ghat.iter().sum::<f64>() / n;
                        let mean_ghat_xhat =
                            ghat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..xv.cols() {
                            gx.set(r, c, inv * (ghat[c] - mean_ghat - xhat[c] * mean_ghat_xhat));
                            ggamma.set(0, c, ggamma.at(0, c) + g.at(r, c) * xhat[c]);
                            gbeta.set(0, c, gbeta.at(0, c) + g.at(r, c));
                        }
                    }
                    accumulate(&mut node_grads, x.0, gx);
                    accumulate(&mut node_grads, gamma.0, ggamma);
                    accumulate(&mut node_grads, beta.0, gbeta);
                }
                Op::Dropout { x, mask } => {
                    let data: Vec<f64> =
                        g.data().iter().zip(mask).map(|(gi, m)| gi * m).collect();
                    let gx = Tensor::from_vec(g.rows(), g.cols(), data);
                    accumulate(&mut node_grads, x.0, gx);
                }
                Op::BceFromLogits { logits, labels, weights, eps } => {
                    let lv = &self.nodes[logits.0].value;
                    let scale = g.to_scalar();
                    let mut gl = Tensor::zeros(lv.rows(), 2);
                    for j in 0..lv.rows() {
                        let p = sigmoid(lv.at(j, 1) - lv.at(j, 0));
                        // zero gradient through the clamp
                        if p > *eps && p < 1.0 - eps {
                            let d = scale * weights[j] * (p - labels[j]);
                            gl.set(j, 1, d);
                            gl.set(j, 0, -d);
                        }
                    }
                    accumulate(&mut node_grads, logits.0, gl);
                }
            }
        }
    }
}

fn accumulate(node_grads: &mut [Option<Tensor>], idx: usize, g: Tensor) {
    match &mut node_grads[idx] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn elementwise(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(g.shape(), other.shape());
    let data = g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::from_vec(g.rows(), g.cols(), data)
}
