//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every operation appends a node holding its forward value; node ids are
//! therefore topologically ordered by construction. `backward` walks the
//! nodes in reverse, accumulating adjoints in index order so results are
//! bit-reproducible.

use crate::error::{Error, Result};
use crate::params::{Layout, ParamVector};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param {
        segment: usize,
    },
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Relu(NodeId),
    /// Per-row cross-entropy; saves the softmax probabilities.
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    Mean(NodeId),
    Sum(NodeId),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Param { .. } => vec![],
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::Tanh(a) | Op::Relu(a) | Op::Mean(a) | Op::Sum(a) => vec![*a],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Recorded computation graph for a scalar loss.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    layout: Option<Layout>,
    output: Option<NodeId>,
    replayed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    /// Input ids of a node, for graph inspection.
    pub fn inputs_of(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    /// Registers every segment of `params` as a differentiable leaf. Only one
    /// parameter vector may be registered per tape.
    pub fn register_params(&mut self, params: &ParamVector) -> Result<Vec<NodeId>> {
        if self.layout.is_some() {
            return Err(Error::Layout("parameters already registered on this tape".into()));
        }
        let ids: Vec<NodeId> = (0..params.layout().segments().len())
            .map(|i| self.push(Op::Param { segment: i }, params.segment_tensor(i)))
            .collect();
        self.layout = Some(params.layout().clone());
        Ok(ids)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul [{m}x{k}] x [{k2}x{n}]")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out)))
    }

    /// Adds a length-`n` bias to every row of an `[m x n]` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(bias).len() != n {
            return Err(Error::Shape(format!(
                "bias of length {} for {n} columns",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for i in 0..m {
            for (o, bj) in out[i * n..(i + 1) * n].iter_mut().zip(b) {
                *o += bj;
            }
        }
        Ok(self.push(Op::AddBias(x, bias), Tensor::from_parts(vec![m, n], out)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let out = zip(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::Add(a, b), Tensor::from_parts(shape, out)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let out = zip(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Op::Mul(a, b), Tensor::from_parts(shape, out)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    /// Fused softmax + cross-entropy, one loss per row of `[B x C]` logits.
    /// Uses the log-sum-exp shift so large logits stay finite.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (b, c) = self.value(logits).dims2()?;
        if labels.len() != b {
            return Err(Error::Shape(format!("{} labels for {b} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Shape(format!("label {bad} out of range for {c} classes")));
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; b * c];
        let mut losses = Vec::with_capacity(b);
        for i in 0..b {
            let row = &z[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (p, &zj) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (zj - max).exp();
                sum += *p;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p /= sum;
            }
            losses.push(sum.ln() + max - row[labels[i]]);
        }
        let op = Op::SoftmaxCrossEntropy {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push(op, Tensor::from_parts(vec![b], losses)))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s = v.data().iter().fold(0.0, |acc, x| acc + x) / v.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().fold(0.0, |acc, x| acc + x);
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Marks the scalar loss node. Replaces any previous mark.
    pub fn set_output(&mut self, id: NodeId) -> Result<()> {
        let v = self.value(id);
        if !v.is_scalar() {
            return Err(Error::NonScalarOutput(v.shape().to_vec()));
        }
        self.output = Some(id);
        Ok(())
    }

    /// Re-arms the tape so `backward` may run again.
    pub fn reset(&mut self) {
        self.replayed = false;
    }

    /// Gradient of the marked output with respect to the registered
    /// parameters, in their `ParamVector` layout.
    pub fn backward(&mut self) -> Result<ParamVector> {
        let out = self.output.ok_or(Error::NoOutput)?;
        if self.replayed {
            return Err(Error::AlreadyReplayed);
        }
        let layout = self
            .layout
            .clone()
            .ok_or_else(|| Error::Layout("no parameters registered on tape".into()))?;
        self.replayed = true;

        let adjoints = self.adjoints(out);
        let mut grad = ParamVector::zeros(&layout);
        for (node, adj) in self.nodes.iter().zip(&adjoints) {
            if let (Op::Param { segment }, Some(adj)) = (&node.op, adj) {
                let seg = &layout.segments()[*segment];
                grad.values_mut()[seg.offset..seg.offset + seg.size()].copy_from_slice(adj);
            }
        }
        Ok(grad)
    }

    fn adjoints(&self, out: NodeId) -> Vec<Option<Vec<f64>>> {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[out.0] = Some(vec![1.0]);
        for idx in (0..=out.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param { .. } => adj[idx] = Some(g),
                Op::MatMul(a, b) => {
                    let (m, k) = self.value(*a).dims2().expect("checked at record time");
                    let n = node.value.shape()[1];
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let bp = &bv[p * n..(p + 1) * n];
                            da[i * k + p] = gi.iter().zip(bp).fold(0.0, |s, (x, y)| s + x * y);
                        }
                    }
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            for (d, gij) in db[p * n..(p + 1) * n].iter_mut().zip(gi) {
                                *d += aip * gij;
                            }
                        }
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::AddBias(x, bias) => {
                    let n = node.value.shape()[1];
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut adj, *x, g);
                    accumulate(&mut adj, *bias, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Mul(a, b) => {
                    let da = zip(&g, self.value(*b).data(), |x, y| x * y);
                    let db = zip(&g, self.value(*a).data(), |x, y| x * y);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale(a, c) => {
                    let da = g.iter().map(|x| x * c).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::Tanh(a) => {
                    let da = zip(&g, node.value.data(), |x, y| x * (1.0 - y * y));
                    accumulate(&mut adj, *a, da);
                }
                Op::Relu(a) => {
                    let da = zip(&g, self.value(*a).data(), |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(&mut adj, *a, da);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let c = self.value(*logits).shape()[1];
                    let mut dz = probs.clone();
                    for (i, &y) in labels.iter().enumerate() {
                        dz[i * c + y] -= 1.0;
                        for d in &mut dz[i * c..(i + 1) * c] {
                            *d *= g[i];
                        }
                    }
                    accumulate(&mut adj, *logits, dz);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut adj, *a, vec![g[0] / n as f64; n]);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut adj, *a, vec![g[0]; n]);
                }
            }
        }
        adj
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id.0] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(&g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let oi = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            for (o, bpj) in oi.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bpj;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(values: Vec<f64>) -> ParamVector {
        ParamVector::from_vec(values)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let p = theta(vec![0.3, -1.0, 2.5]);
        let mut tape = Tape::new();
        let ids = tape.register_params(&p).unwrap();
        let s = tape.sum(ids[0]);
        tape.set_output(s).unwrap();
        let g = tape.backward().unwrap();
        assert_eq!(g.values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_squared_norm_gradient_is_theta() {
        let p = theta(vec![0.3, -1.0, 2.5]);
        let mut tape = Tape::new();
        let ids = tape.register_params(&p).unwrap();
        let sq = tape.mul(ids[0], ids[0]).unwrap();
        let s = tape.sum(sq);
        let half = tape.scale(s, 0.5);
        tape.set_output(half).unwrap();
        assert_eq!(tape.backward().unwrap().values(), p.values());
    }

    #[test]
    fn backward_without_output_fails() {
        let mut tape = Tape::new();
        tape.register_params(&theta(vec![1.0])).unwrap();
        assert_eq!(tape.backward().unwrap_err(), Error::NoOutput);
    }

    #[test]
    fn replay_requires_reset() {
        let p = theta(vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let ids = tape.register_params(&p).unwrap();
        let s = tape.sum(ids[0]);
        tape.set_output(s).unwrap();
        let first = tape.backward().unwrap();
        assert_eq!(tape.backward().unwrap_err(), Error::AlreadyReplayed);
        tape.reset();
        assert_eq!(tape.backward().unwrap(), first);
    }

    #[test]
    fn output_must_be_scalar() {
        let mut tape = Tape::new();
        let ids = tape.register_params(&theta(vec![1.0, 2.0])).unwrap();
        assert!(matches!(tape.set_output(ids[0]), Err(Error::NonScalarOutput(_))));
    }

    #[test]
    fn inputs_precede_nodes() {
        let p = theta(vec![1.0, 2.0]);
        let mut tape = Tape::new();
        let ids = tape.register_params(&p).unwrap();
        let t = tape.tanh(ids[0]);
        let m = tape.mul(t, ids[0]).unwrap();
        let s = tape.mean(m);
        for id in [t, m, s] {
            assert!(tape.inputs_of(id).iter().all(|i| i < &id));
        }
    }

    #[test]
    fn cross_entropy_stable_at_large_logits() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[vec![1000.0, 0.0], vec![-1000.0, 1000.0]]).unwrap());
        let l = tape.softmax_cross_entropy(z, &[0, 0]).unwrap();
        let v = tape.value(l).data();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 2000.0);
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.matmul(a, b).is_err());
        let bias = tape.constant(Tensor::zeros(&[2]));
        assert!(tape.add_bias(a, bias).is_err());
        assert!(tape.softmax_cross_entropy(a, &[0, 3]).is_err());
        assert!(tape.softmax_cross_entropy(a, &[0]).is_err());
    }
}
