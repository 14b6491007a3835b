//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Tape`] records every operation of one forward evaluation. Dense
//! layers read their weights from a flat parameter buffer by offset, so the
//! backward pass can accumulate straight into a gradient buffer of the same
//! layout.

use crate::error::ModelError;
use crate::scalar::Scalar;
use crate::sgn::gmm_log_density_with_grad;

pub type NodeId = usize;

/// A dense layer stored in a flat parameter buffer: row-major `n_out x n_in`
/// weights at `w`, optional bias of length `n_out` at `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseRef {
    pub w: usize,
    pub b: Option<usize>,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Dense(NodeId, DenseRef),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Scale(NodeId, T),
    Mask(NodeId, Vec<T>),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Sum(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    WeightedSum(NodeId, Vec<NodeId>),
    /// Gradient of the output with respect to the input, computed forward.
    Fused(NodeId, Vec<T>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Vec<T>,
    op: Op<T>,
}

pub struct Tape<'p, T> {
    params: &'p [T],
    nodes: Vec<Node<T>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Dot product with eight independent accumulators (fixed order, so results
/// stay deterministic).
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[T; 8] = x.try_into().expect("chunk of 8");
        let y: &[T; 8] = y.try_into().expect("chunk of 8");
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn softplus<T: Scalar>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p [T]) -> Self {
        Self { params, nodes: Vec::with_capacity(256) }
    }

    pub fn params(&self) -> &'p [T] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.nodes[id].value[0]
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    fn map(&mut self, a: NodeId, f: impl Fn(T) -> T, op: Op<T>) -> NodeId {
        let v = self.nodes[a].value.iter().map(|&x| f(x)).collect();
        self.push(v, op)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T, op: Op<T>) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.len(), vb.len(), "elementwise operands differ in length");
        let v = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        self.push(v, op)
    }

    pub fn input(&mut self, v: Vec<T>) -> NodeId {
        self.push(v, Op::Input)
    }

    pub fn dense(&mut self, x: NodeId, layer: DenseRef) -> NodeId {
        let xv = &self.nodes[x].value;
        assert_eq!(xv.len(), layer.n_in, "dense input length");
        let w = &self.params[layer.w..layer.w + layer.n_in * layer.n_out];
        let mut y = match layer.b {
            Some(b) => self.params[b..b + layer.n_out].to_vec(),
            None => vec![T::zero(); layer.n_out],
        };
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += dot(&w[o * layer.n_in..(o + 1) * layer.n_in], xv);
        }
        self.push(y, Op::Dense(x, layer))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, T::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.map(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map(a, T::exp, Op::Exp(a))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    /// Elementwise product with a constant vector (dropout masks).
    pub fn mask(&mut self, a: NodeId, m: Vec<T>) -> NodeId {
        let v = self.nodes[a].value.iter().zip(&m).map(|(&x, &k)| x * k).collect();
        self.push(v, Op::Mask(a, m))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let v = parts.iter().flat_map(|&p| self.nodes[p].value.iter().copied()).collect();
        self.push(v, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a].value[start..start + len].to_vec();
        self.push(v, Op::Slice(a, start))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a].value.iter().copied().sum();
        self.push(vec![s], Op::Sum(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = softmax(&self.nodes[a].value);
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let m = x.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + x.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        let v = x.iter().map(|&v| v - lse).collect();
        self.push(v, Op::LogSoftmax(a))
    }

    /// `sum_k weights[k] * items[k]`.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> NodeId {
        let w = &self.nodes[weights].value;
        assert_eq!(w.len(), items.len(), "one weight per item");
        let n = self.nodes[items[0]].value.len();
        let mut v = vec![T::zero(); n];
        for (k, &it) in items.iter().enumerate() {
            for (o, x) in v.iter_mut().zip(&self.nodes[it].value) {
                *o += w[k] * *x;
            }
        }
        self.push(v, Op::WeightedSum(weights, items.to_vec()))
    }

    /// Log density of the mixture parameterized by the raw head output `raw`
    /// at target `y`.
    pub fn gmm_log_density(
        &mut self,
        raw: NodeId,
        y: [T; 3],
        m: usize,
        k_reg: T,
        raw_sigma: bool,
    ) -> Result<NodeId, ModelError> {
        let (v, g) = gmm_log_density_with_grad(&self.nodes[raw].value, y, m, k_reg, raw_sigma)?;
        Ok(self.push(vec![v], Op::Fused(raw, g)))
    }

    /// Backpropagates from the scalar node `out`, accumulating `seed *
    /// d out / d params` into `grad`.
    pub fn backward(&self, out: NodeId, seed: T, grad: &mut [T]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer layout");
        let mut g: Vec<Vec<T>> = vec![Vec::new(); out + 1];
        g[out] = vec![seed; self.nodes[out].value.len()];
        for id in (0..=out).rev() {
            if g[id].is_empty() {
                continue;
            }
            let gy = std::mem::take(&mut g[id]);
            let node = &self.nodes[id];
            let y = &node.value;
            let acc = |g: &mut Vec<Vec<T>>, target: NodeId, f: &dyn Fn(usize) -> T| {
                let n = self.nodes[target].value.len();
                if g[target].is_empty() {
                    g[target] = (0..n).map(f).collect();
                } else {
                    for (i, v) in g[target].iter_mut().enumerate() {
                        *v += f(i);
                    }
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Dense(x, l) => {
                    let xv = &self.nodes[*x].value;
                    let w = &self.params[l.w..l.w + l.n_in * l.n_out];
                    let mut gx = vec![T::zero(); l.n_in];
                    for o in 0..l.n_out {
                        let go = gy[o];
                        if go == T::zero() {
                            continue;
                        }
                        let row = &w[o * l.n_in..(o + 1) * l.n_in];
                        let grow = &mut grad[l.w + o * l.n_in..l.w + (o + 1) * l.n_in];
                        for ((gxi, gwi), (&wi, &xi)) in gx.iter_mut().zip(grow.iter_mut()).zip(row.iter().zip(xv)) {
                            *gxi += wi * go;
                            *gwi += go * xi;
                        }
                    }
                    if let Some(b) = l.b {
                        for o in 0..l.n_out {
                            grad[b + o] += gy[o];
                        }
                    }
                    acc(&mut g, *x, &|i| gx[i]);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, &|i| gy[i]);
                    acc(&mut g, *b, &|i| gy[i]);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *a, &|i| gy[i]);
                    acc(&mut g, *b, &|i| -gy[i]);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    acc(&mut g, *a, &|i| gy[i] * vb[i]);
                    acc(&mut g, *b, &|i| gy[i] * va[i]);
                }
                Op::Tanh(a) => acc(&mut g, *a, &|i| gy[i] * (T::one() - y[i] * y[i])),
                Op::Sigmoid(a) => acc(&mut g, *a, &|i| gy[i] * y[i] * (T::one() - y[i])),
                Op::Softplus(a) => {
                    let x = &self.nodes[*a].value;
                    acc(&mut g, *a, &|i| gy[i] * sigmoid(x[i]))
                }
                Op::Exp(a) => acc(&mut g, *a, &|i| gy[i] * y[i]),
                Op::Scale(a, c) => acc(&mut g, *a, &|i| gy[i] * *c),
                Op::Mask(a, m) => acc(&mut g, *a, &|i| gy[i] * m[i]),
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.nodes[p].value.len();
                        acc(&mut g, p, &|i| gy[off + i]);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = gy.len();
                    let s = *start;
                    acc(&mut g, *a, &|i| if i >= s && i < s + n { gy[i - s] } else { T::zero() });
                }
                Op::Sum(a) => acc(&mut g, *a, &|_| gy[0]),
                Op::Softmax(a) => {
                    let dot: T = gy.iter().zip(y).map(|(&g, &y)| g * y).sum();
                    acc(&mut g, *a, &|i| y[i] * (gy[i] - dot));
                }
                Op::LogSoftmax(a) => {
                    let total: T = gy.iter().copied().sum();
                    acc(&mut g, *a, &|i| gy[i] - y[i].exp() * total);
                }
                Op::WeightedSum(w, items) => {
                    let wv = &self.nodes[*w].value;
                    let gw: Vec<T> = items
                        .iter()
                        .map(|&it| self.nodes[it].value.iter().zip(&gy).map(|(&x, &g)| x * g).sum())
                        .collect();
                    acc(&mut g, *w, &|k| gw[k]);
                    for (k, &it) in items.iter().enumerate() {
                        acc(&mut g, it, &|i| wv[k] * gy[i]);
                    }
                }
                Op::Fused(a, d) => acc(&mut g, *a, &|i| gy[0] * d[i]),
            }
        }
    }
}
