//! Tape-based reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records one forward pass as an append-only tape of nodes.
//! Nodes are created strictly after their operands, so walking the tape in
//! reverse is a reverse topological order and [`Graph::backward`] visits each
//! node exactly once.
//!
//! Shape mismatches are programming errors in the calling model code and
//! panic with both offending shapes in the message.

use crate::nn::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    /// Elementwise product.
    Mul(VarId, VarId),
    /// Elementwise `scale * x + shift`; only the scale matters backward.
    Affine { x: VarId, scale: f64 },
    /// `[m,n] x [n,p] -> [m,p]`.
    Matmul { a: VarId, b: VarId },
    /// `[m,n] x [n] -> [m]`.
    Matvec { w: VarId, x: VarId },
    /// Inner product of two vectors, shape `[1]`.
    Dot(VarId, VarId),
    Concat(Vec<VarId>),
    /// Contiguous slice of a vector.
    Slice { x: VarId, start: usize },
    Tanh(VarId),
    Sigmoid(VarId),
    Relu(VarId),
    /// `ln(1 + e^x)`, elementwise.
    Softplus(VarId),
    Softmax(VarId),
    /// `ln sum exp` of a vector, shape `[1]`.
    LogSumExp(VarId),
    /// Sum of all entries, shape `[1]`.
    Sum(VarId),
    /// Elementwise max over same-shaped vectors; `argmax` fixes the winner
    /// per position for the backward pass.
    MaxOver { xs: Vec<VarId>, argmax: Vec<usize> },
    /// Inverted dropout; the mask already carries the `1/keep` scaling.
    Dropout { x: VarId, mask: Vec<f64> },
    /// One row of a `[rows, cols]` table.
    Lookup { table: VarId, row: usize },
    /// `sum_t weights[t] * vectors[t]`.
    WeightedSum { weights: VarId, vectors: Vec<VarId> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one scalar output with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> &Tensor {
        &self.grads[id.0]
    }
}

/// The recording tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        debug_assert!(value.all_finite(), "non-finite value produced on the tape");
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    /// Introduces an input or parameter value.
    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> VarId {
        self.leaf(Tensor::scalar(x))
    }

    fn same_shape(&self, a: VarId, b: VarId, op: &str) -> Vec<usize> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        assert_eq!(sa, sb, "{op}: shape mismatch {sa:?} vs {sb:?}");
        sa.to_vec()
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let shape = self.same_shape(a, b, "add");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        self.push(Tensor::from_vec(shape, data), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        let shape = self.same_shape(a, b, "sub");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        self.push(Tensor::from_vec(shape, data), Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        let shape = self.same_shape(a, b, "mul");
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        self.push(Tensor::from_vec(shape, data), Op::Mul(a, b))
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: VarId, scale: f64, shift: f64) -> VarId {
        let value = Tensor::from_vec(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| scale * v + shift).collect(),
        );
        self.push(value, Op::Affine { x, scale })
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let (av, bv) = (self.value(a), self.value(b));
        assert!(
            av.is_matrix() && bv.is_matrix() && av.cols() == bv.rows(),
            "matmul: incompatible shapes {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let (m, n, p) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            for k in 0..n {
                let aik = av.at(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..p {
                    out[i * p + j] += aik * bv.at(k, j);
                }
            }
        }
        self.push(Tensor::matrix(m, p, out), Op::Matmul { a, b })
    }

    /// Matrix-vector product `[m,n] x [n] -> [m]`.
    pub fn matvec(&mut self, w: VarId, x: VarId) -> VarId {
        let (wv, xv) = (self.value(w), self.value(x));
        assert!(
            wv.is_matrix() && xv.is_vector() && wv.cols() == xv.len(),
            "matvec: incompatible shapes {:?} vs {:?}",
            wv.shape(),
            xv.shape()
        );
        let (m, n) = (wv.rows(), wv.cols());
        let mut out = vec![0.0; m];
        let wd = wv.data();
        let xd = xv.data();
        for i in 0..m {
            let row = &wd[i * n..(i + 1) * n];
            out[i] = row.iter().zip(xd).map(|(a, b)| a * b).sum();
        }
        self.push(Tensor::vector(out), Op::Matvec { w, x })
    }

    pub fn dot(&mut self, a: VarId, b: VarId) -> VarId {
        let shape = self.same_shape(a, b, "dot");
        assert_eq!(shape.len(), 1, "dot expects vectors, got shape {shape:?}");
        let v = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        self.push(Tensor::scalar(v), Op::Dot(a, b))
    }

    pub fn concat(&mut self, parts: &[VarId]) -> VarId {
        assert!(!parts.is_empty(), "concat of zero vectors");
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert!(v.is_vector(), "concat expects vectors, got {:?}", v.shape());
            data.extend_from_slice(v.data());
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: VarId, start: usize, len: usize) -> VarId {
        let v = self.value(x);
        assert!(
            v.is_vector() && start + len <= v.len(),
            "slice [{start}..{}] out of bounds for shape {:?}",
            start + len,
            v.shape()
        );
        let data = v.data()[start..start + len].to_vec();
        self.push(Tensor::vector(data), Op::Slice { x, start })
    }

    fn unary(&mut self, x: VarId, f: impl Fn(f64) -> f64, op: Op) -> VarId {
        let value = Tensor::from_vec(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| f(*v)).collect(),
        );
        self.push(value, op)
    }

    pub fn tanh(&mut self, x: VarId) -> VarId {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: VarId) -> VarId {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: VarId) -> VarId {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn softmax(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        assert!(v.is_vector(), "softmax expects a vector, got {:?}", v.shape());
        let out = softmax_values(v.data());
        self.push(Tensor::vector(out), Op::Softmax(x))
    }

    pub fn log_sum_exp(&mut self, x: VarId) -> VarId {
        let v = self.value(x);
        assert!(v.is_vector(), "log_sum_exp expects a vector, got {:?}", v.shape());
        let m = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = v.data().iter().map(|a| (a - m).exp()).sum();
        self.push(Tensor::scalar(m + s.ln()), Op::LogSumExp(x))
    }

    pub fn sum(&mut self, x: VarId) -> VarId {
        let v: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(x))
    }

    /// Elementwise maximum over same-shaped vectors.
    pub fn max_over(&mut self, xs: &[VarId]) -> VarId {
        assert!(!xs.is_empty(), "max_over of zero vectors");
        let len = self.value(xs[0]).len();
        for &x in xs {
            assert_eq!(
                self.value(x).shape(),
                self.value(xs[0]).shape(),
                "max_over: shape mismatch {:?} vs {:?}",
                self.value(x).shape(),
                self.value(xs[0]).shape()
            );
        }
        let mut out = self.value(xs[0]).data().to_vec();
        let mut argmax = vec![0usize; len];
        for (k, &x) in xs.iter().enumerate().skip(1) {
            for (i, v) in self.value(x).data().iter().enumerate() {
                if *v > out[i] {
                    out[i] = *v;
                    argmax[i] = k;
                }
            }
        }
        self.push(
            Tensor::vector(out),
            Op::MaxOver {
                xs: xs.to_vec(),
                argmax,
            },
        )
    }

    /// Applies a precomputed inverted-dropout mask.
    pub fn dropout_mask(&mut self, x: VarId, mask: Vec<f64>) -> VarId {
        assert_eq!(
            self.value(x).len(),
            mask.len(),
            "dropout mask length {} vs value shape {:?}",
            mask.len(),
            self.value(x).shape()
        );
        let value = Tensor::from_vec(
            self.value(x).shape().to_vec(),
            self.value(x)
                .data()
                .iter()
                .zip(&mask)
                .map(|(v, m)| v * m)
                .collect(),
        );
        self.push(value, Op::Dropout { x, mask })
    }

    /// One row of an embedding table.
    pub fn lookup(&mut self, table: VarId, row: usize) -> VarId {
        let t = self.value(table);
        assert!(
            t.is_matrix() && row < t.rows(),
            "lookup row {row} out of bounds for shape {:?}",
            t.shape()
        );
        let cols = t.cols();
        let data = t.data()[row * cols..(row + 1) * cols].to_vec();
        self.push(Tensor::vector(data), Op::Lookup { table, row })
    }

    /// `sum_t weights[t] * vectors[t]` where `weights` has one entry per vector.
    pub fn weighted_sum(&mut self, weights: VarId, vectors: &[VarId]) -> VarId {
        let w = self.value(weights);
        assert!(
            w.is_vector() && w.len() == vectors.len(),
            "weighted_sum: {} weights for {} vectors",
            w.len(),
            vectors.len()
        );
        assert!(!vectors.is_empty(), "weighted_sum of zero vectors");
        let dim = self.value(vectors[0]).len();
        let mut out = vec![0.0; dim];
        for (t, &v) in vectors.iter().enumerate() {
            let coeff = self.value(weights).data()[t];
            let vd = self.value(v);
            assert_eq!(
                vd.len(),
                dim,
                "weighted_sum: vector {t} has shape {:?}, expected length {dim}",
                vd.shape()
            );
            for (o, x) in out.iter_mut().zip(vd.data()) {
                *o += coeff * x;
            }
        }
        self.push(
            Tensor::vector(out),
            Op::WeightedSum {
                weights,
                vectors: vectors.to_vec(),
            },
        )
    }

    /// Backpropagates from a scalar node, returning gradients for every node.
    pub fn backward(&self, out: VarId) -> Gradients {
        assert_eq!(
            self.value(out).len(),
            1,
            "backward expects a scalar output, got shape {:?}",
            self.value(out).shape()
        );
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[out.0].data_mut()[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            let g = std::mem::replace(&mut grads[idx], Tensor::zeros(&[0]));
            if g.data().iter().all(|x| *x == 0.0) {
                grads[idx] = g;
                continue;
            }
            let gd = g.data();
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], gd, 1.0);
                    accumulate(&mut grads[b.0], gd, 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], gd, 1.0);
                    accumulate(&mut grads[b.0], gd, -1.0);
                }
                Op::Mul(a, b) => {
                    let bv: Vec<f64> = self.value(*b).data().to_vec();
                    let av: Vec<f64> = self.value(*a).data().to_vec();
                    for (i, gi) in gd.iter().enumerate() {
                        grads[a.0].data_mut()[i] += gi * bv[i];
                    }
                    for (i, gi) in gd.iter().enumerate() {
                        grads[b.0].data_mut()[i] += gi * av[i];
                    }
                }
                Op::Affine { x, scale } => {
                    accumulate(&mut grads[x.0], gd, *scale);
                }
                Op::Matmul { a, b } => {
                    let (m, n) = (self.value(*a).rows(), self.value(*a).cols());
                    let p = self.value(*b).cols();
                    // dA += G . B^T ; dB += A^T . G
                    for i in 0..m {
                        for k in 0..n {
                            let mut acc = 0.0;
                            for j in 0..p {
                                acc += gd[i * p + j] * self.value(*b).at(k, j);
                            }
                            grads[a.0].data_mut()[i * n + k] += acc;
                        }
                    }
                    for k in 0..n {
                        for j in 0..p {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += self.value(*a).at(i, k) * gd[i * p + j];
                            }
                            grads[b.0].data_mut()[k * p + j] += acc;
                        }
                    }
                }
                Op::Matvec { w, x } => {
                    let (m, n) = (self.value(*w).rows(), self.value(*w).cols());
                    let xv = self.value(*x).data();
                    let wd = self.value(*w).data();
                    {
                        let gw = grads[w.0].data_mut();
                        for i in 0..m {
                            let gi = gd[i];
                            if gi == 0.0 {
                                continue;
                            }
                            for k in 0..n {
                                gw[i * n + k] += gi * xv[k];
                            }
                        }
                    }
                    let gx = grads[x.0].data_mut();
                    for i in 0..m {
                        let gi = gd[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &wd[i * n..(i + 1) * n];
                        for (k, wv) in row.iter().enumerate() {
                            gx[k] += gi * wv;
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let s = gd[0];
                    let bv: Vec<f64> = self.value(*b).data().to_vec();
                    let av: Vec<f64> = self.value(*a).data().to_vec();
                    for (i, v) in bv.iter().enumerate() {
                        grads[a.0].data_mut()[i] += s * v;
                    }
                    for (i, v) in av.iter().enumerate() {
                        grads[b.0].data_mut()[i] += s * v;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        let gp = grads[p.0].data_mut();
                        for i in 0..len {
                            gp[i] += gd[offset + i];
                        }
                        offset += len;
                    }
                }
                Op::Slice { x, start } => {
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gx[start + i] += gi;
                    }
                }
                Op::Tanh(x) => {
                    let y = self.nodes[idx].value.data();
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gx[i] += gi * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Sigmoid(x) => {
                    let y = self.nodes[idx].value.data();
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gx[i] += gi * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Relu(x) => {
                    let v = self.value(*x).data();
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        if v[i] > 0.0 {
                            gx[i] += gi;
                        }
                    }
                }
                Op::Softplus(x) => {
                    let v = self.value(*x).data();
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gx[i] += gi * sigmoid(v[i]);
                    }
                }
                Op::Softmax(x) => {
                    // dx = s * (g - <g, s>)
                    let s = self.nodes[idx].value.data();
                    let inner: f64 = gd.iter().zip(s).map(|(a, b)| a * b).sum();
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gx[i] += s[i] * (gi - inner);
                    }
                }
                Op::LogSumExp(x) => {
                    let s = softmax_values(self.value(*x).data());
                    let gx = grads[x.0].data_mut();
                    for (i, si) in s.iter().enumerate() {
                        gx[i] += gd[0] * si;
                    }
                }
                Op::Sum(x) => {
                    accumulate_scalar(&mut grads[x.0], gd[0]);
                }
                Op::MaxOver { xs, argmax } => {
                    for (i, gi) in gd.iter().enumerate() {
                        grads[xs[argmax[i]].0].data_mut()[i] += gi;
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = grads[x.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gx[i] += gi * mask[i];
                    }
                }
                Op::Lookup { table, row } => {
                    let cols = self.value(*table).cols();
                    let gt = grads[table.0].data_mut();
                    for (i, gi) in gd.iter().enumerate() {
                        gt[row * cols + i] += gi;
                    }
                }
                Op::WeightedSum { weights, vectors } => {
                    for (t, &v) in vectors.iter().enumerate() {
                        let coeff = self.value(*weights).data()[t];
                        let vd: Vec<f64> = self.value(v).data().to_vec();
                        {
                            let gv = grads[v.0].data_mut();
                            for (i, gi) in gd.iter().enumerate() {
                                gv[i] += gi * coeff;
                            }
                        }
                        let inner: f64 = gd.iter().zip(&vd).map(|(a, b)| a * b).sum();
                        grads[weights.0].data_mut()[t] += inner;
                    }
                }
            }
            grads[idx] = g;
        }
        Gradients { grads }
    }
}

fn accumulate(dst: &mut Tensor, src: &[f64], scale: f64) {
    for (d, s) in dst.data_mut().iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn accumulate_scalar(dst: &mut Tensor, s: f64) {
    for d in dst.data_mut().iter_mut() {
        *d += s;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (1.0 + (-x.abs()).exp()).ln()
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|a| (a - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetric() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let s = g.softmax(x);
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one_and_nonnegative() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![3.0, -1.0, 0.5, 700.0, -700.0]));
        let s = g.softmax(x);
        let sum: f64 = g.value(s).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(g.value(s).data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn elementwise_product() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = g.leaf(Tensor::vector(vec![3.0, 4.0]));
        let c = g.mul(a, b);
        assert_eq!(g.value(c).data(), &[3.0, 8.0]);
    }

    #[test]
    fn matvec_identity() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::identity(3));
        let x = g.leaf(Tensor::vector(vec![1.5, -2.0, 0.25]));
        let y = g.matvec(w, x);
        assert_eq!(g.value(y).data(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::identity(2));
        let b = g.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let c = g.matmul(a, b);
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn backward_through_product() {
        // d/dx sum(x * x) = 2x
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, -3.0]));
        let y = g.mul(x, x);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert_eq!(grads.get(x).data(), &[2.0, -6.0]);
    }

    #[test]
    fn backward_through_logsumexp_is_softmax() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let l = g.log_sum_exp(x);
        let grads = g.backward(l);
        let s = softmax_values(&[1.0, 2.0, 3.0]);
        for (a, b) in grads.get(x).data().iter().zip(&s) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_and_concat_roundtrip_gradients() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
        let a = g.slice(x, 0, 2);
        let b = g.slice(x, 2, 2);
        let c = g.concat(&[b, a]);
        let s = g.sum(c);
        let grads = g.backward(s);
        assert_eq!(grads.get(x).data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn lookup_gradient_hits_one_row() {
        let mut g = Graph::new();
        let table = g.leaf(Tensor::matrix(3, 2, vec![0.0; 6]));
        let row = g.lookup(table, 1);
        let s = g.sum(row);
        let grads = g.backward(s);
        assert_eq!(grads.get(table).data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn weighted_sum_matches_manual() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::vector(vec![0.25, 0.75]));
        let a = g.leaf(Tensor::vector(vec![4.0, 0.0]));
        let b = g.leaf(Tensor::vector(vec![0.0, 8.0]));
        let y = g.weighted_sum(w, &[a, b]);
        assert_eq!(g.value(y).data(), &[1.0, 6.0]);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert_eq!(grads.get(w).data(), &[4.0, 8.0]);
        assert_eq!(grads.get(a).data(), &[0.25, 0.25]);
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn add_shape_mismatch_panics_with_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0]));
        let b = g.leaf(Tensor::vector(vec![1.0, 2.0]));
        let _ = g.add(a, b);
    }

    #[test]
    fn max_over_routes_gradient_to_winner() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::vector(vec![1.0, 5.0]));
        let b = g.leaf(Tensor::vector(vec![2.0, 3.0]));
        let m = g.max_over(&[a, b]);
        assert_eq!(g.value(m).data(), &[2.0, 5.0]);
        let s = g.sum(m);
        let grads = g.backward(s);
        assert_eq!(grads.get(a).data(), &[0.0, 1.0]);
        assert_eq!(grads.get(b).data(), &[1.0, 0.0]);
    }
}
