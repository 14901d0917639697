use crate::error::NdError;
use crate::tensor::{matmul_at_b_into, matmul_into, pairwise_row_sum, Tensor};
use crate::Result;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// `a (m x k) * b (k x n)`
    MatMul(Value, Value),
    /// `x (r x c) + bias (1 x c)` broadcast over rows
    AddBias(Value, Value),
    Relu(Value),
    Add(Value, Value),
    Sub(Value, Value),
    /// Elementwise product (same shape)
    Mul(Value, Value),
    /// `m * x + c` elementwise (the constant only matters in forward)
    Affine(Value, f64, #[allow(dead_code)] f64),
    Exp(Value),
    Ln(Value),
    /// Values outside `[lo, hi]` are pinned; their gradient is zero.
    Clamp(Value, f64, f64),
    /// Mean over each consecutive group of `group` rows.
    MeanRows(Value, usize),
    /// Frobenius norm of `a - b`, emitted as a 1x1 scalar.
    EuclideanDist(Value, Value),
    SumAll(Value),
}

struct Node {
    data: Tensor,
    grad: Tensor,
    op: Op,
    /// True when some parameter leaf is reachable below this node; backward
    /// skips gradient work for subtrees that cannot influence parameters.
    requires: bool,
}

/// Append-only operation tape. Insertion order is a topological order of the
/// computation graph, so the backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, data: Tensor, op: Op, requires: bool) -> Value {
        let (r, c) = data.shape();
        self.nodes.push(Node {
            data,
            grad: Tensor::zeros(r, c),
            op,
            requires,
        });
        Value(self.nodes.len() - 1)
    }

    fn node(&self, v: Value) -> &Node {
        &self.nodes[v.0]
    }

    /// Differentiable leaf (a parameter). The tensor is copied onto the tape.
    pub fn leaf(&mut self, t: &Tensor) -> Value {
        self.push(t.clone(), Op::Leaf, true)
    }

    /// Non-differentiable leaf (input data). Backward skips its gradient.
    pub fn constant(&mut self, t: &Tensor) -> Value {
        self.push(t.clone(), Op::Leaf, false)
    }

    pub fn constant_owned(&mut self, t: Tensor) -> Value {
        self.push(t, Op::Leaf, false)
    }

    pub fn data(&self, v: Value) -> &Tensor {
        &self.node(v).data
    }

    pub fn grad(&self, v: Value) -> &Tensor {
        &self.node(v).grad
    }

    pub fn shape(&self, v: Value) -> (usize, usize) {
        self.node(v).data.shape()
    }

    fn requires2(&self, a: Value, b: Value) -> bool {
        self.node(a).requires || self.node(b).requires
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Value {
        let out = self.node(a).data.matmul(&self.node(b).data);
        self.push(out, Op::MatMul(a, b), self.requires2(a, b))
    }

    pub fn add_bias(&mut self, x: Value, bias: Value) -> Value {
        let xb = &self.node(x).data;
        let bb = &self.node(bias).data;
        assert_eq!(bb.rows(), 1, "bias must be a row vector");
        assert_eq!(
            xb.cols(),
            bb.cols(),
            "add_bias shape mismatch: {:?} vs {:?}",
            xb.shape(),
            bb.shape()
        );
        let mut out = xb.clone();
        let b_row = bb.row(0).to_vec();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(&b_row) {
                *o += b;
            }
        }
        self.push(out, Op::AddBias(x, bias), self.requires2(x, bias))
    }

    pub fn relu(&mut self, x: Value) -> Value {
        let mut out = self.node(x).data.clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let req = self.node(x).requires;
        self.push(out, Op::Relu(x), req)
    }

    pub fn add(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (&self.node(a).data, &self.node(b).data);
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let mut out = ta.clone();
        out.add_assign(tb);
        self.push(out, Op::Add(a, b), self.requires2(a, b))
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (&self.node(a).data, &self.node(b).data);
        assert_eq!(ta.shape(), tb.shape(), "sub shape mismatch");
        let mut out = ta.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(tb.data()) {
            *o -= x;
        }
        self.push(out, Op::Sub(a, b), self.requires2(a, b))
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (&self.node(a).data, &self.node(b).data);
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let mut out = ta.clone();
        for (o, &x) in out.data_mut().iter_mut().zip(tb.data()) {
            *o *= x;
        }
        self.push(out, Op::Mul(a, b), self.requires2(a, b))
    }

    /// `m * x + c` elementwise.
    pub fn affine(&mut self, x: Value, m: f64, c: f64) -> Value {
        let mut out = self.node(x).data.clone();
        for v in out.data_mut() {
            *v = m * *v + c;
        }
        let req = self.node(x).requires;
        self.push(out, Op::Affine(x, m, c), req)
    }

    pub fn scale(&mut self, x: Value, m: f64) -> Value {
        self.affine(x, m, 0.0)
    }

    pub fn exp(&mut self, x: Value) -> Value {
        let mut out = self.node(x).data.clone();
        for v in out.data_mut() {
            *v = v.exp();
        }
        let req = self.node(x).requires;
        self.push(out, Op::Exp(x), req)
    }

    /// Natural log. Inputs must be strictly positive (clamp first if unsure);
    /// NaN propagates so divergence can be detected at the loss.
    pub fn ln(&mut self, x: Value) -> Value {
        let mut out = self.node(x).data.clone();
        for v in out.data_mut() {
            debug_assert!(!(*v <= 0.0), "ln of non-positive value {v}");
            *v = v.ln();
        }
        let req = self.node(x).requires;
        self.push(out, Op::Ln(x), req)
    }

    pub fn clamp(&mut self, x: Value, lo: f64, hi: f64) -> Value {
        let mut out = self.node(x).data.clone();
        for v in out.data_mut() {
            *v = v.clamp(lo, hi);
        }
        let req = self.node(x).requires;
        self.push(out, Op::Clamp(x, lo, hi), req)
    }

    /// Mean over all rows, producing a single row. Gradient distributes
    /// `1/rows` to every contributing row. Uses pairwise summation.
    pub fn mean_rows(&mut self, x: Value) -> Result<Value> {
        let rows = self.node(x).data.rows();
        self.mean_rows_grouped(x, rows)
    }

    /// Mean over each consecutive group of `group` rows; the row count must be
    /// a multiple of `group`. Output has `rows / group` rows.
    pub fn mean_rows_grouped(&mut self, x: Value, group: usize) -> Result<Value> {
        let t = &self.node(x).data;
        if t.rows() == 0 || group == 0 {
            return Err(NdError::EmptyPool);
        }
        assert_eq!(
            t.rows() % group,
            0,
            "row count {} not divisible by group {}",
            t.rows(),
            group
        );
        let out_rows = t.rows() / group;
        let cols = t.cols();
        let mut out = Tensor::zeros(out_rows, cols);
        let inv = 1.0 / group as f64;
        for g in 0..out_rows {
            let mut sum = vec![0.0; cols];
            pairwise_row_sum(t, g * group, (g + 1) * group, &mut sum);
            for (o, s) in out.row_mut(g).iter_mut().zip(&sum) {
                *o = s * inv;
            }
        }
        let req = self.node(x).requires;
        Ok(self.push(out, Op::MeanRows(x, group), req))
    }

    /// `|| a - b ||` (Frobenius), a 1x1 scalar. The backward pass uses the safe
    /// form `(a - b) / max(d, 1e-12)` so a zero distance yields zero gradients.
    pub fn euclidean_dist(&mut self, a: Value, b: Value) -> Value {
        let (ta, tb) = (&self.node(a).data, &self.node(b).data);
        assert_eq!(ta.shape(), tb.shape(), "euclidean_dist shape mismatch");
        let mut sq = 0.0;
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            let d = x - y;
            sq += d * d;
        }
        self.push(
            Tensor::scalar(sq.sqrt()),
            Op::EuclideanDist(a, b),
            self.requires2(a, b),
        )
    }

    pub fn sum_all(&mut self, x: Value) -> Value {
        let s = crate::tensor::pairwise_sum(self.node(x).data.data());
        let req = self.node(x).requires;
        self.push(Tensor::scalar(s), Op::SumAll(x), req)
    }

    /// Resets every gradient on the tape to zero.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad.data_mut().fill(0.0);
        }
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into the
    /// stored `grad` buffers, so calling backward twice doubles them.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        let (r, c) = self.node(loss).data.shape();
        if (r, c) != (1, 1) {
            return Err(NdError::NonScalarLoss { rows: r, cols: c });
        }
        // The sweep runs on a scratch buffer and is added into the stored
        // grads at the end, so repeated calls accumulate exactly.
        let mut scratch: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.data.rows(), n.data.cols()))
            .collect();
        scratch[loss.0].set(0, 0, 1.0);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires {
                continue;
            }
            // Split off the upstream gradient to satisfy the borrow checker;
            // it is put back after the operands are updated.
            let upstream = std::mem::replace(&mut scratch[idx], Tensor::zeros(0, 0));
            match self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].requires {
                        // dA = dY * B^T; transpose B once, then a plain matmul.
                        let bt = self.nodes[b.0].data.transposed();
                        matmul_into(&upstream, &bt, &mut scratch[a.0], true);
                    }
                    if self.nodes[b.0].requires {
                        // dB = A^T * dY
                        let a_data = &self.nodes[a.0].data;
                        matmul_at_b_into(a_data, &upstream, &mut scratch[b.0], true);
                    }
                }
                Op::AddBias(x, bias) => {
                    if self.nodes[x.0].requires {
                        scratch[x.0].add_assign(&upstream);
                    }
                    if self.nodes[bias.0].requires {
                        let g = scratch[bias.0].row_mut(0);
                        for r in 0..upstream.rows() {
                            for (gb, &u) in g.iter_mut().zip(upstream.row(r)) {
                                *gb += u;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let data = &self.nodes[idx].data;
                    let gx = &mut scratch[x.0];
                    for (i, (&u, &y)) in upstream.data().iter().zip(data.data()).enumerate() {
                        if y > 0.0 {
                            gx.data_mut()[i] += u;
                        }
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[a.0].requires {
                        scratch[a.0].add_assign(&upstream);
                    }
                    if self.nodes[b.0].requires {
                        scratch[b.0].add_assign(&upstream);
                    }
                }
                Op::Sub(a, b) => {
                    if self.nodes[a.0].requires {
                        scratch[a.0].add_assign(&upstream);
                    }
                    if self.nodes[b.0].requires {
                        for (g, &u) in scratch[b.0].data_mut().iter_mut().zip(upstream.data()) {
                            *g -= u;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.nodes[a.0].requires {
                        let b_data = self.nodes[b.0].data.clone();
                        for ((g, &u), &bv) in scratch[a.0]
                            .data_mut()
                            .iter_mut()
                            .zip(upstream.data())
                            .zip(b_data.data())
                        {
                            *g += u * bv;
                        }
                    }
                    if self.nodes[b.0].requires {
                        let a_data = self.nodes[a.0].data.clone();
                        for ((g, &u), &av) in scratch[b.0]
                            .data_mut()
                            .iter_mut()
                            .zip(upstream.data())
                            .zip(a_data.data())
                        {
                            *g += u * av;
                        }
                    }
                }
                Op::Affine(x, m, _) => {
                    for (g, &u) in scratch[x.0].data_mut().iter_mut().zip(upstream.data()) {
                        *g += m * u;
                    }
                }
                Op::Exp(x) => {
                    let y = &self.nodes[idx].data;
                    for ((g, &u), &yv) in scratch[x.0]
                        .data_mut()
                        .iter_mut()
                        .zip(upstream.data())
                        .zip(y.data())
                    {
                        *g += u * yv;
                    }
                }
                Op::Ln(x) => {
                    let xin = &self.nodes[x.0].data;
                    for ((g, &u), &xv) in scratch[x.0]
                        .data_mut()
                        .iter_mut()
                        .zip(upstream.data())
                        .zip(xin.data())
                    {
                        *g += u / xv;
                    }
                }
                Op::Clamp(x, lo, hi) => {
                    let xin = &self.nodes[x.0].data;
                    for ((g, &u), &xv) in scratch[x.0]
                        .data_mut()
                        .iter_mut()
                        .zip(upstream.data())
                        .zip(xin.data())
                    {
                        if xv > lo && xv < hi {
                            *g += u;
                        }
                    }
                }
                Op::MeanRows(x, group) => {
                    let inv = 1.0 / group as f64;
                    let gx = &mut scratch[x.0];
                    let cols = gx.cols();
                    for r in 0..gx.rows() {
                        let src = upstream.row(r / group);
                        let dst = &mut gx.data_mut()[r * cols..(r + 1) * cols];
                        for (d, &u) in dst.iter_mut().zip(src) {
                            *d += u * inv;
                        }
                    }
                }
                Op::EuclideanDist(a, b) => {
                    let u = upstream.item();
                    let d = self.nodes[idx].data.item().max(1e-12);
                    let coeff = u / d;
                    let (ta, tb) = (self.nodes[a.0].data.clone(), self.nodes[b.0].data.clone());
                    if self.nodes[a.0].requires {
                        for ((g, &x), &y) in scratch[a.0]
                            .data_mut()
                            .iter_mut()
                            .zip(ta.data())
                            .zip(tb.data())
                        {
                            *g += coeff * (x - y);
                        }
                    }
                    if self.nodes[b.0].requires {
                        for ((g, &x), &y) in scratch[b.0]
                            .data_mut()
                            .iter_mut()
                            .zip(ta.data())
                            .zip(tb.data())
                        {
                            *g -= coeff * (x - y);
                        }
                    }
                }
                Op::SumAll(x) => {
                    let u = upstream.item();
                    for g in scratch[x.0].data_mut() {
                        *g += u;
                    }
                }
            }
            scratch[idx] = upstream;
        }

        for (node, s) in self.nodes.iter_mut().zip(scratch) {
            if node.requires {
                node.grad.add_assign(&s);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_is_two_x() {
        // loss = x^2 at x = 3 -> grad 6
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0));
        let sq = tape.mul(x, x);
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).item(), 6.0);
    }

    #[test]
    fn relu_kills_gradient_for_negative_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(-1.0));
        let y = tape.relu(x);
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).item(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, NdError::NonScalarLoss { rows: 1, cols: 2 }));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::scalar(3.0));
        let sq = tape.mul(x, x);
        let loss = tape.sum_all(sq);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).item(), 12.0);
        tape.reset_grads();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).item(), 6.0);
    }

    #[test]
    fn mean_rows_distributes_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::from_vec(2, 2, vec![1.0, 3.0, 3.0, 5.0]));
        let m = tape.mean_rows(x).unwrap();
        assert_eq!(tape.data(m).data(), &[2.0, 4.0]);
        let s = tape.sum_all(m);
        tape.backward(s).unwrap();
        assert!(tape.grad(x).data().iter().all(|&g| g == 0.5));
    }

    #[test]
    fn mean_rows_rejects_empty_input() {
        let mut tape = Tape::new();
        let x = tape.constant_owned(Tensor::zeros(0, 3));
        assert!(matches!(tape.mean_rows(x), Err(NdError::EmptyPool)));
    }

    #[test]
    fn euclidean_dist_at_zero_has_finite_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::from_vec(1, 2, vec![0.5, 0.5]));
        let b = tape.constant(&Tensor::from_vec(1, 2, vec![0.5, 0.5]));
        let d = tape.euclidean_dist(a, b);
        tape.backward(d).unwrap();
        assert!(tape.grad(a).all_finite());
        assert_eq!(tape.grad(a).data(), &[0.0, 0.0]);
    }
}
