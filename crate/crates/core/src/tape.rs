//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! Every operation appends a node holding its forward value and the recipe
//! for its backward rule; nodes only reference earlier nodes, so the tape is
//! topologically ordered by construction. `backward` walks it in reverse and
//! accumulates gradients additively.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::math::{self, CompensatedSum};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Rc<[usize]>),
    SegmentSum(Var, Rc<[usize]>),
    Mask(Var, Rc<[f64]>),
    Reshape(Var),
    CrossEntropy {
        logits: Var,
        targets: Rc<[usize]>,
        weights: Rc<[f64]>,
        probs: Vec<f64>,
    },
    Sum(Var),
    AddN(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

impl Node {
    fn rows(&self) -> usize {
        match self.shape.split_last() {
            Some((_, lead)) => lead.iter().product(),
            None => 1,
        }
    }

    fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    dropout_rng: Option<Rng>,
    stochastic: bool,
    fingerprint: Option<u64>,
}

/// Gradients produced by [`Tape::backward`], indexed by leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of a leaf. Non-leaf intermediates are not retained.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads
            .get(var.0)
            .filter(|g| !g.is_empty())
            .map(Vec::as_slice)
    }
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

impl Tape {
    /// Tape in inference mode: dropout is the identity.
    pub fn new() -> Self {
        Tape::default()
    }

    /// Tape in training mode with dropout masks drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Tape {
            dropout_rng: Some(rng::seeded(seed)),
            ..Tape::default()
        }
    }

    /// Switch an existing tape into training mode.
    pub fn set_training(&mut self, seed: u64) {
        self.dropout_rng = Some(rng::seeded(seed));
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    /// True once a dropout mask has actually been sampled.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    /// Start hashing the sign pattern of every ReLU input.
    pub fn track_activations(&mut self) {
        self.fingerprint = Some(0xCBF2_9CE4_8422_2325);
    }

    /// Hash of all ReLU on/off decisions so far, if tracking.
    pub fn activation_fingerprint(&self) -> Option<u64> {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].rows()
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].cols()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Copy of a recorded value as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf; it participates in differentiation iff
    /// `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        )
    }

    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape().to_vec(), t.into_data(), Op::Leaf, false))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(vec![rows, cols], vec![0.0; rows * cols], Op::Leaf, false)
    }

    /// `a (m x k) * b (k x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = (self.rows(a), self.cols(a));
        let (k2, n) = (self.rows(b), self.cols(b));
        if k != k2 {
            return Err(Error::dim("matmul inner dimension", k, k2));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, 0.0);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), needs))
    }

    /// Adds a bias vector to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = self.cols(x);
        let blen = self.nodes[bias.0].value.len();
        if blen != cols {
            return Err(Error::dim("bias width", cols, blen));
        }
        let b = &self.nodes[bias.0].value;
        let mut out = self.nodes[x.0].value.clone();
        for row in out.chunks_exact_mut(cols.max(1)) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(shape, out, Op::AddBias(x, bias), needs))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (la, lb) = (self.nodes[a.0].value.len(), self.nodes[b.0].value.len());
        if la != lb || self.cols(a) != self.cols(b) {
            return Err(Error::dim(format!("{what} operand size"), la, lb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.nodes[a.0].shape.clone();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(shape, out, Op::Add(a, b), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.nodes[a.0].shape.clone();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(shape, out, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        self.push(shape, out, Op::Scale(x, factor), needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let input = &self.nodes[x.0].value;
        if let Some(h) = self.fingerprint.as_mut() {
            let mut word = 0u64;
            for (i, v) in input.iter().enumerate() {
                word = (word << 1) | u64::from(*v > 0.0);
                if i % 64 == 63 {
                    *h = (*h ^ word).wrapping_mul(FNV_PRIME);
                    word = 0;
                }
            }
            *h = (*h ^ word ^ input.len() as u64).wrapping_mul(FNV_PRIME);
        }
        let out = input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        self.push(shape, out, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| math::sigmoid(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        self.push(shape, out, Op::Sigmoid(x), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| math::tanh(v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        self.push(shape, out, Op::Tanh(x), needs)
    }

    /// Concatenates matrices with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let rows = self.rows(first);
        let mut total = 0;
        for &p in parts {
            if self.rows(p) != rows {
                return Err(Error::dim("concat row count", rows, self.rows(p)));
            }
            total += self.cols(p);
        }
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for &p in parts {
            let c = self.cols(p);
            let src = &self.nodes[p.0].value;
            for r in 0..rows {
                out[r * total + offset..r * total + offset + c]
                    .copy_from_slice(&src[r * c..(r + 1) * c]);
            }
            offset += c;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(vec![rows, total], out, Op::Concat(parts.to_vec()), needs))
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (rows, cols) = (self.rows(x), self.cols(x));
        if start + width > cols {
            return Err(Error::bounds("column slice end", start + width, cols));
        }
        let src = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + start + width]);
        }
        let needs = self.needs(x);
        Ok(self.push(vec![rows, width], out, Op::SliceCols(x, start), needs))
    }

    /// Row `i` of the output is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Rc<[usize]>) -> Result<Var> {
        let (rows, cols) = (self.rows(x), self.cols(x));
        let src = &self.nodes[x.0].value;
        let mut out = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= rows {
                return Err(Error::bounds("row gather", i, rows));
            }
            out.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let needs = self.needs(x);
        Ok(self.push(vec![index.len(), cols], out, Op::Gather(x, index), needs))
    }

    /// Sums row `i` of `x` into output row `segment[i]`, visiting rows in
    /// ascending order.
    pub fn segment_sum(&mut self, x: Var, segment: Rc<[usize]>, segments: usize) -> Result<Var> {
        let (rows, cols) = (self.rows(x), self.cols(x));
        if segment.len() != rows {
            return Err(Error::dim("segment ids", rows, segment.len()));
        }
        let src = &self.nodes[x.0].value;
        let mut out = vec![0.0; segments * cols];
        for (r, &s) in segment.iter().enumerate() {
            if s >= segments {
                return Err(Error::bounds("segment id", s, segments));
            }
            let dst = &mut out[s * cols..(s + 1) * cols];
            for (d, v) in dst.iter_mut().zip(&src[r * cols..(r + 1) * cols]) {
                *d += v;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(vec![segments, cols], out, Op::SegmentSum(x, segment), needs))
    }

    /// Elementwise product with a constant.
    pub fn mask(&mut self, x: Var, mask: Rc<[f64]>) -> Result<Var> {
        let len = self.nodes[x.0].value.len();
        if mask.len() != len {
            return Err(Error::dim("mask length", len, mask.len()));
        }
        let out = self.value(x).iter().zip(mask.iter()).map(|(v, m)| v * m).collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        Ok(self.push(shape, out, Op::Mask(x, mask), needs))
    }

    /// Inverted dropout: identity unless the tape is in training mode.
    pub fn dropout(&mut self, x: Var, keep: f64) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::config(format!("dropout keep probability {keep}")));
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return Ok(x);
        };
        if keep == 1.0 {
            return Ok(x);
        }
        let len = self.nodes[x.0].value.len();
        let scale = 1.0 / keep;
        let mask: Rc<[f64]> = (0..len)
            .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect();
        self.stochastic = true;
        self.mask(x, mask)
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        let len = self.nodes[x.0].value.len();
        if numel != len {
            return Err(Error::dim("reshape element count", len, numel));
        }
        let out = self.nodes[x.0].value.clone();
        let needs = self.needs(x);
        Ok(self.push(shape, out, Op::Reshape(x), needs))
    }

    /// `sum_i -log softmax(logits_i)[targets_i]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let w: Rc<[f64]> = vec![1.0; targets.len()].into();
        self.weighted_cross_entropy(logits, targets.into(), w)
    }

    /// `sum_i weights_i * -log softmax(logits_i)[targets_i]`, stabilized by
    /// max subtraction and accumulated with compensated summation.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        targets: Rc<[usize]>,
        weights: Rc<[f64]>,
    ) -> Result<Var> {
        let (rows, classes) = (self.rows(logits), self.cols(logits));
        if targets.len() != rows {
            return Err(Error::dim("cross-entropy targets", rows, targets.len()));
        }
        if weights.len() != rows {
            return Err(Error::dim("cross-entropy weights", rows, weights.len()));
        }
        let src = &self.nodes[logits.0].value;
        let mut probs = vec![0.0; rows * classes];
        let mut total = CompensatedSum::default();
        for (r, &t) in targets.iter().enumerate() {
            if t >= classes {
                return Err(Error::bounds("cross-entropy target", t, classes));
            }
            let row = &src[r * classes..(r + 1) * classes];
            let lse = math::log_sum_exp(row);
            total.add(weights[r] * (lse - row[t]));
            math::softmax_into(row, &mut probs[r * classes..(r + 1) * classes]);
        }
        let needs = self.needs(logits);
        Ok(self.push(
            vec![1],
            vec![total.value()],
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut s = CompensatedSum::default();
        for &v in self.value(x) {
            s.add(v);
        }
        let needs = self.needs(x);
        self.push(vec![1], vec![s.value()], Op::Sum(x), needs)
    }

    /// Sum of same-shaped tensors.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("add_n of zero tensors"))?;
        let len = self.nodes[first.0].value.len();
        let mut acc = vec![CompensatedSum::default(); len];
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.len() != len {
                return Err(Error::dim("add_n operand size", len, v.len()));
            }
            for (a, x) in acc.iter_mut().zip(v) {
                a.add(*x);
            }
        }
        let out = acc.iter().map(CompensatedSum::value).collect();
        let shape = self.nodes[first.0].shape.clone();
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(shape, out, Op::AddN(parts.to_vec()), needs))
    }

    /// Gradients of scalar `loss` with respect to every leaf that requires
    /// them. Leaves off the path to `loss` receive zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got {} elements",
                node.value.len()
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        if node.needs_grad {
            grads[loss.0] = vec![1.0];
        }
        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = core::mem::take(&mut grads[i]);
            self.backprop_node(node, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.needs_grad && grads[i].is_empty() {
                grads[i] = vec![0.0; node.value.len()];
            }
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Vec<f64>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_empty() {
            *slot = vec![0.0; node.value.len()];
        }
        Some(slot)
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Vec<f64>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.rows(*a), self.cols(*a));
                let n = self.cols(*b);
                if let Some(ga) = self.slot(grads, *a) {
                    gemm(m, n, k, g, false, self.value(*b), true, ga, 1.0);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    gemm(k, m, n, self.value(*a), true, g, false, gb, 1.0);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
                let cols = node.cols();
                if let Some(gb) = self.slot(grads, *b) {
                    for row in g.chunks_exact(cols.max(1)) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Mul(a, b) => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((d, gi), bv) in ga.iter_mut().zip(g).zip(self.value(*b)) {
                        *d += gi * bv;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((d, gi), av) in gb.iter_mut().zip(g).zip(self.value(*a)) {
                        *d += gi * av;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (d, gi) in gx.iter_mut().zip(g) {
                        *d += f * gi;
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((d, gi), xv) in gx.iter_mut().zip(g).zip(self.value(*x)) {
                        if *xv > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((d, gi), y) in gx.iter_mut().zip(g).zip(&node.value) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((d, gi), y) in gx.iter_mut().zip(g).zip(&node.value) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Concat(parts) => {
                let rows = node.rows();
                let total = node.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.cols(p);
                    if let Some(gp) = self.slot(grads, p) {
                        for r in 0..rows {
                            add_into(
                                &mut gp[r * c..(r + 1) * c],
                                &g[r * total + offset..r * total + offset + c],
                            );
                        }
                    }
                    offset += c;
                }
            }
            Op::SliceCols(x, start) => {
                let cols = self.cols(*x);
                let width = node.cols();
                if let Some(gx) = self.slot(grads, *x) {
                    for r in 0..node.rows() {
                        add_into(
                            &mut gx[r * cols + start..r * cols + start + width],
                            &g[r * width..(r + 1) * width],
                        );
                    }
                }
            }
            Op::Gather(x, index) => {
                let cols = node.cols();
                if let Some(gx) = self.slot(grads, *x) {
                    for (r, &i) in index.iter().enumerate() {
                        add_into(&mut gx[i * cols..(i + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::SegmentSum(x, segment) => {
                let cols = node.cols();
                if let Some(gx) = self.slot(grads, *x) {
                    for (r, &s) in segment.iter().enumerate() {
                        add_into(&mut gx[r * cols..(r + 1) * cols], &g[s * cols..(s + 1) * cols]);
                    }
                }
            }
            Op::Mask(x, mask) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((d, gi), m) in gx.iter_mut().zip(g).zip(mask.iter()) {
                        *d += gi * m;
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let classes = self.cols(*logits);
                if let Some(gl) = self.slot(grads, *logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        let w = g[0] * weights[r];
                        let row = &mut gl[r * classes..(r + 1) * classes];
                        for (c, d) in row.iter_mut().enumerate() {
                            let onehot = if c == t { 1.0 } else { 0.0 };
                            *d += w * (probs[r * classes + c] - onehot);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.slot(grads, *x) {
                    for d in gx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::AddN(parts) => {
                for &p in parts {
                    if let Some(gp) = self.slot(grads, p) {
                        add_into(gp, g);
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec())
            .unwrap()
            .with_requires_grad(true)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(&param(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0]));
        let loss = tape.sum(w);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn half_square_gradient_is_identity() {
        let data = [1.5, -2.0, 0.25];
        let mut tape = Tape::new();
        let w = tape.leaf(&param(&[3], &data));
        let sq = tape.mul(w, w).unwrap();
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).unwrap(), &data);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(&param(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn off_path_leaves_get_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(&param(&[2], &[1.0, 2.0]));
        let b = tape.leaf(&param(&[2], &[3.0, 4.0]));
        let loss = tape.sum(a);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(b).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_is_repeatable() {
        let mut tape = Tape::new();
        let a = tape.leaf(&param(&[2, 2], &[0.3, -0.1, 0.8, 0.2]));
        let b = tape.leaf(&param(&[2, 2], &[1.0, 0.5, -0.5, 2.0]));
        let c = tape.matmul(a, b).unwrap();
        let t = tape.tanh(c);
        let loss = tape.sum(t);
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        assert_eq!(g1.get(a), g2.get(a));
        assert_eq!(g1.get(b), g2.get(b));
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_classes() {
        let mut tape = Tape::new();
        let logits = tape.constant(vec![1, 9], vec![0.0; 9]).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[4]).unwrap();
        assert!((tape.scalar(loss) - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_cross_entropy_is_zero() {
        let mut row = vec![0.0; 9];
        row[2] = 1000.0;
        let mut tape = Tape::new();
        let logits = tape.constant(vec![1, 9], row).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[2]).unwrap();
        assert!(tape.scalar(loss).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        let mut tape = Tape::new();
        let logits = tape.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            tape.softmax_cross_entropy(logits, &[3]),
            Err(Error::Bounds { index: 3, .. })
        ));
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![4], vec![1.0; 4]).unwrap();
        let y = tape.dropout(x, 0.5).unwrap();
        assert_eq!(x, y);
        assert!(!tape.is_stochastic());
    }

    #[test]
    fn dropout_is_seeded_and_inverted() {
        let run = |seed| {
            let mut tape = Tape::training(seed);
            let x = tape.constant(vec![1000], vec![1.0; 1000]).unwrap();
            let y = tape.dropout(x, 0.5).unwrap();
            assert!(tape.is_stochastic());
            tape.value(y).to_vec()
        };
        let a = run(3);
        assert_eq!(a, run(3));
        assert!(a.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = a.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn gather_accumulates_repeated_rows() {
        let mut tape = Tape::new();
        let table = tape.leaf(&param(&[4, 2], &[0.0; 8]));
        let rows = tape.gather_rows(table, vec![3, 3].into()).unwrap();
        let up = tape.constant(vec![2, 2], vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let prod = tape.mul(rows, up).unwrap();
        let loss = tape.sum(prod);
        let g = tape.backward(loss).unwrap();
        assert_eq!(&g.get(table).unwrap()[6..], &[11.0, 22.0]);
        assert_eq!(&g.get(table).unwrap()[..6], &[0.0; 6]);
    }

    #[test]
    fn segment_sum_of_empty_segment_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let s = tape.segment_sum(x, vec![0, 0].into(), 2).unwrap();
        assert_eq!(tape.value(s), &[3.0, 0.0]);
    }

    #[test]
    fn activation_fingerprint_tracks_relu_pattern() {
        let fp = |data: Vec<f64>| {
            let mut tape = Tape::new();
            tape.track_activations();
            let x = tape.constant(vec![3], data).unwrap();
            tape.relu(x);
            tape.activation_fingerprint().unwrap()
        };
        assert_eq!(fp(vec![1.0, -1.0, 2.0]), fp(vec![0.5, -3.0, 9.0]));
        assert_ne!(fp(vec![1.0, -1.0, 2.0]), fp(vec![1.0, 1.0, 2.0]));
    }
}
