//! Reverse-mode differentiation over a per-forward-pass tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and
//! [`Graph::backward`] is a single reverse sweep. Parameters enter the graph
//! by reference to a [`ParamStore`]; everything else enters as a constant,
//! which is how recurrent state is detached between segments.

use std::borrow::Cow;
use std::collections::HashMap;

use super::kernels::{matmul, matmul_a_bt, matmul_at_b_acc};
use super::{lit, Gradients, NumericsError, ParamId, ParamStore, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

/// Deliberately wrong backward rules, used as negative controls for gradient checks.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    SigmoidBackward,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Act(NodeId, Activation),
    Scale(NodeId, T),
    Sum(NodeId),
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    Embedding { table: NodeId, indices: Vec<usize> },
    WeightNorm { v: NodeId, g: NodeId, norms: Vec<T> },
    SoftmaxXent { logits: NodeId, targets: Vec<usize>, probs: Vec<T> },
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    fault: Option<Fault>,
}

impl<T: Real> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T: Real>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> NumericsError {
    NumericsError::Shape(format!("{op}: incompatible shapes {:?} and {:?}", a.shape(), b.shape()))
}

fn sigmoid<T: Real>(x: T) -> T {
    // split by sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Option<Fault>) {
        self.fault = fault;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Per-row class probabilities computed by a softmax cross-entropy node.
    pub fn probabilities(&self, loss: NodeId) -> Option<&[T]> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxXent { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn push(&mut self, op: &'static str, value: Tensor<T>, kind: Op<T>, needs_grad: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(NumericsError::NonFinite(op));
        }
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: kind,
            needs_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    fn matrix(&self, op: &str, id: NodeId) -> Result<(usize, usize)> {
        let v = self.value(id);
        if v.shape().len() != 2 {
            return Err(NumericsError::Shape(format!("{op}: expected a matrix, got {:?}", v.shape())));
        }
        Ok((v.shape()[0], v.shape()[1]))
    }

    /// A trainable leaf borrowing its value from `store`.
    pub fn param(&mut self, store: &'a ParamStore<T>, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Borrowed(store.value(id)),
            op: Op::Param(id),
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.matrix("matmul", a)?;
        let (k2, n) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(shape_err("matmul", self.value(a), self.value(b)));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(&[a, b]);
        self.push("matmul", Tensor::new(&[m, n], out)?, Op::MatMul(a, b), ng)
    }

    /// Adds a length-`n` vector to every row of an `[m×n]` matrix.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (_, n) = self.matrix("add_bias", x)?;
        if self.value(b).shape() != [n] {
            return Err(shape_err("add_bias", self.value(x), self.value(b)));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (o, &bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let ng = self.ng(&[x, b]);
        self.push("add_bias", out, Op::AddBias(x, b), ng)
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    fn zip(&mut self, op: &'static str, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T, kind: Op<T>) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(op, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape(), data)?;
        let ng = self.ng(&[a, b]);
        self.push(op, out, kind, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn pointwise(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        let out = match kind {
            Activation::Sigmoid => self.value(x).map(sigmoid),
            Activation::Tanh => self.value(x).map(|v| v.tanh()),
            Activation::Relu => self.value(x).map(|v| v.max(T::zero())),
        };
        let ng = self.ng(&[x]);
        self.push("pointwise", out, Op::Act(x, kind), ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.pointwise(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.pointwise(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.pointwise(x, Activation::Relu)
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> Result<NodeId> {
        let out = self.value(x).map(|v| v * c);
        let ng = self.ng(&[x]);
        self.push("scale", out, Op::Scale(x, c), ng)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().copied().sum();
        let ng = self.ng(&[x]);
        self.push("sum", Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.matrix("slice_cols", x)?;
        if len == 0 || start + len > n {
            return Err(NumericsError::Shape(format!(
                "slice_cols: columns {start}..{} out of range for {:?}",
                start + len,
                self.shape(x)
            )));
        }
        let v = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for row in v.chunks_exact(n) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let ng = self.ng(&[x]);
        self.push("slice_cols", Tensor::new(&[m, len], out)?, Op::SliceCols { x, start }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(NumericsError::Shape("concat_cols: nothing to concatenate".into()));
        }
        let mut widths = Vec::with_capacity(parts.len());
        let (m, _) = self.matrix("concat_cols", parts[0])?;
        for &p in parts {
            let (r, c) = self.matrix("concat_cols", p)?;
            if r != m {
                return Err(shape_err("concat_cols", self.value(parts[0]), self.value(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let ng = self.ng(parts);
        self.push("concat_cols", Tensor::new(&[m, total], out)?, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(NumericsError::Shape("concat_rows: nothing to concatenate".into()));
        }
        let (_, n) = self.matrix("concat_rows", parts[0])?;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.matrix("concat_rows", p)?;
            if c != n {
                return Err(shape_err("concat_rows", self.value(parts[0]), self.value(p)));
            }
            rows += r;
        }
        let mut out = Vec::with_capacity(rows * n);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let ng = self.ng(parts);
        self.push("concat_rows", Tensor::new(&[rows, n], out)?, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).clone().reshaped(shape)?;
        let ng = self.ng(&[x]);
        self.push("reshape", out, Op::Reshape(x), ng)
    }

    /// Gathers rows of `table` (`[vocab×dim]`) into an `[indices.len()×dim]` matrix.
    pub fn embedding(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (vocab, dim) = self.matrix("embedding", table)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(NumericsError::Index { index: bad, bound: vocab });
        }
        if indices.is_empty() {
            return Err(NumericsError::Shape("embedding: no indices".into()));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            out.extend_from_slice(&t[i * dim..(i + 1) * dim]);
        }
        let ng = self.ng(&[table]);
        self.push(
            "embedding",
            Tensor::new(&[indices.len(), dim], out)?,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            ng,
        )
    }

    /// `w[:, j] = g[j] · v[:, j] / ‖v[:, j]‖₂`
    pub fn weight_norm_apply(&mut self, v: NodeId, g: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.matrix("weight_norm", v)?;
        if self.value(g).shape() != [cols] {
            return Err(shape_err("weight_norm", self.value(v), self.value(g)));
        }
        let vd = self.value(v).data();
        let mut norms = vec![T::zero(); cols];
        for row in vd.chunks_exact(cols) {
            for (n, &x) in norms.iter_mut().zip(row) {
                *n += x * x;
            }
        }
        for (j, n) in norms.iter_mut().enumerate() {
            *n = n.sqrt();
            if !(*n > T::zero()) {
                return Err(NumericsError::DegenerateDirection(j));
            }
        }
        let gd = self.value(g).data();
        let mut out = vd.to_vec();
        for row in out.chunks_exact_mut(cols) {
            for ((o, &gj), &nj) in row.iter_mut().zip(gd).zip(&norms) {
                *o = gj * *o / nj;
            }
        }
        let ng = self.ng(&[v, g]);
        self.push("weight_norm", Tensor::new(&[rows, cols], out)?, Op::WeightNorm { v, g, norms }, ng)
    }

    /// Mean negative log-likelihood (nats) of `targets` under the row-wise
    /// softmax of `logits`. The probabilities stay on the node, see
    /// [`Graph::probabilities`].
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (b, q) = self.matrix("softmax_cross_entropy", logits)?;
        if q < 2 {
            return Err(NumericsError::Shape(format!("softmax over {q} classes")));
        }
        if targets.len() != b {
            return Err(NumericsError::Shape(format!(
                "softmax_cross_entropy: {b} rows but {} targets",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= q) {
            return Err(NumericsError::Index { index: bad, bound: q });
        }
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); b * q];
        let mut total = T::zero();
        for (i, (row, p)) in lv.chunks_exact(q).zip(probs.chunks_exact_mut(q)).enumerate() {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (pj, &l) in p.iter_mut().zip(row) {
                *pj = (l - mx).exp();
                z += *pj;
            }
            for pj in p.iter_mut() {
                *pj = *pj / z;
            }
            // -log softmax = log z - (l_t - max)
            total += z.ln() - (row[targets[i]] - mx);
        }
        let loss = total / lit::<T>(b as f64);
        let ng = self.ng(&[logits]);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        )
    }

    /// Propagates d`loss`/d· back to every parameter leaf reachable from `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(NumericsError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let nodes = &self.nodes;
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), T::one()));
        let mut out = HashMap::new();

        fn slot<'g, T: Real>(grads: &'g mut [Option<Tensor<T>>], nodes: &[Node<'_, T>], id: NodeId) -> Option<&'g mut [T]> {
            if !nodes[id.0].needs_grad {
                return None;
            }
            Some(
                grads[id.0]
                    .get_or_insert_with(|| Tensor::zeros(nodes[id.0].value.shape()))
                    .data_mut(),
            )
        }

        for idx in (0..=loss.0).rev() {
            let Some(up) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let up = up.data();
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    let t = Tensor::new(node.value.shape(), up.to_vec())?;
                    match out.entry(*pid) {
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(t);
                        }
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            let acc: &mut Tensor<T> = e.get_mut();
                            for (a, &x) in acc.data_mut().iter_mut().zip(t.data()) {
                                *a += x;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    if nodes[a.0].needs_grad {
                        let da = matmul_a_bt(up, vb.data(), m, n, k);
                        let s = slot(&mut grads, nodes, *a).unwrap();
                        for (g, x) in s.iter_mut().zip(da) {
                            *g += x;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        matmul_at_b_acc(va.data(), up, m, k, n, s);
                    }
                }
                Op::AddBias(x, b) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for (g, &u) in s.iter_mut().zip(up) {
                            *g += u;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        let n = s.len();
                        for row in up.chunks_exact(n) {
                            for (g, &u) in s.iter_mut().zip(row) {
                                *g += u;
                            }
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for (g, &u) in s.iter_mut().zip(up) {
                            *g += u;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for (g, &u) in s.iter_mut().zip(up) {
                            *g += sign * u;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    if let Some(s) = slot(&mut grads, nodes, *a) {
                        for ((g, &u), &y) in s.iter_mut().zip(up).zip(vb) {
                            *g += u * y;
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *b) {
                        for ((g, &u), &x) in s.iter_mut().zip(up).zip(va) {
                            *g += u * x;
                        }
                    }
                }
                Op::Act(x, kind) => {
                    let y = node.value.data();
                    let fault = if self.fault == Some(Fault::SigmoidBackward) && *kind == Activation::Sigmoid {
                        lit(1.5)
                    } else {
                        T::one()
                    };
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for ((g, &u), &yv) in s.iter_mut().zip(up).zip(y) {
                            let d = match kind {
                                Activation::Sigmoid => yv * (T::one() - yv),
                                Activation::Tanh => T::one() - yv * yv,
                                Activation::Relu => {
                                    if yv > T::zero() {
                                        T::one()
                                    } else {
                                        T::zero()
                                    }
                                }
                            };
                            *g += u * d * fault;
                        }
                    }
                }
                Op::Scale(x, c) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for (g, &u) in s.iter_mut().zip(up) {
                            *g += *c * u;
                        }
                    }
                }
                Op::Sum(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for g in s.iter_mut() {
                            *g += up[0];
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let n = nodes[x.0].value.shape()[1];
                    let len = node.value.shape()[1];
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for (row, urow) in s.chunks_exact_mut(n).zip(up.chunks_exact(len)) {
                            for (g, &u) in row[*start..*start + len].iter_mut().zip(urow) {
                                *g += u;
                            }
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let w = nodes[p.0].value.shape()[1];
                        if let Some(s) = slot(&mut grads, nodes, *p) {
                            for (row, urow) in s.chunks_exact_mut(w).zip(up.chunks_exact(total)) {
                                for (g, &u) in row.iter_mut().zip(&urow[offset..offset + w]) {
                                    *g += u;
                                }
                            }
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = nodes[p.0].value.len();
                        if let Some(s) = slot(&mut grads, nodes, *p) {
                            for (g, &u) in s.iter_mut().zip(&up[offset..offset + n]) {
                                *g += u;
                            }
                        }
                        offset += n;
                    }
                }
                Op::Reshape(x) => {
                    if let Some(s) = slot(&mut grads, nodes, *x) {
                        for (g, &u) in s.iter_mut().zip(up) {
                            *g += u;
                        }
                    }
                }
                Op::Embedding { table, indices } => {
                    let dim = nodes[table.0].value.shape()[1];
                    if let Some(s) = slot(&mut grads, nodes, *table) {
                        for (&i, urow) in indices.iter().zip(up.chunks_exact(dim)) {
                            for (g, &u) in s[i * dim..(i + 1) * dim].iter_mut().zip(urow) {
                                *g += u;
                            }
                        }
                    }
                }
                Op::WeightNorm { v, g, norms } => {
                    let vd = nodes[v.0].value.data();
                    let gd = nodes[g.0].value.data();
                    let cols = norms.len();
                    // dg_j = Σ_i up_ij v_ij / n_j
                    let mut dg = vec![T::zero(); cols];
                    for (vrow, urow) in vd.chunks_exact(cols).zip(up.chunks_exact(cols)) {
                        for ((d, &x), &u) in dg.iter_mut().zip(vrow).zip(urow) {
                            *d += u * x;
                        }
                    }
                    for (d, &n) in dg.iter_mut().zip(norms) {
                        *d = *d / n;
                    }
                    if let Some(s) = slot(&mut grads, nodes, *v) {
                        for ((srow, vrow), urow) in s
                            .chunks_exact_mut(cols)
                            .zip(vd.chunks_exact(cols))
                            .zip(up.chunks_exact(cols))
                        {
                            for j in 0..cols {
                                srow[j] += gd[j] / norms[j] * (urow[j] - vrow[j] * dg[j] / norms[j]);
                            }
                        }
                    }
                    if let Some(s) = slot(&mut grads, nodes, *g) {
                        for (a, d) in s.iter_mut().zip(dg) {
                            *a += d;
                        }
                    }
                }
                Op::SoftmaxXent {
                    logits,
                    targets,
                    probs,
                } => {
                    let q = nodes[logits.0].value.shape()[1];
                    let scale = up[0] / lit::<T>(targets.len() as f64);
                    if let Some(s) = slot(&mut grads, nodes, *logits) {
                        for ((row, p), &t) in s.chunks_exact_mut(q).zip(probs.chunks_exact(q)).zip(targets) {
                            for (g, &pj) in row.iter_mut().zip(p) {
                                *g += scale * pj;
                            }
                            row[t] -= scale;
                        }
                    }
                }
            }
        }
        Ok(Gradients { by_param: out })
    }
}
