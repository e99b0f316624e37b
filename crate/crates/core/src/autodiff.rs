//! Reverse-mode automatic differentiation over `f64` matrices.
//!
//! A `Tape` records eagerly-evaluated operations; `backward` walks the tape in
//! reverse and accumulates exact gradients. Everything is single-threaded and
//! sequential, so results are bit-reproducible for a fixed op order. This is
//! what lets the importance-regularization penalty be differentiated through
//! every classifier evaluation it contains.

use serde::{Deserialize, Serialize};

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Mat::from_vec(1, 1, vec![v])
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn item(&self) -> f64 {
        assert_eq!((self.rows, self.cols), (1, 1), "item() on non-scalar");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                *out.at_mut(c, r) = self.at(r, c);
            }
        }
        out
    }
}

/// Handle to a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

struct Param {
    name: String,
    value: Mat,
    /// Rows whose gradient is forced to zero (e.g. a frozen pad embedding).
    frozen_rows: Vec<usize>,
}

/// Named, ordered collection of trainable parameters.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Mat) -> ParamId {
        self.params.push(Param { name: name.to_string(), value, frozen_rows: Vec::new() });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn freeze_rows(&mut self, id: ParamId, rows: Vec<usize>) {
        self.params[id.0].frozen_rows = rows;
    }

    pub fn frozen_rows(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].frozen_rows
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p.name.as_str(), &p.value))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    /// Constant input; gradient is not propagated past it.
    Const,
    Param(ParamId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    Scale(NodeId, f64),
    /// a: m×n plus b: 1×n broadcast over rows.
    AddRow(NodeId, NodeId),
    /// a: m×n times b: 1×n broadcast over rows.
    MulRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    SoftmaxRows(NodeId),
    /// Per-row (x − mean) / sqrt(var + eps).
    NormalizeRows(NodeId, f64),
    Gelu(NodeId),
    Tanh(NodeId),
    /// Gather rows of a table parameter/node by index.
    EmbedRows(NodeId, Vec<usize>),
    RowSelect(NodeId, usize),
    ColSlice(NodeId, usize, usize),
    ColConcat(Vec<NodeId>),
    MeanRows(NodeId),
    SumAll(NodeId),
    /// Stable log-sum-exp of a 1×n row.
    LogSumExpRow(NodeId),
    Pick(NodeId, usize, usize),
    Square(NodeId),
}

struct Node {
    op: Op,
    value: Mat,
}

/// Recorded computation graph. Construction order is a topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Mat) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.value(id).clone())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols), "add shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect();
        let v = Mat::from_vec(va.rows, va.cols, data);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols), "sub shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x - y).collect();
        let v = Mat::from_vec(va.rows, va.cols, data);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!((va.rows, va.cols), (vb.rows, vb.cols), "mul shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let v = Mat::from_vec(va.rows, va.cols, data);
        self.push(Op::MulElem(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let va = self.value(a);
        let v = Mat::from_vec(va.rows, va.cols, va.data.iter().map(|x| x * c).collect());
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(vb.rows, 1, "add_row: b must be 1×n");
        assert_eq!(va.cols, vb.cols, "add_row shape mismatch");
        let mut v = va.clone();
        for r in 0..v.rows {
            for c in 0..v.cols {
                *v.at_mut(r, c) += vb.at(0, c);
            }
        }
        self.push(Op::AddRow(a, b), v)
    }

    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(vb.rows, 1, "mul_row: b must be 1×n");
        assert_eq!(va.cols, vb.cols, "mul_row shape mismatch");
        let mut v = va.clone();
        for r in 0..v.rows {
            for c in 0..v.cols {
                *v.at_mut(r, c) *= vb.at(0, c);
            }
        }
        self.push(Op::MulRow(a, b), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let mut v = va.clone();
        for r in 0..v.rows {
            let row = &mut v.data[r * v.cols..(r + 1) * v.cols];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn normalize_rows(&mut self, a: NodeId, eps: f64) -> NodeId {
        let va = self.value(a);
        let n = va.cols as f64;
        let mut v = va.clone();
        for r in 0..v.rows {
            let row = &mut v.data[r * v.cols..(r + 1) * v.cols];
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * inv;
            }
        }
        self.push(Op::NormalizeRows(a, eps), v)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let v = Mat::from_vec(va.rows, va.cols, va.data.iter().map(|&x| gelu(x)).collect());
        self.push(Op::Gelu(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let v = Mat::from_vec(va.rows, va.cols, va.data.iter().map(|x| x.tanh()).collect());
        self.push(Op::Tanh(a), v)
    }

    pub fn embed_rows(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut v = Mat::zeros(ids.len(), t.cols);
        for (r, &i) in ids.iter().enumerate() {
            assert!(i < t.rows, "embed index {i} out of range {}", t.rows);
            v.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(t.row(i));
        }
        self.push(Op::EmbedRows(table, ids.to_vec()), v)
    }

    pub fn row_select(&mut self, a: NodeId, r: usize) -> NodeId {
        let va = self.value(a);
        let v = Mat::from_vec(1, va.cols, va.row(r).to_vec());
        self.push(Op::RowSelect(a, r), v)
    }

    pub fn col_slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let va = self.value(a);
        assert!(start + len <= va.cols, "col_slice out of range");
        let mut v = Mat::zeros(va.rows, len);
        for r in 0..va.rows {
            v.data[r * len..(r + 1) * len].copy_from_slice(&va.row(r)[start..start + len]);
        }
        self.push(Op::ColSlice(a, start, len), v)
    }

    pub fn col_concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let total: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, total);
        let mut off = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.rows, rows, "col_concat row mismatch");
            for r in 0..rows {
                v.data[r * total + off..r * total + off + vp.cols].copy_from_slice(vp.row(r));
            }
            off += vp.cols;
        }
        self.push(Op::ColConcat(parts.to_vec()), v)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let m = va.rows as f64;
        let mut v = Mat::zeros(1, va.cols);
        for r in 0..va.rows {
            for c in 0..va.cols {
                v.data[c] += va.at(r, c);
            }
        }
        for x in v.data.iter_mut() {
            *x /= m;
        }
        self.push(Op::MeanRows(a), v)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data.iter().sum();
        self.push(Op::SumAll(a), Mat::scalar(s))
    }

    pub fn log_sum_exp_row(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        assert_eq!(va.rows, 1, "log_sum_exp_row expects 1×n");
        let m = va.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = va.data.iter().map(|x| (x - m).exp()).sum();
        self.push(Op::LogSumExpRow(a), Mat::scalar(m + s.ln()))
    }

    pub fn pick(&mut self, a: NodeId, r: usize, c: usize) -> NodeId {
        let v = self.value(a).at(r, c);
        self.push(Op::Pick(a, r, c), Mat::scalar(v))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let v = Mat::from_vec(va.rows, va.cols, va.data.iter().map(|x| x * x).collect());
        self.push(Op::Square(a), v)
    }

    /// Accumulated gradients of `root` (seeded with ones) for every node.
    pub fn backward(&self, root: NodeId) -> Grads {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        let rv = self.value(root);
        grads[root.0] = Some(Mat::from_vec(rv.rows, rv.cols, vec![1.0; rv.data.len()]));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Grads { by_node: grads }
    }

    fn propagate(&self, id: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let add_to = |grads: &mut [Option<Mat>], target: NodeId, shape: (usize, usize), f: &mut dyn FnMut(&mut Mat)| {
            let slot = grads[target.0].get_or_insert_with(|| Mat::zeros(shape.0, shape.1));
            f(slot);
        };
        let shape_of = |n: NodeId| {
            let v = self.value(n);
            (v.rows, v.cols)
        };

        match &self.nodes[id].op {
            Op::Const | Op::Param(_) => {}
            Op::Add(a, b) => {
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&g.data) {
                        *x += y;
                    }
                });
                add_to(grads, *b, shape_of(*b), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&g.data) {
                        *x += y;
                    }
                });
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&g.data) {
                        *x += y;
                    }
                });
                add_to(grads, *b, shape_of(*b), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&g.data) {
                        *x -= y;
                    }
                });
            }
            Op::MulElem(a, b) => {
                let (va, vb) = (self.value(*a).clone(), self.value(*b).clone());
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for i in 0..m.data.len() {
                        m.data[i] += g.data[i] * vb.data[i];
                    }
                });
                add_to(grads, *b, shape_of(*b), &mut |m| {
                    for i in 0..m.data.len() {
                        m.data[i] += g.data[i] * va.data[i];
                    }
                });
            }
            Op::Scale(a, c) => {
                let c = *c;
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&g.data) {
                        *x += c * y;
                    }
                });
            }
            Op::AddRow(a, b) => {
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&g.data) {
                        *x += y;
                    }
                });
                let cols = g.cols;
                add_to(grads, *b, shape_of(*b), &mut |m| {
                    for r in 0..g.rows {
                        for c in 0..cols {
                            m.data[c] += g.at(r, c);
                        }
                    }
                });
            }
            Op::MulRow(a, b) => {
                let (va, vb) = (self.value(*a).clone(), self.value(*b).clone());
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            *m.at_mut(r, c) += g.at(r, c) * vb.at(0, c);
                        }
                    }
                });
                add_to(grads, *b, shape_of(*b), &mut |m| {
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            m.data[c] += g.at(r, c) * va.at(r, c);
                        }
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a).clone(), self.value(*b).clone());
                let da = g.matmul(&vb.transpose());
                let db = va.transpose().matmul(g);
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&da.data) {
                        *x += y;
                    }
                });
                add_to(grads, *b, shape_of(*b), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&db.data) {
                        *x += y;
                    }
                });
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&gt.data) {
                        *x += y;
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let s = &self.nodes[id].value;
                let mut da = Mat::zeros(s.rows, s.cols);
                for r in 0..s.rows {
                    let dot: f64 = (0..s.cols).map(|c| g.at(r, c) * s.at(r, c)).sum();
                    for c in 0..s.cols {
                        *da.at_mut(r, c) = s.at(r, c) * (g.at(r, c) - dot);
                    }
                }
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&da.data) {
                        *x += y;
                    }
                });
            }
            Op::NormalizeRows(a, eps) => {
                let xhat = &self.nodes[id].value;
                let va = self.value(*a);
                let n = va.cols as f64;
                let mut da = Mat::zeros(va.rows, va.cols);
                for r in 0..va.rows {
                    let row = va.row(r);
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let gmean: f64 = (0..va.cols).map(|c| g.at(r, c)).sum::<f64>() / n;
                    let gxhat: f64 =
                        (0..va.cols).map(|c| g.at(r, c) * xhat.at(r, c)).sum::<f64>() / n;
                    for c in 0..va.cols {
                        *da.at_mut(r, c) = inv * (g.at(r, c) - gmean - xhat.at(r, c) * gxhat);
                    }
                }
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, y) in m.data.iter_mut().zip(&da.data) {
                        *x += y;
                    }
                });
            }
            Op::Gelu(a) => {
                let va = self.value(*a).clone();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for i in 0..m.data.len() {
                        m.data[i] += g.data[i] * gelu_prime(va.data[i]);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = self.nodes[id].value.clone();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for i in 0..m.data.len() {
                        m.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
                    }
                });
            }
            Op::EmbedRows(table, ids) => {
                let cols = g.cols;
                add_to(grads, *table, shape_of(*table), &mut |m| {
                    for (r, &i) in ids.iter().enumerate() {
                        for c in 0..cols {
                            *m.at_mut(i, c) += g.at(r, c);
                        }
                    }
                });
            }
            Op::RowSelect(a, r) => {
                let r = *r;
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for c in 0..g.cols {
                        *m.at_mut(r, c) += g.at(0, c);
                    }
                });
            }
            Op::ColSlice(a, start, len) => {
                let (start, len) = (*start, *len);
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for r in 0..g.rows {
                        for c in 0..len {
                            *m.at_mut(r, start + c) += g.at(r, c);
                        }
                    }
                });
            }
            Op::ColConcat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let cols = self.value(p).cols;
                    let (rows, pc) = shape_of(p);
                    add_to(grads, p, (rows, pc), &mut |m| {
                        for r in 0..g.rows {
                            for c in 0..cols {
                                *m.at_mut(r, c) += g.at(r, off + c);
                            }
                        }
                    });
                    off += cols;
                }
            }
            Op::MeanRows(a) => {
                let m_rows = self.value(*a).rows as f64;
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for r in 0..m.rows {
                        for c in 0..m.cols {
                            *m.at_mut(r, c) += g.at(0, c) / m_rows;
                        }
                    }
                });
            }
            Op::SumAll(a) => {
                let gv = g.item();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for x in m.data.iter_mut() {
                        *x += gv;
                    }
                });
            }
            Op::LogSumExpRow(a) => {
                let va = self.value(*a);
                let m0 = va.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = va.data.iter().map(|x| (x - m0).exp()).sum();
                let gv = g.item();
                let soft: Vec<f64> = va.data.iter().map(|x| (x - m0).exp() / s).collect();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for (x, p) in m.data.iter_mut().zip(&soft) {
                        *x += gv * p;
                    }
                });
            }
            Op::Pick(a, r, c) => {
                let (r, c) = (*r, *c);
                let gv = g.item();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    *m.at_mut(r, c) += gv;
                });
            }
            Op::Square(a) => {
                let va = self.value(*a).clone();
                add_to(grads, *a, shape_of(*a), &mut |m| {
                    for i in 0..m.data.len() {
                        m.data[i] += 2.0 * va.data[i] * g.data[i];
                    }
                });
            }
        }
    }

    /// Sum node gradients into per-parameter gradients. Frozen rows come back
    /// zeroed. Parameters never touched by the graph get zero matrices.
    pub fn param_grads(&self, grads: &Grads, store: &ParamStore) -> Vec<Mat> {
        let mut out: Vec<Mat> = store
            .iter()
            .map(|(_, _, v)| Mat::zeros(v.rows, v.cols))
            .collect();
        for (node, slot) in self.nodes.iter().zip(&grads.by_node) {
            if let (Op::Param(pid), Some(g)) = (&node.op, slot) {
                let acc = &mut out[pid.0];
                for (x, y) in acc.data.iter_mut().zip(&g.data) {
                    *x += y;
                }
            }
        }
        for id in store.ids() {
            let frozen = store.frozen_rows(id);
            if frozen.is_empty() {
                continue;
            }
            let m = &mut out[id.0];
            for &r in frozen {
                for c in 0..m.cols {
                    *m.at_mut(r, c) = 0.0;
                }
            }
        }
        out
    }
}

/// Gradients keyed by tape node.
pub struct Grads {
    by_node: Vec<Option<Mat>>,
}

impl Grads {
    pub fn of(&self, id: NodeId) -> Option<&Mat> {
        self.by_node[id.0].as_ref()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
