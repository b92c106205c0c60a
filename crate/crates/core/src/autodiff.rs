//! Minimal reverse-mode differentiation over dense f64 arrays.
//!
//! Values live on a [`Tape`]; user code holds lightweight [`DiffArray`]
//! handles. Every operation appends a node with enough saved state to run
//! its backward rule, and [`Tape::backward`] walks the record in reverse,
//! accumulating gradients additively into every `requires_grad` leaf.
//!
//! The engine is deliberately small: f64 only, no views, no kernels, no
//! higher-order derivatives. All operations are single-threaded and
//! deterministic, and every forward output is checked for NaN/Inf.

use ndarray::{concatenate, Array1, Array2, ArrayD, Axis, Ix1, Ix2, IxDyn, Slice};

use crate::error::{CoreError, Result};

/// Index of a node in the tape's computation record.
pub type NodeId = usize;

/// Epsilon used inside `layer_norm`'s variance denominator.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffArray {
    id: NodeId,
    requires_grad: bool,
}

impl DiffArray {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

enum Op {
    Leaf,
    Add { a: NodeId, b: NodeId },
    /// `a (n×d) + b (d)`, bias broadcast over rows.
    AddRow { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Matmul { a: NodeId, b: NodeId },
    Transpose { x: NodeId },
    Relu { x: NodeId },
    Affine { x: NodeId, mul: f64 },
    Mean { x: NodeId },
    Sum { x: NodeId },
    Softmax { x: NodeId },
    LogSoftmax { x: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    L1Distance { a: NodeId, b: NodeId },
    CosineSim { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { x: NodeId, axis: usize, start: usize },
    Embedding { table: NodeId, ids: Vec<usize> },
    AvgPoolRows { x: NodeId, factor: usize },
}

struct Node {
    op: Op,
    requires_grad: bool,
    value: ArrayD<f64>,
}

/// Ordered record of operations plus the values they produced.
///
/// A tape is built and consumed on a single thread. Construct leaves with
/// [`Tape::var`] / [`Tape::constant`], run ops, then call
/// [`Tape::backward`] on a scalar to obtain gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bindings: Vec<(String, NodeId)>,
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

    /// The forward value recorded for `x`.
    pub fn value(&self, x: DiffArray) -> &ArrayD<f64> {
        &self.nodes[x.id].value
    }

    /// Convenience accessor for scalar results.
    pub fn scalar(&self, x: DiffArray) -> Result<f64> {
        let v = self.value(x);
        if v.len() != 1 {
            return Err(CoreError::contract(format!(
                "expected scalar, got shape {:?}",
                v.shape()
            )));
        }
        Ok(*v.iter().next().expect("len checked"))
    }

    pub fn shape(&self, x: DiffArray) -> &[usize] {
        self.nodes[x.id].value.shape()
    }

    /// Names bound via [`Tape::var_named`], in binding order.
    pub fn bindings(&self) -> &[(String, NodeId)] {
        &self.bindings
    }

    fn push(&mut self, op: Op, requires_grad: bool, value: ArrayD<f64>, name: &'static str) -> Result<DiffArray> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(CoreError::numeric(name));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            requires_grad,
            value,
        });
        Ok(DiffArray { id, requires_grad })
    }

    /// Insert a leaf. Gradients are accumulated for it iff `requires_grad`.
    pub fn var(&mut self, data: ArrayD<f64>, requires_grad: bool) -> Result<DiffArray> {
        self.push(Op::Leaf, requires_grad, data, "var")
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, data: ArrayD<f64>) -> Result<DiffArray> {
        self.var(data, false)
    }

    /// Leaf bound to a parameter name, so gradients can be collected by name
    /// after [`Tape::backward`].
    pub fn var_named(&mut self, name: &str, data: ArrayD<f64>, requires_grad: bool) -> Result<DiffArray> {
        let v = self.var(data, requires_grad)?;
        self.bindings.push((name.to_string(), v.id));
        Ok(v)
    }

    // ---- forward operations ----

    /// Elementwise sum. Also accepts `(n×d) + (d)` which broadcasts the
    /// right operand over rows (bias add).
    pub fn add(&mut self, a: DiffArray, b: DiffArray) -> Result<DiffArray> {
        let rg = a.requires_grad || b.requires_grad;
        let (va, vb) = (&self.nodes[a.id].value, &self.nodes[b.id].value);
        if va.shape() == vb.shape() {
            let out = va + vb;
            return self.push(Op::Add { a: a.id, b: b.id }, rg, out, "add");
        }
        if va.ndim() == 2 && vb.ndim() == 1 && va.shape()[1] == vb.shape()[0] {
            let m = va.view().into_dimensionality::<Ix2>().expect("2d");
            let r = vb.view().into_dimensionality::<Ix1>().expect("1d");
            let out = (&m + &r).into_dyn();
            return self.push(Op::AddRow { a: a.id, b: b.id }, rg, out, "add");
        }
        Err(CoreError::shape("add", va.shape(), vb.shape()))
    }

    /// Elementwise product of same-shape arrays.
    pub fn mul(&mut self, a: DiffArray, b: DiffArray) -> Result<DiffArray> {
        let rg = a.requires_grad || b.requires_grad;
        let (va, vb) = (&self.nodes[a.id].value, &self.nodes[b.id].value);
        if va.shape() != vb.shape() {
            return Err(CoreError::shape("mul", va.shape(), vb.shape()));
        }
        let out = va * vb;
        self.push(Op::Mul { a: a.id, b: b.id }, rg, out, "mul")
    }

    /// 2-D matrix product `a · b`.
    pub fn matmul(&mut self, a: DiffArray, b: DiffArray) -> Result<DiffArray> {
        let rg = a.requires_grad || b.requires_grad;
        let (va, vb) = (&self.nodes[a.id].value, &self.nodes[b.id].value);
        if va.ndim() != 2 || vb.ndim() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(CoreError::shape("matmul", va.shape(), vb.shape()));
        }
        let ma = va.view().into_dimensionality::<Ix2>().expect("2d");
        let mb = vb.view().into_dimensionality::<Ix2>().expect("2d");
        let out = ma.dot(&mb).into_dyn();
        self.push(Op::Matmul { a: a.id, b: b.id }, rg, out, "matmul")
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: DiffArray) -> Result<DiffArray> {
        let v = &self.nodes[x.id].value;
        if v.ndim() != 2 {
            return Err(CoreError::shape("transpose", v.shape(), &[]));
        }
        let out = v.t().to_owned();
        self.push(Op::Transpose { x: x.id }, x.requires_grad, out, "transpose")
    }

    pub fn relu(&mut self, x: DiffArray) -> Result<DiffArray> {
        let out = self.nodes[x.id].value.mapv(|v| v.max(0.0));
        self.push(Op::Relu { x: x.id }, x.requires_grad, out, "relu")
    }

    /// Elementwise `mul·x + add` with scalar constants.
    pub fn affine(&mut self, x: DiffArray, mul: f64, add: f64) -> Result<DiffArray> {
        let out = self.nodes[x.id].value.mapv(|v| mul * v + add);
        self.push(Op::Affine { x: x.id, mul }, x.requires_grad, out, "affine")
    }

    /// Scalar multiple of `x`.
    pub fn scale(&mut self, x: DiffArray, c: f64) -> Result<DiffArray> {
        self.affine(x, c, 0.0)
    }

    /// Mean over all elements; produces a 0-d scalar.
    pub fn mean(&mut self, x: DiffArray) -> Result<DiffArray> {
        let v = &self.nodes[x.id].value;
        if v.is_empty() {
            return Err(CoreError::contract("mean of empty array"));
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean { x: x.id }, x.requires_grad, scalar_arr(m), "mean")
    }

    /// Sum over all elements; produces a 0-d scalar.
    pub fn sum(&mut self, x: DiffArray) -> Result<DiffArray> {
        let s = self.nodes[x.id].value.iter().sum::<f64>();
        self.push(Op::Sum { x: x.id }, x.requires_grad, scalar_arr(s), "sum")
    }

    /// Softmax over the last axis (rows of a 2-D array, or a whole 1-D array).
    pub fn softmax(&mut self, x: DiffArray) -> Result<DiffArray> {
        let v = self.nodes[x.id].value.clone();
        let out = map_rows(&v, |row, out| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &r) in out.iter_mut().zip(row) {
                *o = (r - max).exp();
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        })?;
        self.push(Op::Softmax { x: x.id }, x.requires_grad, out, "softmax")
    }

    /// Numerically stable `log(softmax(x))` over the last axis.
    pub fn log_softmax(&mut self, x: DiffArray) -> Result<DiffArray> {
        let v = self.nodes[x.id].value.clone();
        let out = map_rows(&v, |row, out| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&r| (r - max).exp()).sum::<f64>().ln() + max;
            for (o, &r) in out.iter_mut().zip(row) {
                *o = r - lse;
            }
        })?;
        self.push(Op::LogSoftmax { x: x.id }, x.requires_grad, out, "log_softmax")
    }

    /// Layer normalization across the last axis with trainable gain/bias.
    ///
    /// `x` is 1-D or 2-D; `gain` and `bias` are 1-D of the last-axis length.
    pub fn layer_norm(&mut self, x: DiffArray, gain: DiffArray, bias: DiffArray) -> Result<DiffArray> {
        let rg = x.requires_grad || gain.requires_grad || bias.requires_grad;
        let d = *self.nodes[x.id].value.shape().last().unwrap_or(&0);
        for p in [gain.id, bias.id] {
            let ps = self.nodes[p].value.shape();
            if ps != [d] {
                return Err(CoreError::shape("layer_norm", self.nodes[x.id].value.shape(), ps));
            }
        }
        let xv = self.nodes[x.id].value.clone();
        let g = self.nodes[gain.id].value.clone();
        let b = self.nodes[bias.id].value.clone();
        let gs = g.as_slice().expect("contiguous");
        let bs = b.as_slice().expect("contiguous");
        let out = map_rows(&xv, |row, out| {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for i in 0..row.len() {
                out[i] = gs[i] * (row[i] - mu) * inv + bs[i];
            }
        })?;
        self.push(
            Op::LayerNorm { x: x.id, gain: gain.id, bias: bias.id },
            rg,
            out,
            "layer_norm",
        )
    }

    /// Mean absolute difference over all elements; produces a scalar.
    pub fn l1_distance(&mut self, a: DiffArray, b: DiffArray) -> Result<DiffArray> {
        let rg = a.requires_grad || b.requires_grad;
        let (va, vb) = (&self.nodes[a.id].value, &self.nodes[b.id].value);
        if va.shape() != vb.shape() {
            return Err(CoreError::shape("l1_distance", va.shape(), vb.shape()));
        }
        if va.is_empty() {
            return Err(CoreError::contract("l1_distance of empty arrays"));
        }
        let s = va
            .iter()
            .zip(vb.iter())
            .map(|(&x, &y)| (x - y).abs())
            .sum::<f64>()
            / va.len() as f64;
        self.push(Op::L1Distance { a: a.id, b: b.id }, rg, scalar_arr(s), "l1_distance")
    }

    /// Cosine similarity. For 1-D inputs, a scalar; for 2-D inputs of equal
    /// shape, the per-row similarity as a 1-D array.
    ///
    /// A zero-norm row yields similarity 0 with zero gradient.
    pub fn cosine_similarity(&mut self, a: DiffArray, b: DiffArray) -> Result<DiffArray> {
        let rg = a.requires_grad || b.requires_grad;
        let (va, vb) = (&self.nodes[a.id].value, &self.nodes[b.id].value);
        if va.shape() != vb.shape() || va.ndim() > 2 {
            return Err(CoreError::shape("cosine_similarity", va.shape(), vb.shape()));
        }
        let out = match va.ndim() {
            1 => scalar_arr(cos_row(
                va.as_slice().expect("contiguous"),
                vb.as_slice().expect("contiguous"),
            )),
            2 => {
                let m = va.view().into_dimensionality::<Ix2>().expect("2d");
                let n = vb.view().into_dimensionality::<Ix2>().expect("2d");
                let sims: Vec<f64> = m
                    .rows()
                    .into_iter()
                    .zip(n.rows())
                    .map(|(r, s)| cos_row(r.as_slice().expect("row"), s.as_slice().expect("row")))
                    .collect();
                Array1::from(sims).into_dyn()
            }
            _ => return Err(CoreError::shape("cosine_similarity", va.shape(), vb.shape())),
        };
        self.push(Op::CosineSim { a: a.id, b: b.id }, rg, out, "cosine_similarity")
    }

    /// Concatenate along `axis`.
    pub fn concat(&mut self, parts: &[DiffArray], axis: usize) -> Result<DiffArray> {
        if parts.is_empty() {
            return Err(CoreError::contract("concat of zero arrays"));
        }
        let rg = parts.iter().any(|p| p.requires_grad);
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.id].value.view()).collect();
        let out = concatenate(Axis(axis), &views)
            .map_err(|_| CoreError::shape("concat", self.nodes[parts[0].id].value.shape(), &[axis]))?;
        self.push(
            Op::Concat { parts: parts.iter().map(|p| p.id).collect(), axis },
            rg,
            out,
            "concat",
        )
    }

    /// Contiguous slice `start..end` along `axis`.
    pub fn slice(&mut self, x: DiffArray, axis: usize, start: usize, end: usize) -> Result<DiffArray> {
        let v = &self.nodes[x.id].value;
        if axis >= v.ndim() || end > v.shape()[axis] || start >= end {
            return Err(CoreError::contract(format!(
                "slice {start}..{end} on axis {axis} out of bounds for shape {:?}",
                v.shape()
            )));
        }
        let out = v
            .slice_axis(Axis(axis), Slice::from(start..end))
            .to_owned();
        self.push(Op::Slice { x: x.id, axis, start }, x.requires_grad, out, "slice")
    }

    /// Gather rows of `table` (v×d) by token id, producing (len×d).
    pub fn embedding_lookup(&mut self, table: DiffArray, ids: &[usize]) -> Result<DiffArray> {
        let v = &self.nodes[table.id].value;
        if v.ndim() != 2 {
            return Err(CoreError::shape("embedding_lookup", v.shape(), &[ids.len()]));
        }
        let (vocab, d) = (v.shape()[0], v.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(CoreError::contract(format!(
                "embedding_lookup: id {bad} out of range for vocab {vocab}"
            )));
        }
        let m = v.view().into_dimensionality::<Ix2>().expect("2d");
        let mut out = Array2::<f64>::zeros((ids.len(), d));
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).assign(&m.row(i));
        }
        self.push(
            Op::Embedding { table: table.id, ids: ids.to_vec() },
            table.requires_grad,
            out.into_dyn(),
            "embedding_lookup",
        )
    }

    /// Non-overlapping mean over groups of `factor` consecutive rows of a
    /// 2-D array. Trailing rows that do not fill a group are dropped.
    pub fn avg_pool_rows(&mut self, x: DiffArray, factor: usize) -> Result<DiffArray> {
        let v = &self.nodes[x.id].value;
        if v.ndim() != 2 || factor == 0 {
            return Err(CoreError::contract(format!(
                "avg_pool_rows: need 2-D input and factor >= 1, got shape {:?} factor {factor}",
                v.shape()
            )));
        }
        let (t, d) = (v.shape()[0], v.shape()[1]);
        let t_out = t / factor;
        if t_out == 0 {
            return Err(CoreError::contract(format!(
                "avg_pool_rows: {t} rows cannot fill one group of {factor}"
            )));
        }
        let m = v.view().into_dimensionality::<Ix2>().expect("2d");
        let mut out = Array2::<f64>::zeros((t_out, d));
        for g in 0..t_out {
            for r in 0..factor {
                let row = m.row(g * factor + r);
                out.row_mut(g).zip_mut_with(&row, |o, &v| *o += v);
            }
            out.row_mut(g).mapv_inplace(|v| v / factor as f64);
        }
        self.push(Op::AvgPoolRows { x: x.id, factor }, x.requires_grad, out.into_dyn(), "avg_pool_rows")
    }

    // ---- backward ----

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// across all uses of a node; leaves without `requires_grad` are left
    /// untouched.
    pub fn backward(&self, loss: DiffArray) -> Result<Gradients> {
        let lv = &self.nodes[loss.id].value;
        if lv.len() != 1 {
            return Err(CoreError::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        if !loss.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.id] = Some(ArrayD::ones(lv.raw_dim()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: NodeId, g: &ArrayD<f64>, grads: &mut [Option<ArrayD<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let acc = |grads: &mut [Option<ArrayD<f64>>], target: NodeId, delta: ArrayD<f64>| {
            if self.nodes[target].requires_grad {
                match &mut grads[target] {
                    Some(buf) => *buf += &delta,
                    slot @ None => *slot = Some(delta),
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::AddRow { a, b } => {
                acc(grads, *a, g.clone());
                let gm = g.view().into_dimensionality::<Ix2>().expect("2d");
                acc(grads, *b, gm.sum_axis(Axis(0)).into_dyn());
            }
            Op::Mul { a, b } => {
                acc(grads, *a, g * &self.nodes[*b].value);
                acc(grads, *b, g * &self.nodes[*a].value);
            }
            Op::Matmul { a, b } => {
                let gm = g.view().into_dimensionality::<Ix2>().expect("2d");
                let ma = self.nodes[*a].value.view().into_dimensionality::<Ix2>().expect("2d");
                let mb = self.nodes[*b].value.view().into_dimensionality::<Ix2>().expect("2d");
                acc(grads, *a, gm.dot(&mb.t()).into_dyn());
                acc(grads, *b, ma.t().dot(&gm).into_dyn());
            }
            Op::Transpose { x } => {
                acc(grads, *x, g.t().to_owned());
            }
            Op::Relu { x } => {
                let mask = self.nodes[*x].value.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                acc(grads, *x, g * &mask);
            }
            Op::Affine { x, mul } => {
                acc(grads, *x, g.mapv(|v| v * mul));
            }
            Op::Mean { x } => {
                let xv = &self.nodes[*x].value;
                let gs = g.iter().next().expect("scalar") / xv.len() as f64;
                acc(grads, *x, ArrayD::from_elem(xv.raw_dim(), gs));
            }
            Op::Sum { x } => {
                let xv = &self.nodes[*x].value;
                let gs = *g.iter().next().expect("scalar");
                acc(grads, *x, ArrayD::from_elem(xv.raw_dim(), gs));
            }
            Op::Softmax { x } => {
                let s = &node.value;
                let gx = backprop_rows(s, g, |srow, grow, out| {
                    let dot: f64 = srow.iter().zip(grow).map(|(&sv, &gv)| sv * gv).sum();
                    for i in 0..out.len() {
                        out[i] = srow[i] * (grow[i] - dot);
                    }
                });
                acc(grads, *x, gx);
            }
            Op::LogSoftmax { x } => {
                let gx = backprop_rows(&node.value, g, |lrow, grow, out| {
                    let gsum: f64 = grow.iter().sum();
                    for i in 0..out.len() {
                        out[i] = grow[i] - lrow[i].exp() * gsum;
                    }
                });
                acc(grads, *x, gx);
            }
            Op::LayerNorm { x, gain, bias } => {
                let xv = self.nodes[*x].value.clone();
                let gv = self.nodes[*gain].value.clone();
                let gain_s = gv.as_slice().expect("contiguous");
                let mut dgain = vec![0.0; gain_s.len()];
                let mut dbias = vec![0.0; gain_s.len()];
                let gx = backprop_rows(&xv, g, |row, grow, out| {
                    let n = row.len() as f64;
                    let mu = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / n;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for i in 0..row.len() {
                        let xhat = (row[i] - mu) * inv;
                        let dxhat = grow[i] * gain_s[i];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        dgain[i] += grow[i] * xhat;
                        dbias[i] += grow[i];
                    }
                    for i in 0..row.len() {
                        let xhat = (row[i] - mu) * inv;
                        let dxhat = grow[i] * gain_s[i];
                        out[i] = inv * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                    }
                });
                acc(grads, *x, gx);
                acc(grads, *gain, Array1::from(dgain).into_dyn());
                acc(grads, *bias, Array1::from(dbias).into_dyn());
            }
            Op::L1Distance { a, b } => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let gs = g.iter().next().expect("scalar") / va.len() as f64;
                let mut da = ArrayD::zeros(va.raw_dim());
                for ((o, &x), &y) in da.iter_mut().zip(va.iter()).zip(vb.iter()) {
                    *o = gs * (x - y).signum();
                }
                let db = da.mapv(|v| -v);
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::CosineSim { a, b } => {
                let (va, vb) = (self.nodes[*a].value.clone(), self.nodes[*b].value.clone());
                let mut da = ArrayD::zeros(va.raw_dim());
                let mut db = ArrayD::zeros(vb.raw_dim());
                let rows: Vec<(Vec<f64>, Vec<f64>)> = if va.ndim() == 1 {
                    vec![(va.iter().cloned().collect(), vb.iter().cloned().collect())]
                } else {
                    let ma = va.view().into_dimensionality::<Ix2>().expect("2d");
                    let mb = vb.view().into_dimensionality::<Ix2>().expect("2d");
                    ma.rows()
                        .into_iter()
                        .zip(mb.rows())
                        .map(|(r, s)| (r.to_vec(), s.to_vec()))
                        .collect()
                };
                let gflat: Vec<f64> = g.iter().cloned().collect();
                let d = rows[0].0.len();
                for (r, (u, v)) in rows.iter().enumerate() {
                    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if nu == 0.0 || nv == 0.0 {
                        continue; // similarity pinned to 0, no gradient
                    }
                    let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
                    let c = dot / (nu * nv);
                    let gr = gflat[r];
                    for i in 0..d {
                        let du = gr * (v[i] / (nu * nv) - c * u[i] / (nu * nu));
                        let dv = gr * (u[i] / (nu * nv) - c * v[i] / (nv * nv));
                        let idx = r * d + i;
                        da.as_slice_mut().expect("contiguous")[idx] += du;
                        db.as_slice_mut().expect("contiguous")[idx] += dv;
                    }
                }
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.shape()[*axis];
                    let slice = g
                        .slice_axis(Axis(*axis), Slice::from(offset..offset + len))
                        .to_owned();
                    acc(grads, p, slice);
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let xv = &self.nodes[*x].value;
                let mut dx = ArrayD::zeros(xv.raw_dim());
                let len = g.shape()[*axis];
                dx.slice_axis_mut(Axis(*axis), Slice::from(*start..*start + len))
                    .assign(g);
                acc(grads, *x, dx);
            }
            Op::Embedding { table, ids } => {
                let tv = &self.nodes[*table].value;
                let mut dt = Array2::<f64>::zeros((tv.shape()[0], tv.shape()[1]));
                let gm = g.view().into_dimensionality::<Ix2>().expect("2d");
                for (r, &i) in ids.iter().enumerate() {
                    let grow = gm.row(r);
                    dt.row_mut(i).zip_mut_with(&grow, |o, &v| *o += v);
                }
                acc(grads, *table, dt.into_dyn());
            }
            Op::AvgPoolRows { x, factor } => {
                let xv = &self.nodes[*x].value;
                let mut dx = Array2::<f64>::zeros((xv.shape()[0], xv.shape()[1]));
                let gm = g.view().into_dimensionality::<Ix2>().expect("2d");
                let inv = 1.0 / *factor as f64;
                for (gi, grow) in gm.rows().into_iter().enumerate() {
                    for r in 0..*factor {
                        dx.row_mut(gi * factor + r)
                            .zip_mut_with(&grow, |o, &v| *o += v * inv);
                    }
                }
                acc(grads, *x, dx.into_dyn());
            }
        }
        Ok(())
    }
}

/// Gradient buffers produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient accumulated for `x`, if any flowed to it.
    pub fn wrt(&self, x: DiffArray) -> Option<&ArrayD<f64>> {
        self.grads.get(x.id).and_then(|g| g.as_ref())
    }

    /// Gradients for every named binding on `tape` that received one.
    pub fn named(&self, tape: &Tape) -> Vec<(String, ArrayD<f64>)> {
        tape.bindings()
            .iter()
            .filter_map(|(name, id)| self.grads[*id].clone().map(|g| (name.clone(), g)))
            .collect()
    }
}

fn scalar_arr(v: f64) -> ArrayD<f64> {
    ArrayD::from_elem(IxDyn(&[]), v)
}

fn cos_row(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    if u == v {
        // identical nonzero vectors: exactly 1, not 1 ± rounding noise
        return 1.0;
    }
    u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>() / (nu * nv)
}

/// Apply `f(row_in, row_out)` over the last axis of a 1-D or 2-D array.
fn map_rows(v: &ArrayD<f64>, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<ArrayD<f64>> {
    match v.ndim() {
        1 => {
            let row = v.as_slice().expect("contiguous");
            let mut out = vec![0.0; row.len()];
            f(row, &mut out);
            Ok(Array1::from(out).into_dyn())
        }
        2 => {
            let m = v.view().into_dimensionality::<Ix2>().expect("2d");
            let mut out = Array2::<f64>::zeros(m.raw_dim());
            for (r, mut orow) in m.rows().into_iter().zip(out.rows_mut()) {
                f(r.as_slice().expect("row"), orow.as_slice_mut().expect("row"));
            }
            Ok(out.into_dyn())
        }
        _ => Err(CoreError::contract(format!(
            "row-wise op expects 1-D or 2-D input, got shape {:?}",
            v.shape()
        ))),
    }
}

/// Row-wise backward helper: `f(saved_row, grad_row, out_row)`.
fn backprop_rows(
    saved: &ArrayD<f64>,
    g: &ArrayD<f64>,
    mut f: impl FnMut(&[f64], &[f64], &mut [f64]),
) -> ArrayD<f64> {
    match saved.ndim() {
        1 => {
            let mut out = vec![0.0; saved.len()];
            f(
                saved.as_slice().expect("contiguous"),
                g.as_slice().expect("contiguous"),
                &mut out,
            );
            Array1::from(out).into_dyn()
        }
        _ => {
            let sm = saved.view().into_dimensionality::<Ix2>().expect("2d");
            let gm = g.view().into_dimensionality::<Ix2>().expect("2d");
            let mut out = Array2::<f64>::zeros(sm.raw_dim());
            for ((srow, grow), mut orow) in sm.rows().into_iter().zip(gm.rows()).zip(out.rows_mut()) {
                f(
                    srow.as_slice().expect("row"),
                    grow.as_slice().expect("row"),
                    orow.as_slice_mut().expect("row"),
                );
            }
            out.into_dyn()
        }
    }
}

/// Compare the analytic gradient of `f` at `x` against central finite
/// differences, returning the max over coordinates of
/// `|g_analytic - g_numeric| / max(1, |g_numeric|)`.
pub fn finite_diff_check<F>(mut f: F, x: &ArrayD<f64>, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, DiffArray) -> Result<DiffArray>,
{
    if eps <= 0.0 {
        return Err(CoreError::contract("finite_diff_check: eps must be positive"));
    }
    let mut tape = Tape::new();
    let xv = tape.var(x.clone(), true)?;
    let y = f(&mut tape, xv)?;
    if tape.value(y).len() != 1 {
        return Err(CoreError::contract("finite_diff_check: f must be scalar-valued"));
    }
    let grads = tape.backward(y)?;
    let analytic = grads
        .wrt(xv)
        .cloned()
        .unwrap_or_else(|| ArrayD::zeros(x.raw_dim()));

    let mut eval = |data: ArrayD<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.var(data, false)?;
        let out = f(&mut t, v)?;
        t.scalar(out)
    };

    let mut max_err: f64 = 0.0;
    let flat_analytic: Vec<f64> = analytic.iter().cloned().collect();
    for (i, &ga) in flat_analytic.iter().enumerate() {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus.as_slice_mut().expect("contiguous")[i] += eps;
        minus.as_slice_mut().expect("contiguous")[i] -= eps;
        let gn = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (ga - gn).abs() / gn.abs().max(1.0);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
