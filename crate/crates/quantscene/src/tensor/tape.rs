//! Reverse-mode differentiation over a tape of recorded operations.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append nodes and return [`Var`] handles; [`Tape::backward`] walks the
//! recording in reverse and accumulates gradients into each node. Nodes that
//! cannot influence a differentiable leaf are skipped entirely, so feeding
//! large constant inputs (scenario slots, images) costs no gradient work.
//!
//! Shapes are explicit: binary elementwise operations accept equal shapes or
//! a scalar on either side, nothing more. Structured broadcasts have their
//! own named operations ([`Tape::add_row`], [`Tape::scale_rows`]).

use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

const COSINE_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// Matrix product; also covers matrix-vector and vector-matrix forms.
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    /// Matrix plus a row vector broadcast over every row.
    AddRow { m: usize, row: usize },
    /// Row i of the matrix scaled by element i of a vector.
    ScaleRows { m: usize, s: usize },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Scale { a: usize, c: f64 },
    Reshape { a: usize },
    Concat { parts: Vec<usize> },
    SumAll { a: usize },
    SumAxis { a: usize, axis: usize },
    AddN { parts: Vec<usize> },
    Softmax { a: usize },
    Cosine { a: usize, b: usize },
    CrossEntropy { logits: usize, label: usize },
    Row { m: usize, index: usize },
    Pick { v: usize, index: usize },
    Conv2d { input: usize, filters: usize, bias: usize, stride: usize },
    GlobalAvgPool { a: usize },
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward computation, replayable in reverse for gradients.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(64) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated for `v` by the last [`Tape::backward`] call.
    /// Zero tensor if nothing flowed into it.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Tensor::new(node.value.shape().to_vec(), g.clone())
                .unwrap_or_else(|_| Tensor::zeros(node.value.shape().to_vec())),
            None => Tensor::zeros(node.value.shape().to_vec()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes[idx].needs_grad
    }

    /// Constant input: gradients are never computed for it or through it
    /// unless some other differentiable value joins the computation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    // ── forward operations ──────────────────────────────────────────────

    /// Matrix product. Accepts `[m×k]·[k×n] → [m×n]`, `[m×k]·[k] → [m]`
    /// and `[k]·[k×n] → [n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, n, out_shape) = match (va.shape(), vb.shape()) {
            ([m, k1], [k2, n]) if k1 == k2 => (*m, *k1, *n, vec![*m, *n]),
            ([m, k1], [k2]) if k1 == k2 => (*m, *k1, 1usize, vec![*m]),
            ([k1], [k2, n]) if k1 == k2 => (1usize, *k1, *n, vec![*n]),
            (sa, sb) => {
                return Err(TensorError::Dimension(format!(
                    "matmul shapes {sa:?} and {sb:?} do not align"
                )))
            }
        };
        let mut out = vec![0.0; m * n];
        let (da, db) = (va.data(), vb.data());
        for i in 0..m {
            for p in 0..k {
                let aip = da[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &db[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::MatMul { a: a.0, b: b.0 }, needs))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let out = if va.shape() == vb.shape() {
            Tensor::new(
                va.shape().to_vec(),
                va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect(),
            )?
        } else if vb.is_scalar() {
            let s = vb.item();
            Tensor::new(va.shape().to_vec(), va.data().iter().map(|x| f(*x, s)).collect())?
        } else if va.is_scalar() {
            let s = va.item();
            Tensor::new(vb.shape().to_vec(), vb.data().iter().map(|y| f(s, *y)).collect())?
        } else {
            return Err(TensorError::Dimension(format!(
                "{name}: shapes {:?} and {:?} are neither equal nor scalar-broadcastable",
                va.shape(),
                vb.shape()
            )));
        };
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(out, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add { a: a.0, b: b.0 })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub { a: a.0, b: b.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul { a: a.0, b: b.0 })
    }

    /// `[r×c] + [c]`, the row vector added to every row.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, TensorError> {
        let (vm, vr) = (&self.nodes[m.0].value, &self.nodes[row.0].value);
        let (r, c) = match (vm.shape(), vr.shape()) {
            ([r, c1], [c2]) if c1 == c2 => (*r, *c1),
            (sm, sr) => {
                return Err(TensorError::Dimension(format!(
                    "add_row shapes {sm:?} and {sr:?} do not align"
                )))
            }
        };
        let mut out = vm.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] += vr.data()[j];
            }
        }
        let needs = self.needs(m.0) || self.needs(row.0);
        Ok(self.push(
            Tensor::new(vec![r, c], out)?,
            Op::AddRow { m: m.0, row: row.0 },
            needs,
        ))
    }

    /// Row `i` of `[r×c]` scaled by element `i` of `[r]`.
    pub fn scale_rows(&mut self, m: Var, s: Var) -> Result<Var, TensorError> {
        let (vm, vs) = (&self.nodes[m.0].value, &self.nodes[s.0].value);
        let (r, c) = match (vm.shape(), vs.shape()) {
            ([r1, c], [r2]) if r1 == r2 => (*r1, *c),
            (sm, ss) => {
                return Err(TensorError::Dimension(format!(
                    "scale_rows shapes {sm:?} and {ss:?} do not align"
                )))
            }
        };
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let w = vs.data()[i];
            for j in 0..c {
                out[i * c + j] = w * vm.data()[i * c + j];
            }
        }
        let needs = self.needs(m.0) || self.needs(s.0);
        Ok(self.push(
            Tensor::new(vec![r, c], out)?,
            Op::ScaleRows { m: m.0, s: s.0 },
            needs,
        ))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let out = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|x| x.tanh()).collect(),
        };
        let needs = self.needs(a.0);
        self.push(out, Op::Tanh { a: a.0 }, needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let out = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect(),
        };
        let needs = self.needs(a.0);
        self.push(out, Op::Sigmoid { a: a.0 }, needs)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = &self.nodes[a.0].value;
        let out = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|x| c * x).collect(),
        };
        let needs = self.needs(a.0);
        self.push(out, Op::Scale { a: a.0, c }, needs)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let v = &self.nodes[a.0].value;
        let n: usize = shape.iter().product();
        if n != v.numel() {
            return Err(TensorError::Dimension(format!(
                "reshape of {:?} to {shape:?} changes element count",
                v.shape()
            )));
        }
        let out = Tensor { shape, data: v.data().to_vec() };
        let needs = self.needs(a.0);
        Ok(self.push(out, Op::Reshape { a: a.0 }, needs))
    }

    /// Concatenation of vectors along axis 0.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        if axis != 0 {
            return Err(TensorError::Dimension(format!(
                "concat supports axis 0 only, got {axis}"
            )));
        }
        if parts.is_empty() {
            return Err(TensorError::Dimension("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.rank() != 1 {
                return Err(TensorError::Dimension(format!(
                    "concat expects vectors, got shape {:?}",
                    v.shape()
                )));
            }
            data.extend_from_slice(v.data());
        }
        let needs = parts.iter().any(|p| self.needs(p.0));
        let idxs = parts.iter().map(|p| p.0).collect();
        Ok(self.push(Tensor::vector(data), Op::Concat { parts: idxs }, needs))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data().iter().sum();
        let needs = self.needs(a.0);
        self.push(Tensor::scalar(s), Op::SumAll { a: a.0 }, needs)
    }

    /// Sum a matrix over one axis: axis 0 collapses rows (result `[cols]`),
    /// axis 1 collapses columns (result `[rows]`).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let v = &self.nodes[a.0].value;
        let (r, c) = match v.shape() {
            [r, c] => (*r, *c),
            s => {
                return Err(TensorError::Dimension(format!(
                    "sum_axis expects a matrix, got shape {s:?}"
                )))
            }
        };
        let out = match axis {
            0 => {
                let mut o = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        o[j] += v.data()[i * c + j];
                    }
                }
                Tensor::vector(o)
            }
            1 => {
                let mut o = vec![0.0; r];
                for i in 0..r {
                    for j in 0..c {
                        o[i] += v.data()[i * c + j];
                    }
                }
                Tensor::vector(o)
            }
            _ => {
                return Err(TensorError::Dimension(format!(
                    "sum_axis axis {axis} out of range for a matrix"
                )))
            }
        };
        let needs = self.needs(a.0);
        Ok(self.push(out, Op::SumAxis { a: a.0, axis }, needs))
    }

    /// Elementwise sum of same-shape tensors.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Dimension("add_n of zero tensors".into()));
        }
        let shape = self.nodes[parts[0].0].value.shape().to_vec();
        let mut data = vec![0.0; shape.iter().product()];
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.shape() != shape.as_slice() {
                return Err(TensorError::Dimension(format!(
                    "add_n shape mismatch: {:?} vs {:?}",
                    v.shape(),
                    shape
                )));
            }
            for (d, x) in data.iter_mut().zip(v.data()) {
                *d += x;
            }
        }
        let needs = parts.iter().any(|p| self.needs(p.0));
        let idxs = parts.iter().map(|p| p.0).collect();
        Ok(self.push(Tensor::new(shape, data)?, Op::AddN { parts: idxs }, needs))
    }

    /// Numerically stable softmax of a vector (max subtraction).
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = &self.nodes[a.0].value;
        if v.rank() != 1 {
            return Err(TensorError::Dimension(format!(
                "softmax expects a vector, got shape {:?}",
                v.shape()
            )));
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.data().iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let out = Tensor::vector(exps.iter().map(|e| e / sum).collect());
        let needs = self.needs(a.0);
        Ok(self.push(out, Op::Softmax { a: a.0 }, needs))
    }

    /// Cosine similarity of two equal-length vectors. The norm product in
    /// the denominator is floored at ε so zero vectors yield 0; away from
    /// that floor the value is the exact cosine.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.rank() != 1 || va.shape() != vb.shape() {
            return Err(TensorError::Dimension(format!(
                "cosine expects equal-length vectors, got {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let dot: f64 = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).sum();
        let na = va.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let out = Tensor::scalar(dot / (na * nb).max(COSINE_EPS));
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(out, Op::Cosine { a: a.0, b: b.0 }, needs))
    }

    /// `−log softmax(logits)[label]`, computed via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var, TensorError> {
        let v = &self.nodes[logits.0].value;
        if v.rank() != 1 || label >= v.numel() {
            return Err(TensorError::Dimension(format!(
                "cross_entropy: label {label} with logits shape {:?}",
                v.shape()
            )));
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + v.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out = Tensor::scalar(lse - v.data()[label]);
        let needs = self.needs(logits.0);
        Ok(self.push(out, Op::CrossEntropy { logits: logits.0, label }, needs))
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, m: Var, index: usize) -> Result<Var, TensorError> {
        let v = &self.nodes[m.0].value;
        let (r, c) = match v.shape() {
            [r, c] => (*r, *c),
            s => {
                return Err(TensorError::Dimension(format!(
                    "row expects a matrix, got shape {s:?}"
                )))
            }
        };
        if index >= r {
            return Err(TensorError::Dimension(format!("row {index} out of {r}")));
        }
        let out = Tensor::vector(v.data()[index * c..(index + 1) * c].to_vec());
        let needs = self.needs(m.0);
        Ok(self.push(out, Op::Row { m: m.0, index }, needs))
    }

    /// Element `index` of a vector, as a scalar.
    pub fn pick(&mut self, v: Var, index: usize) -> Result<Var, TensorError> {
        let val = &self.nodes[v.0].value;
        if val.rank() != 1 || index >= val.numel() {
            return Err(TensorError::Dimension(format!(
                "pick {index} from shape {:?}",
                val.shape()
            )));
        }
        let out = Tensor::scalar(val.data()[index]);
        let needs = self.needs(v.0);
        Ok(self.push(out, Op::Pick { v: v.0, index }, needs))
    }

    /// Valid 2-D convolution of a `[H×W]` input with `[F×R×R]` filters and a
    /// per-filter bias, producing `[F×H'×W']`. Implemented by flattening the
    /// input into a patch matrix and taking per-filter dot products.
    pub fn conv2d(
        &mut self,
        input: Var,
        filters: Var,
        bias: Var,
        stride: usize,
    ) -> Result<Var, TensorError> {
        let (vi, vf, vb) = (
            &self.nodes[input.0].value,
            &self.nodes[filters.0].value,
            &self.nodes[bias.0].value,
        );
        let (h, w) = match vi.shape() {
            [h, w] => (*h, *w),
            s => {
                return Err(TensorError::Dimension(format!(
                    "conv2d input must be [H×W], got {s:?}"
                )))
            }
        };
        let (f, r) = match vf.shape() {
            [f, r1, r2] if r1 == r2 => (*f, *r1),
            s => {
                return Err(TensorError::Dimension(format!(
                    "conv2d filters must be [F×R×R], got {s:?}"
                )))
            }
        };
        if vb.shape() != [f] {
            return Err(TensorError::Dimension(format!(
                "conv2d bias must be [{f}], got {:?}",
                vb.shape()
            )));
        }
        if stride == 0 || h < r || w < r {
            return Err(TensorError::Dimension(format!(
                "conv2d: {r}×{r} kernel at stride {stride} does not fit {h}×{w}"
            )));
        }
        let oh = (h - r) / stride + 1;
        let ow = (w - r) / stride + 1;
        let patches = im2col(vi.data(), h, w, r, stride, oh, ow);
        let mut out = vec![0.0; f * oh * ow];
        let area = oh * ow;
        let rr = r * r;
        for fi in 0..f {
            let filt = &vf.data()[fi * rr..(fi + 1) * rr];
            let b = vb.data()[fi];
            for idx in 0..area {
                let patch = &patches[idx * rr..(idx + 1) * rr];
                let mut s = b;
                for j in 0..rr {
                    s += filt[j] * patch[j];
                }
                out[fi * area + idx] = s;
            }
        }
        let needs = self.needs(input.0) || self.needs(filters.0) || self.needs(bias.0);
        Ok(self.push(
            Tensor::new(vec![f, oh, ow], out)?,
            Op::Conv2d { input: input.0, filters: filters.0, bias: bias.0, stride },
            needs,
        ))
    }

    /// Spatial mean over each feature map: `[F×H×W] → [F]`.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = &self.nodes[a.0].value;
        let (f, h, w) = match v.shape() {
            [f, h, w] => (*f, *h, *w),
            s => {
                return Err(TensorError::Dimension(format!(
                    "global_avg_pool expects [F×H×W], got {s:?}"
                )))
            }
        };
        let area = (h * w) as f64;
        let out: Vec<f64> = (0..f)
            .map(|fi| v.data()[fi * h * w..(fi + 1) * h * w].iter().sum::<f64>() / area)
            .collect();
        let needs = self.needs(a.0);
        Ok(self.push(Tensor::vector(out), Op::GlobalAvgPool { a: a.0 }, needs))
    }

    // ── backward pass ───────────────────────────────────────────────────

    /// Accumulate `d loss / d node` for every node that can reach `loss`.
    /// `loss` must be a scalar.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(TensorError::Dimension(format!(
                "backward from non-scalar of shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            let (front, back) = self.nodes.split_at_mut(i);
            let node = &back[0];
            let g = node.grad.as_deref().expect("checked above");
            step_backward(node, g, front);
        }
        Ok(())
    }
}

/// Flatten stride-aligned `R×R` windows of `input` into rows of a patch matrix.
fn im2col(input: &[f64], h: usize, w: usize, r: usize, stride: usize, oh: usize, ow: usize) -> Vec<f64> {
    debug_assert!(h >= r && w >= r);
    let mut patches = vec![0.0; oh * ow * r * r];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * r * r;
            for ky in 0..r {
                let irow = (oy * stride + ky) * w + ox * stride;
                patches[base + ky * r..base + (ky + 1) * r]
                    .copy_from_slice(&input[irow..irow + r]);
            }
        }
    }
    patches
}

fn accumulate(nodes: &mut [Node], idx: usize, add: impl FnOnce(&mut [f64], &Tensor)) {
    if !nodes[idx].needs_grad {
        return;
    }
    let numel = nodes[idx].value.numel();
    if nodes[idx].grad.is_none() {
        nodes[idx].grad = Some(vec![0.0; numel]);
    }
    // Split the borrow: gradient buffer and value live on the same node.
    let node = &mut nodes[idx];
    let value = &node.value;
    let grad = node.grad.as_mut().expect("just initialised");
    add(grad, value);
}

fn step_backward(node: &Node, g: &[f64], front: &mut [Node]) {
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (sa, sb) = (front[*a].value.shape().to_vec(), front[*b].value.shape().to_vec());
            let (m, k, n) = match (sa.as_slice(), sb.as_slice()) {
                ([m, k], [_, n]) => (*m, *k, *n),
                ([m, k], [_]) => (*m, *k, 1),
                ([k], [_, n]) => (1, *k, *n),
                _ => unreachable!("validated at recording time"),
            };
            let b_data = front[*b].value.data().to_vec();
            accumulate(front, *a, |ga, _| {
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * b_data[p * n + j];
                        }
                        ga[i * k + p] += s;
                    }
                }
            });
            let a_data = front[*a].value.data().to_vec();
            accumulate(front, *b, |gb, _| {
                for p in 0..k {
                    for i in 0..m {
                        let aip = a_data[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
            });
        }
        Op::Add { a, b } => {
            backprop_linear(front, *a, g, 1.0);
            backprop_linear(front, *b, g, 1.0);
        }
        Op::Sub { a, b } => {
            backprop_linear(front, *a, g, 1.0);
            backprop_linear(front, *b, g, -1.0);
        }
        Op::Mul { a, b } => {
            let other_b = front[*b].value.data().to_vec();
            backprop_product(front, *a, g, &other_b);
            let other_a = front[*a].value.data().to_vec();
            backprop_product(front, *b, g, &other_a);
        }
        Op::AddRow { m, row } => {
            let c = front[*row].value.numel();
            accumulate(front, *m, |gm, _| {
                for (gd, gi) in gm.iter_mut().zip(g) {
                    *gd += gi;
                }
            });
            accumulate(front, *row, |gr, _| {
                for (i, gi) in g.iter().enumerate() {
                    gr[i % c] += gi;
                }
            });
        }
        Op::ScaleRows { m, s } => {
            let scales = front[*s].value.data().to_vec();
            let c = front[*m].value.shape()[1];
            accumulate(front, *m, |gm, _| {
                for i in 0..scales.len() {
                    for j in 0..c {
                        gm[i * c + j] += scales[i] * g[i * c + j];
                    }
                }
            });
            let m_data = front[*m].value.data().to_vec();
            accumulate(front, *s, |gs, _| {
                for (i, gsi) in gs.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for j in 0..c {
                        dot += g[i * c + j] * m_data[i * c + j];
                    }
                    *gsi += dot;
                }
            });
        }
        Op::Tanh { a } => {
            let y = node.value.data();
            accumulate(front, *a, |ga, _| {
                for ((gd, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *gd += gi * (1.0 - yi * yi);
                }
            });
        }
        Op::Sigmoid { a } => {
            let y = node.value.data();
            accumulate(front, *a, |ga, _| {
                for ((gd, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *gd += gi * yi * (1.0 - yi);
                }
            });
        }
        Op::Scale { a, c } => backprop_linear(front, *a, g, *c),
        Op::Reshape { a } => backprop_linear(front, *a, g, 1.0),
        Op::Concat { parts } => {
            let mut offset = 0;
            for p in parts {
                let len = front[*p].value.numel();
                let slice = &g[offset..offset + len];
                accumulate(front, *p, |gp, _| {
                    for (gd, gi) in gp.iter_mut().zip(slice) {
                        *gd += gi;
                    }
                });
                offset += len;
            }
        }
        Op::SumAll { a } => {
            let gi = g[0];
            accumulate(front, *a, |ga, _| {
                for gd in ga.iter_mut() {
                    *gd += gi;
                }
            });
        }
        Op::SumAxis { a, axis } => {
            let c = front[*a].value.shape()[1];
            let axis = *axis;
            accumulate(front, *a, |ga, v| {
                let r = v.shape()[0];
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += if axis == 0 { g[j] } else { g[i] };
                    }
                }
            });
        }
        Op::AddN { parts } => {
            for p in parts {
                backprop_linear(front, *p, g, 1.0);
            }
        }
        Op::Softmax { a } => {
            let y = node.value.data();
            let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
            accumulate(front, *a, |ga, _| {
                for ((gd, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *gd += yi * (gi - dot);
                }
            });
        }
        Op::Cosine { a, b } => {
            let va = front[*a].value.data().to_vec();
            let vb = front[*b].value.data().to_vec();
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
            let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
            let floored = na * nb <= COSINE_EPS;
            let denom = (na * nb).max(COSINE_EPS);
            let gs = g[0];
            accumulate(front, *a, |ga, _| {
                for i in 0..ga.len() {
                    // On the ε floor the denominator is constant in a.
                    let unit = if floored { 0.0 } else { va[i] / na };
                    ga[i] += gs * (vb[i] / denom - dot * nb * unit / (denom * denom));
                }
            });
            accumulate(front, *b, |gb, _| {
                for i in 0..gb.len() {
                    let unit = if floored { 0.0 } else { vb[i] / nb };
                    gb[i] += gs * (va[i] / denom - dot * na * unit / (denom * denom));
                }
            });
        }
        Op::CrossEntropy { logits, label } => {
            let v = front[*logits].value.data().to_vec();
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let gs = g[0];
            let label = *label;
            accumulate(front, *logits, |gl, _| {
                for (i, gd) in gl.iter_mut().enumerate() {
                    let softmax_i = exps[i] / sum;
                    let target = if i == label { 1.0 } else { 0.0 };
                    *gd += gs * (softmax_i - target);
                }
            });
        }
        Op::Row { m, index } => {
            let c = node.value.numel();
            let start = index * c;
            accumulate(front, *m, |gm, _| {
                for j in 0..c {
                    gm[start + j] += g[j];
                }
            });
        }
        Op::Pick { v, index } => {
            let gi = g[0];
            let index = *index;
            accumulate(front, *v, |gv, _| {
                gv[index] += gi;
            });
        }
        Op::Conv2d { input, filters, bias, stride } => {
            let stride = *stride;
            let ishape = front[*input].value.shape().to_vec();
            let fshape = front[*filters].value.shape().to_vec();
            let (h, w) = (ishape[0], ishape[1]);
            let (f, r) = (fshape[0], fshape[1]);
            let oshape = node.value.shape();
            let (oh, ow) = (oshape[1], oshape[2]);
            let area = oh * ow;
            let rr = r * r;
            let idata = front[*input].value.data().to_vec();
            let patches = im2col(&idata, h, w, r, stride, oh, ow);
            accumulate(front, *filters, |gf, _| {
                for fi in 0..f {
                    for idx in 0..area {
                        let gi = g[fi * area + idx];
                        if gi == 0.0 {
                            continue;
                        }
                        let patch = &patches[idx * rr..(idx + 1) * rr];
                        let grow = &mut gf[fi * rr..(fi + 1) * rr];
                        for j in 0..rr {
                            grow[j] += gi * patch[j];
                        }
                    }
                }
            });
            accumulate(front, *bias, |gb, _| {
                for fi in 0..f {
                    gb[fi] += g[fi * area..(fi + 1) * area].iter().sum::<f64>();
                }
            });
            let fdata = front[*filters].value.data().to_vec();
            accumulate(front, *input, |gi_buf, _| {
                for fi in 0..f {
                    let filt = &fdata[fi * rr..(fi + 1) * rr];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gi = g[fi * area + oy * ow + ox];
                            if gi == 0.0 {
                                continue;
                            }
                            for ky in 0..r {
                                let irow = (oy * stride + ky) * w + ox * stride;
                                for kx in 0..r {
                                    gi_buf[irow + kx] += gi * filt[ky * r + kx];
                                }
                            }
                        }
                    }
                }
            });
        }
        Op::GlobalAvgPool { a } => {
            let shape = front[*a].value.shape().to_vec();
            let (h, w) = (shape[1], shape[2]);
            let inv_area = 1.0 / (h * w) as f64;
            accumulate(front, *a, |ga, _| {
                for fi in 0..g.len() {
                    let gi = g[fi] * inv_area;
                    for x in ga[fi * h * w..(fi + 1) * h * w].iter_mut() {
                        *x += gi;
                    }
                }
            });
        }
    }
}

fn backprop_linear(front: &mut [Node], idx: usize, g: &[f64], factor: f64) {
    accumulate(front, idx, |gd, v| {
        if v.numel() == g.len() {
            for (d, gi) in gd.iter_mut().zip(g) {
                *d += factor * gi;
            }
        } else {
            // Scalar operand of a broadcast op: fold the full gradient in.
            debug_assert_eq!(v.numel(), 1);
            gd[0] += factor * g.iter().sum::<f64>();
        }
    });
}

fn backprop_product(front: &mut [Node], idx: usize, g: &[f64], other: &[f64]) {
    accumulate(front, idx, |gd, v| {
        if v.numel() == g.len() {
            if other.len() == g.len() {
                for ((d, gi), o) in gd.iter_mut().zip(g).zip(other) {
                    *d += gi * o;
                }
            } else {
                debug_assert_eq!(other.len(), 1);
                for (d, gi) in gd.iter_mut().zip(g) {
                    *d += gi * other[0];
                }
            }
        } else {
            debug_assert_eq!(v.numel(), 1);
            gd[0] += g.iter().zip(other).map(|(gi, o)| gi * o).sum::<f64>();
        }
    });
}
