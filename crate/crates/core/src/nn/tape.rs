//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every forward operation appends a node holding its output value and the
//! information its backward rule needs. `backward` walks the tape in reverse,
//! so gradient accumulation order is fixed and results are bit-reproducible.
//! Nodes that do not depend on any trainable leaf are never differentiated.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Silu,
    LeakyRelu(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddChannel(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    Upsample2(Var),
    ConcatChannels(Var, Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    /// Input and the elementwise derivative at the input.
    Act(Var, Vec<f64>),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Reshape(Var),
    MeanLength(Var),
    SelectRows {
        x: Var,
        token: Var,
        mask: Vec<bool>,
    },
    Mse(Var, Var),
    Mean(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A recording of one forward computation against a parameter store.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: Vec<(Var, ParamId)>,
    frozen: Vec<bool>,
}

/// Gradients of a scalar with respect to every differentiable node.
pub struct Gradients {
    per_node: Vec<Option<Vec<f64>>>,
    params: Vec<(Var, ParamId)>,
    n_params: usize,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.per_node[v.0].as_deref()
    }

    /// Per-parameter gradients aligned with the store; unused parameters get zeros.
    pub fn into_param_grads(mut self, store: &ParamStore) -> Vec<Vec<f64>> {
        let mut out: Vec<Option<Vec<f64>>> = vec![None; self.n_params];
        for (var, id) in &self.params {
            if let Some(g) = self.per_node[var.0].take() {
                match &mut out[id.index()] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(i, g)| g.unwrap_or_else(|| vec![0.0; store.tensor(ParamId::new(i)).len()]))
            .collect()
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

/// Dot product with eight independent accumulators. The fixed lane order keeps
/// results reproducible while letting the compiler vectorize.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let c = a.chunks_exact(8);
    let r = c.remainder();
    for x in c {
        for k in 0..8 {
            acc[k] += x[k];
        }
    }
    let tail: f64 = r.iter().sum();
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]) + tail
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Valid output range `[lo, hi)` for kernel tap `k` of a strided conv.
#[inline]
fn tap_range(k: usize, pad: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    // need 0 <= l*stride + k - pad < len_in
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if len_in + pad > k {
        ((len_in + pad - k - 1) / stride + 1).min(len_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
            params: Vec::new(),
            frozen: Vec::new(),
        }
    }

    /// Treat `ids` as constants: [`Tape::param`] will not track gradients for them.
    pub fn freeze(&mut self, ids: &[ParamId]) {
        if self.frozen.is_empty() {
            self.frozen = vec![false; self.store.len()];
        }
        for id in ids {
            self.frozen[id.index()] = true;
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable input that is not a stored parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Trainable parameter leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        if self.frozen.get(id.index()).copied().unwrap_or(false) {
            return self.frozen_param(id);
        }
        let v = self.push(self.store.tensor(id).clone(), Op::Leaf, true);
        self.params.push((v, id));
        v
    }

    /// Parameter value used as a constant (no gradient flows into it).
    pub fn frozen_param(&mut self, id: ParamId) -> Var {
        self.push(self.store.tensor(id).clone(), Op::Leaf, false)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{what}: shape mismatch");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).unwrap();
        let ng = self.ng(a) || self.ng(b);
        self.push(t, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).unwrap();
        let ng = self.ng(a) || self.ng(b);
        self.push(t, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).unwrap();
        let ng = self.ng(a) || self.ng(b);
        self.push(t, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let data = self.value(a).data().iter().map(|x| x * s).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data).unwrap();
        let ng = self.ng(a);
        self.push(t, Op::Scale(a, s), ng)
    }

    /// `x[b, c, l] + e[b, c]`.
    pub fn add_channel(&mut self, x: Var, e: Var) -> Var {
        let (bsz, c, l) = dims3(self.shape(x));
        assert_eq!(self.shape(e), &[bsz, c], "add_channel: embedding shape");
        let mut out = self.value(x).data().to_vec();
        let ev = self.value(e).data();
        for (row, &add) in out.chunks_exact_mut(l).zip(ev) {
            row.iter_mut().for_each(|v| *v += add);
        }
        let ng = self.ng(x) || self.ng(e);
        self.push(Tensor::new(vec![bsz, c, l], out).unwrap(), Op::AddChannel(x, e), ng)
    }

    /// Cross-correlation of `x[B, Ci, L]` with `w[Co, Ci, K]` plus `b[Co]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (bsz, ci, len) = dims3(self.shape(x));
        let (co, wci, k) = dims3(self.shape(w));
        assert_eq!(ci, wci, "conv1d: input channels");
        assert_eq!(self.shape(b), &[co], "conv1d: bias shape");
        assert!(stride >= 1 && len + 2 * pad >= k, "conv1d: kernel larger than padded input");
        let lo_len = (len + 2 * pad - k) / stride + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; bsz * co * lo_len];
        for bi in 0..bsz {
            for o in 0..co {
                let orow = &mut out[(bi * co + o) * lo_len..(bi * co + o + 1) * lo_len];
                orow.iter_mut().for_each(|v| *v = bv[o]);
                for i in 0..ci {
                    let xrow = &xv[(bi * ci + i) * len..(bi * ci + i + 1) * len];
                    let wrow = &wv[(o * ci + i) * k..(o * ci + i + 1) * k];
                    if stride == 1 {
                        correlate_s1(orow, xrow, wrow, pad);
                        continue;
                    }
                    for (kk, &wk) in wrow.iter().enumerate() {
                        let (l0, l1) = tap_range(kk, pad, stride, len, lo_len);
                        if l0 >= l1 {
                            continue;
                        }
                        let start = l0 * stride + kk - pad;
                        if stride == 1 {
                            let src = &xrow[start..start + (l1 - l0)];
                            for (d, s) in orow[l0..l1].iter_mut().zip(src) {
                                *d += wk * s;
                            }
                        } else {
                            for (n, d) in orow[l0..l1].iter_mut().enumerate() {
                                *d += wk * xrow[start + n * stride];
                            }
                        }
                    }
                }
            }
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(
            Tensor::new(vec![bsz, co, lo_len], out).unwrap(),
            Op::Conv1d { x, w, b, stride, pad },
            ng,
        )
    }

    /// `[B, Ca, L] ++ [B, Cb, L] -> [B, Ca + Cb, L]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (bsz, ca, l) = dims3(self.shape(a));
        let (bb, cb, lb) = dims3(self.shape(b));
        assert!(bb == bsz && lb == l, "concat_channels: batch or length mismatch");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(bsz * (ca + cb) * l);
        for i in 0..bsz {
            out.extend_from_slice(&av[i * ca * l..(i + 1) * ca * l]);
            out.extend_from_slice(&bv[i * cb * l..(i + 1) * cb * l]);
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(vec![bsz, ca + cb, l], out).unwrap(), Op::ConcatChannels(a, b), ng)
    }

    /// Nearest-neighbor x2 upsampling along length.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let (bsz, c, l) = dims3(self.shape(x));
        let mut out = Vec::with_capacity(bsz * c * l * 2);
        for &v in self.value(x).data() {
            out.push(v);
            out.push(v);
        }
        let ng = self.ng(x);
        self.push(Tensor::new(vec![bsz, c, 2 * l], out).unwrap(), Op::Upsample2(x), ng)
    }

    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        const EPS: f64 = 1e-5;
        let (bsz, c, l) = dims3(self.shape(x));
        assert!(c % groups == 0, "group_norm: channels not divisible by groups");
        let gsize = (c / groups) * l;
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; bsz * groups];
        let mut out = vec![0.0; xv.len()];
        for (gi, (src, dst)) in xv.chunks_exact(gsize).zip(xhat.chunks_exact_mut(gsize)).enumerate() {
            let mean = sum(src) / gsize as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / gsize as f64;
            let r = 1.0 / (var + EPS).sqrt();
            rstd[gi] = r;
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (s - mean) * r;
            }
        }
        for (row_idx, (orow, hrow)) in out.chunks_exact_mut(l).zip(xhat.chunks_exact(l)).enumerate() {
            let ch = row_idx % c;
            let (g, b) = (gv[ch], bv[ch]);
            for (o, h) in orow.iter_mut().zip(hrow) {
                *o = h * g + b;
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            Tensor::new(vec![bsz, c, l], out).unwrap(),
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            },
            ng,
        )
    }

    pub fn act(&mut self, x: Var, a: Activation) -> Var {
        let ng = self.ng(x);
        let xv = self.value(x).data();
        let mut data = Vec::with_capacity(xv.len());
        let mut deriv = Vec::with_capacity(if ng { xv.len() } else { 0 });
        match a {
            Activation::Silu => {
                for &v in xv {
                    let s = sigmoid(v);
                    data.push(v * s);
                    if ng {
                        deriv.push(s * (1.0 + v * (1.0 - s)));
                    }
                }
            }
            Activation::LeakyRelu(slope) => {
                for &v in xv {
                    data.push(if v > 0.0 { v } else { slope * v });
                    if ng {
                        deriv.push(if v > 0.0 { 1.0 } else { slope });
                    }
                }
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), data).unwrap();
        self.push(t, Op::Act(x, deriv), ng)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.act(x, Activation::Silu)
    }

    /// `x[B, I] @ w[O, I]^T + b[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let s = self.shape(x);
        assert_eq!(s.len(), 2, "linear: input must be [batch, features]");
        let (bsz, din) = (s[0], s[1]);
        let ws = self.shape(w);
        assert_eq!(ws.len(), 2, "linear: weight must be [out, in]");
        let dout = ws[0];
        assert_eq!(ws[1], din, "linear: input features");
        assert_eq!(self.shape(b), &[dout], "linear: bias shape");
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; bsz * dout];
        for (xrow, orow) in xv.chunks_exact(din).zip(out.chunks_exact_mut(dout)) {
            for ((o, wrow), &bias) in orow.iter_mut().zip(wv.chunks_exact(din)).zip(bv) {
                *o = bias + dot(xrow, wrow);
            }
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        self.push(Tensor::new(vec![bsz, dout], out).unwrap(), Op::Linear { x, w, b }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshaped(shape).expect("reshape: element count");
        let ng = self.ng(x);
        self.push(t, Op::Reshape(x), ng)
    }

    /// Mean over the length axis: `[B, C, L] -> [B, C]`.
    pub fn mean_length(&mut self, x: Var) -> Var {
        let (bsz, c, l) = dims3(self.shape(x));
        let out = self.value(x).data().chunks_exact(l).map(|r| sum(r) / l as f64).collect();
        let ng = self.ng(x);
        self.push(Tensor::new(vec![bsz, c], out).unwrap(), Op::MeanLength(x), ng)
    }

    /// Replace row `b` of `x[B, E]` with `token[E]` wherever `mask[b]`.
    pub fn select_rows(&mut self, x: Var, token: Var, mask: &[bool]) -> Var {
        let s = self.shape(x);
        assert_eq!(s.len(), 2, "select_rows: x must be [batch, dim]");
        let (bsz, e) = (s[0], s[1]);
        assert_eq!(mask.len(), bsz, "select_rows: mask length");
        assert_eq!(self.shape(token), &[e], "select_rows: token shape");
        let mut out = self.value(x).data().to_vec();
        let tv = self.value(token).data();
        for (row, &m) in out.chunks_exact_mut(e).zip(mask) {
            if m {
                row.copy_from_slice(tv);
            }
        }
        let ng = self.ng(x) || self.ng(token);
        self.push(
            Tensor::new(vec![bsz, e], out).unwrap(),
            Op::SelectRows {
                x,
                token,
                mask: mask.to_vec(),
            },
            ng,
        )
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mse");
        let n = self.value(a).len() as f64;
        let s: f64 = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::scalar(s / n), Op::Mse(a, b), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(m), Op::Mean(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum::<f64>();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward: loss must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients {
            per_node: grads,
            params: self.params.clone(),
            n_params: self.store.len(),
        }
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let len_of = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                    if self.ng(v) {
                        let acc = accumulate(&mut grads[v.0], g.len());
                        acc.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if self.ng(v) {
                        let acc = accumulate(&mut grads[v.0], g.len());
                        acc.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.ng(v) {
                        let ov = self.value(other).data();
                        let acc = accumulate(&mut grads[v.0], g.len());
                        for ((x, y), o) in acc.iter_mut().zip(g).zip(ov) {
                            *x += y * o;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.ng(*a) {
                    let acc = accumulate(&mut grads[a.0], g.len());
                    acc.iter_mut().zip(g).for_each(|(x, y)| *x += s * y);
                }
            }
            Op::AddChannel(x, e) => {
                let l = self.shape(*x)[2];
                if self.ng(*x) {
                    let acc = accumulate(&mut grads[x.0], g.len());
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                if self.ng(*e) {
                    let acc = accumulate(&mut grads[e.0], len_of(*e));
                    for (a, row) in acc.iter_mut().zip(g.chunks_exact(l)) {
                        *a += sum(row);
                    }
                }
            }
            Op::Conv1d { x, w, b, stride, pad } => self.conv1d_backward(*x, *w, *b, *stride, *pad, g, grads),
            Op::Upsample2(x) => {
                if self.ng(*x) {
                    let acc = accumulate(&mut grads[x.0], len_of(*x));
                    for (a, pair) in acc.iter_mut().zip(g.chunks_exact(2)) {
                        *a += pair[0] + pair[1];
                    }
                }
            }
            Op::ConcatChannels(a, b) => {
                let (bsz, ca, l) = dims3(self.shape(*a));
                let cb = self.shape(*b)[1];
                let stride = (ca + cb) * l;
                if self.ng(*a) {
                    let acc = accumulate(&mut grads[a.0], bsz * ca * l);
                    for i in 0..bsz {
                        let src = &g[i * stride..i * stride + ca * l];
                        acc[i * ca * l..(i + 1) * ca * l].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                }
                if self.ng(*b) {
                    let acc = accumulate(&mut grads[b.0], bsz * cb * l);
                    for i in 0..bsz {
                        let src = &g[i * stride + ca * l..(i + 1) * stride];
                        acc[i * cb * l..(i + 1) * cb * l].iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            } => {
                let (_, c, l) = dims3(self.shape(*x));
                let gv = self.value(*gamma).data();
                if self.ng(*gamma) || self.ng(*beta) {
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for (row_idx, (grow, hrow)) in g.chunks_exact(l).zip(xhat.chunks_exact(l)).enumerate() {
                        let ch = row_idx % c;
                        dg[ch] += dot(grow, hrow);
                        db[ch] += sum(grow);
                    }
                    if self.ng(*gamma) {
                        let acc = accumulate(&mut grads[gamma.0], c);
                        acc.iter_mut().zip(&dg).for_each(|(a, b)| *a += b);
                    }
                    if self.ng(*beta) {
                        let acc = accumulate(&mut grads[beta.0], c);
                        acc.iter_mut().zip(&db).for_each(|(a, b)| *a += b);
                    }
                }
                if self.ng(*x) {
                    let cg = c / groups;
                    let gsize = cg * l;
                    let mut dxhat = vec![0.0; gsize];
                    let acc = accumulate(&mut grads[x.0], g.len());
                    for (gi, ((gg, hh), dx)) in g
                        .chunks_exact(gsize)
                        .zip(xhat.chunks_exact(gsize))
                        .zip(acc.chunks_exact_mut(gsize))
                        .enumerate()
                    {
                        let ch0 = (gi % groups) * cg;
                        for (ci, (drow, grow)) in dxhat.chunks_exact_mut(l).zip(gg.chunks_exact(l)).enumerate() {
                            let gamma_c = gv[ch0 + ci];
                            drow.iter_mut().zip(grow).for_each(|(d, g)| *d = g * gamma_c);
                        }
                        let n = gsize as f64;
                        let mean_d = sum(&dxhat) / n;
                        let mean_dh = dot(&dxhat, hh) / n;
                        let r = rstd[gi];
                        for ((o, d), h) in dx.iter_mut().zip(&dxhat).zip(hh) {
                            *o += r * (d - mean_d - h * mean_dh);
                        }
                    }
                }
            }
            Op::Act(x, deriv) => {
                if self.ng(*x) {
                    let acc = accumulate(&mut grads[x.0], g.len());
                    for ((o, gg), d) in acc.iter_mut().zip(g).zip(deriv) {
                        *o += gg * d;
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let din = self.shape(*x)[1];
                let dout = self.shape(*w)[0];
                if self.ng(*x) {
                    let wv = self.value(*w).data();
                    let acc = accumulate(&mut grads[x.0], len_of(*x));
                    for (arow, grow) in acc.chunks_exact_mut(din).zip(g.chunks_exact(dout)) {
                        for (&go, wrow) in grow.iter().zip(wv.chunks_exact(din)) {
                            arow.iter_mut().zip(wrow).for_each(|(a, w)| *a += go * w);
                        }
                    }
                }
                if self.ng(*w) {
                    let xv = self.value(*x).data();
                    let acc = accumulate(&mut grads[w.0], len_of(*w));
                    for (xrow, grow) in xv.chunks_exact(din).zip(g.chunks_exact(dout)) {
                        for (&go, arow) in grow.iter().zip(acc.chunks_exact_mut(din)) {
                            arow.iter_mut().zip(xrow).for_each(|(a, x)| *a += go * x);
                        }
                    }
                }
                if self.ng(*b) {
                    let acc = accumulate(&mut grads[b.0], dout);
                    for grow in g.chunks_exact(dout) {
                        acc.iter_mut().zip(grow).for_each(|(a, g)| *a += g);
                    }
                }
            }
            Op::Reshape(x) => {
                if self.ng(*x) {
                    let acc = accumulate(&mut grads[x.0], g.len());
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            Op::MeanLength(x) => {
                if self.ng(*x) {
                    let l = self.shape(*x)[2];
                    let inv = 1.0 / l as f64;
                    let acc = accumulate(&mut grads[x.0], len_of(*x));
                    for (row, &gg) in acc.chunks_exact_mut(l).zip(g) {
                        row.iter_mut().for_each(|a| *a += gg * inv);
                    }
                }
            }
            Op::SelectRows { x, token, mask } => {
                let e = self.shape(*token)[0];
                if self.ng(*x) {
                    let acc = accumulate(&mut grads[x.0], g.len());
                    for ((arow, grow), &m) in acc.chunks_exact_mut(e).zip(g.chunks_exact(e)).zip(mask) {
                        if !m {
                            arow.iter_mut().zip(grow).for_each(|(a, b)| *a += b);
                        }
                    }
                }
                if self.ng(*token) {
                    let acc = accumulate(&mut grads[token.0], e);
                    for (grow, &m) in g.chunks_exact(e).zip(mask) {
                        if m {
                            acc.iter_mut().zip(grow).for_each(|(a, b)| *a += b);
                        }
                    }
                }
            }
            Op::Mse(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let k = 2.0 * g[0] / av.len() as f64;
                for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if self.ng(v) {
                        let acc = accumulate(&mut grads[v.0], av.len());
                        for ((o, x), y) in acc.iter_mut().zip(av).zip(bv) {
                            *o += sign * k * (x - y);
                        }
                    }
                }
            }
            Op::Mean(x) => {
                if self.ng(*x) {
                    let n = len_of(*x);
                    let k = g[0] / n as f64;
                    accumulate(&mut grads[x.0], n).iter_mut().for_each(|a| *a += k);
                }
            }
            Op::Sum(x) => {
                if self.ng(*x) {
                    let n = len_of(*x);
                    accumulate(&mut grads[x.0], n).iter_mut().for_each(|a| *a += g[0]);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(&self, x: Var, w: Var, b: Var, stride: usize, pad: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (bsz, ci, len) = dims3(self.shape(x));
        let (co, _, k) = dims3(self.shape(w));
        let lo_len = g.len() / (bsz * co);
        if self.ng(b) {
            let acc = accumulate(&mut grads[b.0], co);
            for (row_idx, grow) in g.chunks_exact(lo_len).enumerate() {
                acc[row_idx % co] += sum(grow);
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        if self.ng(w) {
            let acc = accumulate(&mut grads[w.0], co * ci * k);
            for bi in 0..bsz {
                for o in 0..co {
                    let grow = &g[(bi * co + o) * lo_len..(bi * co + o + 1) * lo_len];
                    for i in 0..ci {
                        let xrow = &xv[(bi * ci + i) * len..(bi * ci + i + 1) * len];
                        let arow = &mut acc[(o * ci + i) * k..(o * ci + i + 1) * k];
                        if stride == 1 && k == 3 && pad <= 2 {
                            tap_dots3(arow, grow, xrow, pad);
                            continue;
                        }
                        for (kk, a) in arow.iter_mut().enumerate() {
                            let (l0, l1) = tap_range(kk, pad, stride, len, lo_len);
                            if l0 >= l1 {
                                continue;
                            }
                            let start = l0 * stride + kk - pad;
                            let dot: f64 = if stride == 1 {
                                dot(&grow[l0..l1], &xrow[start..start + (l1 - l0)])
                            } else {
                                grow[l0..l1].iter().enumerate().map(|(n, gv)| gv * xrow[start + n * stride]).sum()
                            };
                            *a += dot;
                        }
                    }
                }
            }
        }
        if self.ng(x) {
            let acc = accumulate(&mut grads[x.0], bsz * ci * len);
            let mut flipped = vec![0.0; k];
            for bi in 0..bsz {
                for o in 0..co {
                    let grow = &g[(bi * co + o) * lo_len..(bi * co + o + 1) * lo_len];
                    for i in 0..ci {
                        let arow = &mut acc[(bi * ci + i) * len..(bi * ci + i + 1) * len];
                        let wrow = &wv[(o * ci + i) * k..(o * ci + i + 1) * k];
                        if stride == 1 && pad < k {
                            // The input gradient is a correlation of g with the flipped kernel.
                            flipped.iter_mut().zip(wrow.iter().rev()).for_each(|(f, w)| *f = *w);
                            correlate_s1(arow, grow, &flipped, k - 1 - pad);
                            continue;
                        }
                        for (kk, &wk) in wrow.iter().enumerate() {
                            let (l0, l1) = tap_range(kk, pad, stride, len, lo_len);
                            if l0 >= l1 {
                                continue;
                            }
                            let start = l0 * stride + kk - pad;
                            if stride == 1 {
                                for (d, gv) in arow[start..start + (l1 - l0)].iter_mut().zip(&grow[l0..l1]) {
                                    *d += wk * gv;
                                }
                            } else {
                                for (n, gv) in grow[l0..l1].iter().enumerate() {
                                    arow[start + n * stride] += wk * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out[l] += sum_k w[k] * x[l + k - pad]`, skipping taps that fall outside `x`.
fn correlate_s1(out: &mut [f64], x: &[f64], w: &[f64], pad: usize) {
    let (n_out, n_in, k) = (out.len(), x.len(), w.len());
    // Outputs whose taps are all in range.
    let lo = pad.min(n_out);
    let hi = (n_in + pad + 1).saturating_sub(k).clamp(lo, n_out);
    let edge = |l: usize, out: &mut [f64]| {
        let mut acc = 0.0;
        for (kk, &wk) in w.iter().enumerate() {
            let j = l + kk;
            if j >= pad && j - pad < n_in {
                acc += wk * x[j - pad];
            }
        }
        out[l] += acc;
    };
    for l in (0..lo).chain(hi..n_out) {
        edge(l, out);
    }
    if hi <= lo {
        return;
    }
    let base = lo - pad;
    let m = hi - lo;
    let dst = &mut out[lo..hi];
    match k {
        1 => {
            let w0 = w[0];
            dst.iter_mut().zip(&x[base..base + m]).for_each(|(d, a)| *d += w0 * a);
        }
        3 => {
            let (w0, w1, w2) = (w[0], w[1], w[2]);
            let (x0, x1, x2) = (&x[base..base + m], &x[base + 1..base + 1 + m], &x[base + 2..base + 2 + m]);
            for (((d, a), b), c) in dst.iter_mut().zip(x0).zip(x1).zip(x2) {
                *d += w0 * a + w1 * b + w2 * c;
            }
        }
        _ => {
            for (kk, &wk) in w.iter().enumerate() {
                let src = &x[base + kk..base + kk + m];
                dst.iter_mut().zip(src).for_each(|(d, a)| *d += wk * a);
            }
        }
    }
}

/// `acc[k] += sum_l g[l] * x[l + k - pad]` for a 3-tap kernel, all taps in one pass.
fn tap_dots3(acc: &mut [f64], g: &[f64], x: &[f64], pad: usize) {
    let (n_out, n_in) = (g.len(), x.len());
    let lo = pad.min(n_out);
    let hi = (n_in + pad + 1).saturating_sub(3).clamp(lo, n_out);
    let mut edge = [0.0; 3];
    for l in (0..lo).chain(hi..n_out) {
        for (kk, e) in edge.iter_mut().enumerate() {
            let j = l + kk;
            if j >= pad && j - pad < n_in {
                *e += g[l] * x[j - pad];
            }
        }
    }
    let mut lanes = [[0.0f64; 4]; 3];
    if hi > lo {
        let base = lo - pad;
        let m = hi - lo;
        let gs = &g[lo..hi];
        let xs = [&x[base..base + m], &x[base + 1..base + 1 + m], &x[base + 2..base + 2 + m]];
        let full = m - m % 4;
        let chunks = gs[..full]
            .chunks_exact(4)
            .zip(xs[0][..full].chunks_exact(4))
            .zip(xs[1][..full].chunks_exact(4))
            .zip(xs[2][..full].chunks_exact(4));
        for (((gc, a), b), c) in chunks {
            for q in 0..4 {
                lanes[0][q] += gc[q] * a[q];
                lanes[1][q] += gc[q] * b[q];
                lanes[2][q] += gc[q] * c[q];
            }
        }
        for c in full..m {
            for (kk, xk) in xs.iter().enumerate() {
                edge[kk] += gs[c] * xk[c];
            }
        }
    }
    for kk in 0..3 {
        let l = &lanes[kk];
        acc[kk] += (l[0] + l[2]) + (l[1] + l[3]) + edge[kk];
    }
}

fn dims3(s: &[usize]) -> (usize, usize, usize) {
    assert_eq!(s.len(), 3, "expected a rank-3 tensor, got shape {s:?}");
    (s[0], s[1], s[2])
}
