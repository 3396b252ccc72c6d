use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::{self, ConvDims};
use super::gru::{self, GruCache};
use super::{matmul, Real, Tensor};
use crate::error::{Error, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<T>, inv_std: Vec<T>, training: bool },
    Relu { x: Var },
    AvgPool { x: Var, ph: usize, pw: usize },
    Mean { x: Var, axis: usize },
    SwapLast2 { x: Var },
    Reshape { x: Var },
    Gru { x: Var, p: [Var; 8], cache: [GruCache<T>; 2] },
    Linear { x: Var, w: Var, b: Var },
    Concat { a: Var, b: Var },
    L1 { pred: Var, target: Vec<T> },
    WeightedSum { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Per-channel batch statistics from a training-mode batch norm: the mean
/// and the unbiased variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Records operations in evaluation order and replays them backwards.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(msg: alloc::string::String) -> Error {
    Error::ShapeMismatch(msg)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of a leaf after [`Graph::backward`]; `None` when the leaf is
    /// constant or the loss does not depend on it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert!(value.is_finite(), "non-finite activation in node {}", self.nodes.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Valid cross-correlation of `x: [N, C, H, W]` with `w: [K, C, kh, kw]`
    /// plus bias `b: [K]`, giving `[N, K, H - kh + 1, W - kw + 1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || self.shape(b) != [ws[0]] {
            return Err(shape_err(format!("conv2d input {xs:?}, kernels {ws:?}, bias {:?}", self.shape(b))));
        }
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, kh, kw) = (ws[0], ws[2], ws[3]);
        if h < kh || wd < kw {
            return Err(shape_err(format!("conv2d input {xs:?} smaller than kernel {kh}x{kw}")));
        }
        let d = ConvDims { c, h, w: wd, k, kh, kw };
        let (ho, wo) = (d.ho(), d.wo());
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = self.value(b).data();
        let mut out = vec![T::zero(); n * k * ho * wo];
        let mut scratch = conv::scratch(&d);
        for s in 0..n {
            conv::forward(&d, &xv[s * c * h * wd..][..c * h * wd], wv, bv, &mut scratch, &mut out[s * k * ho * wo..][..k * ho * wo]);
        }
        let value = Tensor::new(vec![n, k, ho, wo], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b }, &[x, w, b]))
    }

    fn bn_shapes(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let xs = self.shape(x);
        if xs.len() < 2 || self.shape(gamma) != [xs[1]] || self.shape(beta) != [xs[1]] {
            return Err(shape_err(format!("batch norm input {xs:?}, gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta))));
        }
        Ok((xs[0], xs[1], xs[2..].iter().product()))
    }

    /// Batch normalization over every axis except 1 using the batch's own
    /// statistics. Returns the output and the statistics for updating
    /// running averages.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, BatchStats<T>)> {
        let (n, c, s) = self.bn_shapes(x, gamma, beta)?;
        if n < 2 {
            return Err(Error::InvalidArgument(format!("training-mode batch norm needs a batch of at least 2, got {n}")));
        }
        let count = n * s;
        let xv = self.value(x).data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let (mut sum, mut sq) = (0.0, 0.0);
            for b in 0..n {
                let (s1, s2) = sum_and_squares(&xv[(b * c + ch) * s..][..s]);
                sum += s1;
                sq += s2;
            }
            let mu = sum / count as f64;
            mean[ch] = T::of(mu);
            var[ch] = T::of((sq / count as f64 - mu * mu).max(0.0));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(BATCH_NORM_EPS)).sqrt()).collect();
        let v = self.bn_apply(x, gamma, beta, &mean, inv_std, true, n, c, s);
        let unbiased = var.iter().map(|&v| v * T::of(count as f64 / (count as f64 - 1.0))).collect();
        Ok((v, BatchStats { mean, var: unbiased }))
    }

    /// Batch normalization with fixed statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T]) -> Result<Var> {
        let (n, c, s) = self.bn_shapes(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(shape_err(format!("running statistics of length {} / {} for {c} channels", mean.len(), var.len())));
        }
        let inv_std = var.iter().map(|&v| T::one() / (v + T::of(BATCH_NORM_EPS)).sqrt()).collect();
        Ok(self.bn_apply(x, gamma, beta, mean, inv_std, false, n, c, s))
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        inv_std: Vec<T>,
        training: bool,
        n: usize,
        c: usize,
        s: usize,
    ) -> Var {
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..n {
            for ch in 0..c {
                let r = (b * c + ch) * s..(b * c + ch + 1) * s;
                let scale = g[ch] * inv_std[ch];
                let shift = be[ch] - mean[ch] * scale;
                for (o, &v) in out[r.clone()].iter_mut().zip(&xv[r]) {
                    *o = v * scale + shift;
                }
            }
        }
        let value = Tensor::new(self.value(x).shape().to_vec(), out).expect("same shape as input");
        self.push(value, Op::BatchNorm { x, gamma, beta, mean: mean.to_vec(), inv_std, training }, &[x, gamma, beta])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|&a| if a > T::zero() { a } else { T::zero() }).collect();
        let value = Tensor::new(v.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Relu { x }, &[x])
    }

    /// Mean over non-overlapping `ph x pw` windows of the last two axes of
    /// `[N, C, H, W]`; trailing rows and columns that do not fill a window
    /// are dropped.
    pub fn avg_pool2d(&mut self, x: Var, ph: usize, pw: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || ph == 0 || pw == 0 || xs[2] < ph || xs[3] < pw {
            return Err(shape_err(format!("cannot pool {xs:?} with a {ph}x{pw} window")));
        }
        let (nc, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (ho, wo) = (h / ph, w / pw);
        let xv = self.value(x).data();
        let scale = T::of(1.0 / (ph * pw) as f64);
        let mut out = vec![T::zero(); nc * ho * wo];
        for m in 0..nc {
            for i in 0..ho {
                let dst = &mut out[(m * ho + i) * wo..][..wo];
                for di in 0..ph {
                    let row = &xv[(m * h + i * ph + di) * w..][..wo * pw];
                    for (d, win) in dst.iter_mut().zip(row.chunks_exact(pw)) {
                        *d += win.iter().copied().sum::<T>();
                    }
                }
                dst.iter_mut().for_each(|v| *v *= scale);
            }
        }
        let value = Tensor::new(vec![xs[0], xs[1], ho, wo], out)?;
        Ok(self.push(value, Op::AvgPool { x, ph, pw }, &[x]))
    }

    /// Arithmetic mean along `axis`, which is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || xs[axis] == 0 {
            return Err(shape_err(format!("cannot average {xs:?} over axis {axis}")));
        }
        let outer: usize = xs[..axis].iter().product();
        let len = xs[axis];
        let inner: usize = xs[axis + 1..].iter().product();
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for k in 0..len {
                let src = &xv[(o * len + k) * inner..(o * len + k + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
        }
        let scale = T::of(1.0 / len as f64);
        out.iter_mut().for_each(|v| *v *= scale);
        let mut shape = xs.clone();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Mean { x, axis }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(shape_err(format!("cannot transpose {xs:?}")));
        }
        let (a, b) = (xs[xs.len() - 2], xs[xs.len() - 1]);
        let out = transpose_blocks(self.value(x).data(), a, b);
        let mut shape = xs.clone();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::SwapLast2 { x }, &[x]))
    }

    /// Bidirectional GRU over `x: [N, L, D]` giving `[N, L, 2H]`. `p` holds
    /// `w_ih [3H, D], w_hh [3H, H], b_ih [3H], b_hh [3H]` for the forward
    /// direction followed by the same four for the backward direction; gate
    /// blocks are ordered reset, update, candidate.
    pub fn gru_bidirectional(&mut self, x: Var, p: [Var; 8]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[1] == 0 {
            return Err(shape_err(format!("GRU input {xs:?} is not [N, L, D] with L >= 1")));
        }
        let (n, l, d) = (xs[0], xs[1], xs[2]);
        let h = self.shape(p[1]).get(1).copied().unwrap_or(0);
        for dir in 0..2 {
            let q = &p[dir * 4..dir * 4 + 4];
            if self.shape(q[0]) != [3 * h, d]
                || self.shape(q[1]) != [3 * h, h]
                || self.shape(q[2]) != [3 * h]
                || self.shape(q[3]) != [3 * h]
                || h == 0
            {
                return Err(shape_err(format!(
                    "GRU parameters {:?} {:?} {:?} {:?} for input width {d}",
                    self.shape(q[0]),
                    self.shape(q[1]),
                    self.shape(q[2]),
                    self.shape(q[3])
                )));
            }
        }
        let mut out = vec![T::zero(); n * l * 2 * h];
        let xv = self.value(x).data();
        let dims = gru::Dims { n, l, d, h };
        let mut run = |dir: usize| {
            let q = &p[dir * 4..dir * 4 + 4];
            gru::forward(
                &dims,
                xv,
                self.value(q[0]).data(),
                self.value(q[1]).data(),
                self.value(q[2]).data(),
                self.value(q[3]).data(),
                dir == 1,
                &mut out,
                dir * h,
            )
        };
        let fwd = run(0);
        let bwd = run(1);
        let value = Tensor::new(vec![n, l, 2 * h], out)?;
        let mut inputs = vec![x];
        inputs.extend_from_slice(&p);
        Ok(self.push(value, Op::Gru { x, p, cache: [fwd, bwd] }, &inputs))
    }

    /// `x: [N, Din]`, `w: [Dout, Din]`, `b: [Dout]` to `x w^T + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || ws[1] != xs[1] || self.shape(b) != [ws[0]] {
            return Err(shape_err(format!("linear input {xs:?}, weight {ws:?}, bias {:?}", self.shape(b))));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * dout];
        matmul(false, true, n, dout, din, self.value(x).data(), self.value(w).data(), T::zero(), &mut out);
        let bv = self.value(b).data();
        for row in out.chunks_mut(dout.max(1)) {
            row.iter_mut().zip(bv).for_each(|(o, &bb)| *o += bb);
        }
        let value = Tensor::new(vec![n, dout], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Joins `[N, Da]` and `[N, Db]` along the feature axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err(format!("cannot concatenate {sa:?} and {sb:?}")));
        }
        let (n, da, db) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (da + db));
        for s in 0..n {
            out.extend_from_slice(&av[s * da..(s + 1) * da]);
            out.extend_from_slice(&bv[s * db..(s + 1) * db]);
        }
        let value = Tensor::new(vec![n, da + db], out)?;
        Ok(self.push(value, Op::Concat { a, b }, &[a, b]))
    }

    /// Batch mean of the per-sample sum of absolute errors against a
    /// constant target of the same `[N, D]` shape.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let ps = self.shape(pred);
        if ps != target.shape() || ps.is_empty() || ps[0] == 0 {
            return Err(shape_err(format!("prediction {ps:?} vs target {:?}", target.shape())));
        }
        let n = ps[0];
        let total: T = self.value(pred).data().iter().zip(target.data()).map(|(&p, &t)| (p - t).abs()).sum();
        let value = Tensor::scalar(total / T::of(n as f64));
        Ok(self.push(value, Op::L1 { pred, target: target.data().to_vec() }, &[pred]))
    }

    /// `sum(x * weights)` for a constant weight tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: &[T]) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(shape_err(format!("{} weights for {:?}", weights.len(), self.shape(x))));
        }
        let total: T = self.value(x).data().iter().zip(weights).map(|(&a, &w)| a * w).sum();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { x, weights: weights.to_vec() }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let w = vec![T::one(); self.value(x).numel()];
        self.weighted_sum(x, &w).expect("weights match by construction")
    }

    /// Hash of which side of zero every ReLU input and every L1 residual
    /// lies on. Two evaluations with equal signatures lie on the same
    /// smooth piece of the function.
    pub fn kink_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |positive: bool| {
            h ^= positive as u64 + 1;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => self.nodes[x.0].value.data().iter().for_each(|&v| mix(v > T::zero())),
                Op::L1 { pred, target } => self.nodes[pred.0].value.data().iter().zip(target).for_each(|(&p, &t)| mix(p > t)),
                _ => {}
            }
        }
        h
    }

    /// Accumulates d`loss`/d`leaf` into every leaf that requires a gradient.
    /// A graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(shape_err(format!("loss must be a scalar, got {:?}", self.shape(loss))));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for k in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(k);
            let node = &mut rest[0];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = node.grad.take() else { continue };
            backward_op(before, &node.op, &node.value, &g);
        }
        Ok(())
    }
}

fn transpose_blocks<T: Real>(x: &[T], a: usize, b: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    if a * b == 0 {
        return out;
    }
    for (src, dst) in x.chunks(a * b).zip(out.chunks_mut(a * b)) {
        for i in 0..a {
            for j in 0..b {
                dst[j * a + i] = src[i * b + j];
            }
        }
    }
    out
}

/// Sum and sum of squares, accumulated in eight lanes and then in `f64`.
fn sum_and_squares<T: Real>(v: &[T]) -> (f64, f64) {
    let mut s = [T::zero(); 8];
    let mut q = [T::zero(); 8];
    let chunks = v.chunks_exact(8);
    let rest = chunks.remainder();
    for ch in chunks {
        for l in 0..8 {
            s[l] += ch[l];
            q[l] += ch[l] * ch[l];
        }
    }
    let mut s1: f64 = s.iter().map(|v| v.as_f64()).sum();
    let mut s2: f64 = q.iter().map(|v| v.as_f64()).sum();
    for &r in rest {
        s1 += r.as_f64();
        s2 += r.as_f64() * r.as_f64();
    }
    (s1, s2)
}

/// `(sum a, sum a * b)` in the same lane layout as [`sum_and_squares`].
fn sum_and_dot<T: Real>(a: &[T], b: &[T]) -> (f64, f64) {
    let mut s = [T::zero(); 8];
    let mut d = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            s[l] += x[l];
            d[l] += x[l] * y[l];
        }
    }
    let mut s1: f64 = s.iter().map(|v| v.as_f64()).sum();
    let mut s2: f64 = d.iter().map(|v| v.as_f64()).sum();
    for (&x, &y) in ra.iter().zip(rb) {
        s1 += x.as_f64();
        s2 += x.as_f64() * y.as_f64();
    }
    (s1, s2)
}

fn accumulate<T: Real>(nodes: &mut [Node<T>], v: Var, g: Vec<T>) {
    let node = &mut nodes[v.0];
    if !node.requires_grad {
        return;
    }
    debug_assert!(g.iter().all(|x| x.is_finite()), "non-finite gradient into node {}", v.0);
    match &mut node.grad {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
        None => node.grad = Some(g),
    }
}

fn needs<T: Real>(nodes: &[Node<T>], v: Var) -> bool {
    nodes[v.0].requires_grad
}

fn backward_op<T: Real>(nodes: &mut [Node<T>], op: &Op<T>, out: &Tensor<T>, g: &[T]) {
    match op {
        Op::Leaf => {}
        Op::Conv2d { x, w, b } => {
            let xs = nodes[x.0].value.shape().to_vec();
            let ws = nodes[w.0].value.shape().to_vec();
            let d = ConvDims { c: xs[1], h: xs[2], w: xs[3], k: ws[0], kh: ws[2], kw: ws[3] };
            let n = xs[0];
            let (cs, ks) = (d.c * d.h * d.w, d.k * d.ho() * d.wo());
            if needs(nodes, *b) {
                let p = d.ho() * d.wo();
                let mut db = vec![T::zero(); d.k];
                for s in 0..n {
                    for (kk, acc) in db.iter_mut().enumerate() {
                        *acc += g[s * ks + kk * p..][..p].iter().copied().sum();
                    }
                }
                accumulate(nodes, *b, db);
            }
            let (need_w, need_x) = (needs(nodes, *w), needs(nodes, *x));
            let mut dw = vec![T::zero(); if need_w { ws.iter().product() } else { 0 }];
            let mut dx = vec![T::zero(); if need_x { n * cs } else { 0 }];
            let mut gfull = conv::scratch(&d);
            let (xv, wv) = (nodes[x.0].value.data(), nodes[w.0].value.data());
            for s in 0..n {
                if !(need_w || need_x) {
                    break;
                }
                conv::expand_grad(&d, &g[s * ks..][..ks], &mut gfull);
                if need_w {
                    conv::backward_kernels(&d, &xv[s * cs..][..cs], &gfull, &mut dw);
                }
                if need_x {
                    conv::backward_input(&d, wv, &gfull, &mut dx[s * cs..][..cs]);
                }
            }
            if need_w {
                accumulate(nodes, *w, dw);
            }
            if need_x {
                accumulate(nodes, *x, dx);
            }
        }
        Op::BatchNorm { x, gamma, beta, mean, inv_std, training } => {
            let xs = nodes[x.0].value.shape();
            let (n, c) = (xs[0], xs[1]);
            let s: usize = xs[2..].iter().product();
            let count = T::of((n * s) as f64);
            let xv = nodes[x.0].value.data();
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for ch in 0..c {
                let (mut sg, mut sgx) = (0.0, 0.0);
                for b in 0..n {
                    let r = (b * c + ch) * s..(b * c + ch + 1) * s;
                    let (a1, a2) = sum_and_dot(&g[r.clone()], &xv[r]);
                    sg += a1;
                    sgx += a2;
                }
                // sum g * xhat = inv_std * (sum g x - mean * sum g)
                dbeta[ch] = T::of(sg);
                dgamma[ch] = T::of((sgx - mean[ch].as_f64() * sg) * inv_std[ch].as_f64());
            }
            if needs(nodes, *x) {
                let gv = nodes[gamma.0].value.data();
                let mut dx = vec![T::zero(); g.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let r = (b * c + ch) * s..(b * c + ch + 1) * s;
                        let scale = gv[ch] * inv_std[ch];
                        if *training {
                            // scale * (g - mean(g) - xhat * mean(g * xhat))
                            let mg = dbeta[ch] / count;
                            let k = dgamma[ch] / count * inv_std[ch];
                            let mu = mean[ch];
                            for ((d, &gg), &v) in dx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xv[r]) {
                                *d = scale * (gg - mg - (v - mu) * k);
                            }
                        } else {
                            for (d, &gg) in dx[r.clone()].iter_mut().zip(&g[r]) {
                                *d = scale * gg;
                            }
                        }
                    }
                }
                accumulate(nodes, *x, dx);
            }
            accumulate(nodes, *gamma, dgamma);
            accumulate(nodes, *beta, dbeta);
        }
        Op::Relu { x } => {
            let dx = nodes[x.0].value.data().iter().zip(g).map(|(&v, &gg)| if v > T::zero() { gg } else { T::zero() }).collect();
            accumulate(nodes, *x, dx);
        }
        Op::AvgPool { x, ph, pw } => {
            let xs = nodes[x.0].value.shape();
            let (nc, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
            let (ho, wo) = (h / ph, w / pw);
            let scale = T::of(1.0 / (ph * pw) as f64);
            let mut dx = vec![T::zero(); nc * h * w];
            for m in 0..nc {
                for i in 0..ho {
                    let grow = &g[(m * ho + i) * wo..][..wo];
                    for di in 0..*ph {
                        let row = &mut dx[(m * h + i * ph + di) * w..][..wo * pw];
                        for (win, &gg) in row.chunks_exact_mut(*pw).zip(grow) {
                            win.iter_mut().for_each(|v| *v = gg * scale);
                        }
                    }
                }
            }
            accumulate(nodes, *x, dx);
        }
        Op::Mean { x, axis } => {
            let xs = nodes[x.0].value.shape();
            let outer: usize = xs[..*axis].iter().product();
            let len = xs[*axis];
            let inner: usize = xs[axis + 1..].iter().product();
            let scale = T::of(1.0 / len as f64);
            let mut dx = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                for k in 0..len {
                    let dst = &mut dx[(o * len + k) * inner..(o * len + k + 1) * inner];
                    dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]).for_each(|(d, &gg)| *d = gg * scale);
                }
            }
            accumulate(nodes, *x, dx);
        }
        Op::Reshape { x } => accumulate(nodes, *x, g.to_vec()),
        Op::SwapLast2 { x } => {
            let s = out.shape();
            let r = s.len();
            let dx = transpose_blocks(g, s[r - 2], s[r - 1]);
            accumulate(nodes, *x, dx);
        }
        Op::Gru { x, p, cache } => {
            let xs = nodes[x.0].value.shape();
            let dims = gru::Dims { n: xs[0], l: xs[1], d: xs[2], h: nodes[p[1].0].value.shape()[1] };
            let mut dx = vec![T::zero(); dims.n * dims.l * dims.d];
            for dir in 0..2 {
                let q = &p[dir * 4..dir * 4 + 4];
                let grads = gru::backward(
                    &dims,
                    nodes[x.0].value.data(),
                    nodes[q[0].0].value.data(),
                    nodes[q[1].0].value.data(),
                    &cache[dir],
                    dir == 1,
                    g,
                    dir * dims.h,
                    &mut dx,
                );
                for (v, gr) in q.iter().zip(grads) {
                    accumulate(nodes, *v, gr);
                }
            }
            accumulate(nodes, *x, dx);
        }
        Op::Linear { x, w, b } => {
            let xs = nodes[x.0].value.shape();
            let (n, din) = (xs[0], xs[1]);
            let dout = nodes[w.0].value.shape()[0];
            if needs(nodes, *x) {
                let mut dx = vec![T::zero(); n * din];
                matmul(false, false, n, din, dout, g, nodes[w.0].value.data(), T::zero(), &mut dx);
                accumulate(nodes, *x, dx);
            }
            if needs(nodes, *w) {
                let mut dw = vec![T::zero(); dout * din];
                matmul(true, false, dout, din, n, g, nodes[x.0].value.data(), T::zero(), &mut dw);
                accumulate(nodes, *w, dw);
            }
            let mut db = vec![T::zero(); dout];
            for row in g.chunks(dout.max(1)) {
                db.iter_mut().zip(row).for_each(|(d, &gg)| *d += gg);
            }
            accumulate(nodes, *b, db);
        }
        Op::Concat { a, b } => {
            let da = nodes[a.0].value.shape()[1];
            let db = nodes[b.0].value.shape()[1];
            let n = out.shape()[0];
            let mut ga = Vec::with_capacity(n * da);
            let mut gb = Vec::with_capacity(n * db);
            for row in g.chunks((da + db).max(1)).take(n) {
                ga.extend_from_slice(&row[..da]);
                gb.extend_from_slice(&row[da..]);
            }
            accumulate(nodes, *a, ga);
            accumulate(nodes, *b, gb);
        }
        Op::L1 { pred, target } => {
            let n = nodes[pred.0].value.shape()[0];
            let scale = g[0] / T::of(n as f64);
            let dp = nodes[pred.0]
                .value
                .data()
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    let d = p - t;
                    if d > T::zero() {
                        scale
                    } else if d < T::zero() {
                        -scale
                    } else {
                        T::zero()
                    }
                })
                .collect();
            accumulate(nodes, *pred, dp);
        }
        Op::WeightedSum { x, weights } => {
            let dx = weights.iter().map(|&w| w * g[0]).collect();
            accumulate(nodes, *x, dx);
        }
    }
}
