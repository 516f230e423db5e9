//! Forward pass and exact reverse-mode gradients of the decoder.
//!
//! Activations are kept as `(batch * seq) x width` row-major matrices so
//! that every projection is a single GEMM; attention runs per sequence and
//! head on strided views. Softmax, RMSNorm and loss reductions accumulate in
//! `f64` regardless of the element type.

use alloc::vec;
use alloc::vec::Vec;

use super::{Gates, LayerParams, ModelConfig, ParameterSet};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Matrix, Scalar, View, ViewMut};

/// RoPE base frequency.
pub const ROPE_BASE: f64 = 10_000.0;

/// Row-wise RMSNorm with gain. Returns the normalized matrix and the per-row
/// inverse RMS values.
///
/// There is no epsilon: a row is divided by its exact root mean square, so
/// appending zero coordinates rescales the output by exactly `sqrt(D / d)`.
/// An all-zero row maps to zero.
pub fn rms_norm<T: Scalar>(x: &Matrix<T>, gain: &[T]) -> (Matrix<T>, Vec<f64>) {
    let d = x.cols();
    let mut out = Matrix::zeros(x.rows(), d);
    let mut inv = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let ms = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / d as f64;
        let s = if ms > 0.0 { 1.0 / libm::sqrt(ms) } else { 0.0 };
        inv.push(s);
        for (o, (&v, &g)) in out.row_mut(r).iter_mut().zip(row.iter().zip(gain)) {
            *o = T::lift(v.as_f64() * s * g.as_f64());
        }
    }
    (out, inv)
}

fn rms_norm_backward<T: Scalar>(
    x: &Matrix<T>,
    inv: &[f64],
    gain: &[T],
    dy: &Matrix<T>,
    dgain: &mut [T],
    dx: &mut Matrix<T>,
) {
    let d = x.cols();
    let mut dg = vec![0.0f64; d];
    for r in 0..x.rows() {
        let (xr, dyr) = (x.row(r), dy.row(r));
        let s = inv[r];
        let mut dot = 0.0f64;
        for i in 0..d {
            let gi = dyr[i].as_f64() * gain[i].as_f64();
            dot += gi * xr[i].as_f64();
            dg[i] += dyr[i].as_f64() * xr[i].as_f64() * s;
        }
        let coef = s * s * s * dot / d as f64;
        let dxr = dx.row_mut(r);
        for i in 0..d {
            let gi = dyr[i].as_f64() * gain[i].as_f64();
            dxr[i] = dxr[i] + T::lift(s * gi - coef * xr[i].as_f64());
        }
    }
    for (a, b) in dgain.iter_mut().zip(dg) {
        *a = *a + T::lift(b);
    }
}

/// Rotary tables for `seq_len` positions, half-split pairing within a head.
struct Rope<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> Rope<T> {
    fn new(seq_len: usize, head_dim: usize) -> Self {
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(seq_len * half);
        let mut sin = Vec::with_capacity(seq_len * half);
        for pos in 0..seq_len {
            for i in 0..half {
                let theta = libm::pow(ROPE_BASE, -2.0 * i as f64 / head_dim as f64);
                let angle = pos as f64 * theta;
                cos.push(T::lift(libm::cos(angle)));
                sin.push(T::lift(libm::sin(angle)));
            }
        }
        Rope { half, cos, sin }
    }

    /// Rotates every head of every row in place; `inverse` applies the
    /// transpose rotation (used to pull gradients back).
    fn apply(&self, m: &mut Matrix<T>, seq_len: usize, head_dim: usize, inverse: bool) {
        let half = self.half;
        if half == 0 {
            return;
        }
        let heads = m.cols() / head_dim;
        for r in 0..m.rows() {
            let pos = r % seq_len;
            let (cs, sn) = (&self.cos[pos * half..(pos + 1) * half], &self.sin[pos * half..(pos + 1) * half]);
            let row = m.row_mut(r);
            for h in 0..heads {
                let base = h * head_dim;
                for i in 0..half {
                    let a = row[base + i];
                    let b = row[base + i + half];
                    let (c, s) = (cs[i], if inverse { -sn[i] } else { sn[i] });
                    row[base + i] = a * c - b * s;
                    row[base + i + half] = a * s + b * c;
                }
            }
        }
    }
}

/// Multiplies columns `start..` of `m` by `gate`.
fn gate_cols<T: Scalar>(m: &mut Matrix<T>, start: usize, gate: T) {
    if start >= m.cols() || gate == T::one() {
        return;
    }
    for r in 0..m.rows() {
        for v in &mut m.row_mut(r)[start..] {
            *v = *v * gate;
        }
    }
}

fn scale<T: Scalar>(m: &mut Matrix<T>, s: T) {
    if s != T::one() {
        m.as_mut_slice().iter_mut().for_each(|v| *v = *v * s);
    }
}

/// `x W^T` for a weight stored `out x in`.
fn linear<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(x.rows(), w.rows());
    gemm(T::one(), x.view(), w.t(), T::zero(), out.view_mut());
    out
}

/// Accumulates `dW += dy^T x` and `dx (+)= dy W`.
fn linear_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    dy: &Matrix<T>,
    dw: &mut Matrix<T>,
    dx: &mut Matrix<T>,
    accumulate_dx: bool,
) {
    gemm(T::one(), dy.t(), x.view(), T::one(), dw.view_mut());
    let beta = if accumulate_dx { T::one() } else { T::zero() };
    gemm(T::one(), dy.view(), w.view(), beta, dx.view_mut());
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Gate values seen by one layer.
#[derive(Clone, Copy)]
struct LayerGates<T> {
    base_d_model: usize,
    base_d_ffn: usize,
    width: T,
    block: T,
}

impl<T: Scalar> LayerGates<T> {
    fn open(config: &ModelConfig) -> Self {
        LayerGates { base_d_model: config.d_model, base_d_ffn: config.d_ffn, width: T::one(), block: T::one() }
    }

    fn from(gates: Option<&Gates<T>>, layer: usize, config: &ModelConfig) -> Self {
        match gates {
            None => Self::open(config),
            Some(g) => LayerGates {
                base_d_model: g.base_d_model,
                base_d_ffn: g.base_d_ffn,
                width: g.width[layer],
                block: g.block[layer].unwrap_or(T::one()),
            },
        }
    }
}

struct LayerCache<T> {
    x_in: Matrix<T>,
    n1: Matrix<T>,
    inv1: Vec<f64>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    probs: Vec<T>,
    cat: Matrix<T>,
    x_mid: Matrix<T>,
    n2: Matrix<T>,
    inv2: Vec<f64>,
    u: Matrix<T>,
    gt: Matrix<T>,
    h: Matrix<T>,
}

struct Shape {
    batch: usize,
    seq: usize,
}

fn layer_forward<T: Scalar>(
    lp: &LayerParams<T>,
    config: &ModelConfig,
    gates: LayerGates<T>,
    rope: &Rope<T>,
    shape: &Shape,
    x: Matrix<T>,
) -> (Matrix<T>, LayerCache<T>) {
    let (d, hd, nh) = (config.d_model, config.head_dim, config.n_heads);
    let t = shape.seq;
    let (n1, inv1) = rms_norm(&x, &lp.norm_attn);
    let mut q = linear(&n1, &lp.wq);
    let mut k = linear(&n1, &lp.wk);
    let mut v = linear(&n1, &lp.wv);
    gate_cols(&mut q, gates.base_d_model, gates.width);
    gate_cols(&mut k, gates.base_d_model, gates.width);
    gate_cols(&mut v, gates.base_d_model, gates.width);
    rope.apply(&mut q, t, hd, false);
    rope.apply(&mut k, t, hd, false);

    let scale_f = T::lift(1.0 / libm::sqrt(hd as f64));
    let mut probs = vec![T::zero(); shape.batch * nh * t * t];
    let mut cat = Matrix::zeros(x.rows(), d);
    let mut scores = Matrix::zeros(t, t);
    for b in 0..shape.batch {
        for h in 0..nh {
            let off = b * t * d + h * hd;
            let qh = View::new(q.as_slice(), off, t, hd, d, 1);
            let kh = View::new(k.as_slice(), off, t, hd, d, 1);
            gemm(scale_f, qh, kh.t(), T::zero(), scores.view_mut());
            let p_off = (b * nh + h) * t * t;
            let p = &mut probs[p_off..p_off + t * t];
            for i in 0..t {
                let row = &scores.row(i)[..=i];
                let mx = row.iter().fold(T::neg_infinity(), |a, &s| a.max(s));
                let mut sum = 0.0f64;
                let prow = &mut p[i * t..(i + 1) * t];
                for (j, &s) in row.iter().enumerate() {
                    let e = (s - mx).exp();
                    prow[j] = e;
                    sum += e.as_f64();
                }
                let inv = T::lift(1.0 / sum);
                prow[..=i].iter_mut().for_each(|e| *e = *e * inv);
            }
            let ph = View::new(&probs[p_off..p_off + t * t], 0, t, t, t, 1);
            let vh = View::new(v.as_slice(), off, t, hd, d, 1);
            gemm(T::one(), ph, vh, T::zero(), ViewMut::new(cat.as_mut_slice(), off, t, hd, d, 1));
        }
    }
    let mut a = linear(&cat, &lp.wo);
    gate_cols(&mut a, gates.base_d_model, gates.width);
    scale(&mut a, gates.block);
    let mut x_mid = x.clone();
    x_mid.as_mut_slice().iter_mut().zip(a.as_slice()).for_each(|(o, &ai)| *o = *o + ai);

    let (n2, inv2) = rms_norm(&x_mid, &lp.norm_ffn);
    let mut u = linear(&n2, &lp.w_up);
    let mut gt = linear(&n2, &lp.w_gate);
    gate_cols(&mut u, gates.base_d_ffn, gates.width);
    gate_cols(&mut gt, gates.base_d_ffn, gates.width);
    let mut hmat = Matrix::zeros(u.rows(), u.cols());
    for ((hv, &uv), &gv) in hmat.as_mut_slice().iter_mut().zip(u.as_slice()).zip(gt.as_slice()) {
        let uf = uv.as_f64();
        *hv = gv * T::lift(uf * sigmoid(uf));
    }
    let mut m = linear(&hmat, &lp.w_down);
    gate_cols(&mut m, gates.base_d_model, gates.width);
    scale(&mut m, gates.block);
    let mut out = x_mid.clone();
    out.as_mut_slice().iter_mut().zip(m.as_slice()).for_each(|(o, &mi)| *o = *o + mi);

    let cache = LayerCache { x_in: x, n1, inv1, q, k, v, probs, cat, x_mid, n2, inv2, u, gt, h: hmat };
    (out, cache)
}

/// Pulls `dout` (gradient w.r.t. the layer output) back through one layer,
/// accumulating parameter gradients into `g` and returning `d x_in`.
fn layer_backward<T: Scalar>(
    lp: &LayerParams<T>,
    config: &ModelConfig,
    gates: LayerGates<T>,
    rope: &Rope<T>,
    shape: &Shape,
    c: &LayerCache<T>,
    dout: Matrix<T>,
    g: &mut LayerParams<T>,
) -> Matrix<T> {
    let (d, hd, nh) = (config.d_model, config.head_dim, config.n_heads);
    let t = shape.seq;
    let rows = dout.rows();

    // SwiGLU branch.
    let mut dm = dout.clone();
    scale(&mut dm, gates.block);
    gate_cols(&mut dm, gates.base_d_model, gates.width);
    let mut dh = Matrix::zeros(rows, config.d_ffn);
    linear_backward(&c.h, &lp.w_down, &dm, &mut g.w_down, &mut dh, false);
    let mut du = Matrix::zeros(rows, config.d_ffn);
    let mut dgt = Matrix::zeros(rows, config.d_ffn);
    for i in 0..dh.as_slice().len() {
        let uf = c.u.as_slice()[i].as_f64();
        let sg = sigmoid(uf);
        let dhv = dh.as_slice()[i].as_f64();
        dgt.as_mut_slice()[i] = T::lift(dhv * uf * sg);
        du.as_mut_slice()[i] = T::lift(dhv * c.gt.as_slice()[i].as_f64() * sg * (1.0 + uf * (1.0 - sg)));
    }
    gate_cols(&mut du, gates.base_d_ffn, gates.width);
    gate_cols(&mut dgt, gates.base_d_ffn, gates.width);
    let mut dn2 = Matrix::zeros(rows, d);
    linear_backward(&c.n2, &lp.w_up, &du, &mut g.w_up, &mut dn2, false);
    linear_backward(&c.n2, &lp.w_gate, &dgt, &mut g.w_gate, &mut dn2, true);
    let mut dx_mid = dout;
    rms_norm_backward(&c.x_mid, &c.inv2, &lp.norm_ffn, &dn2, &mut g.norm_ffn, &mut dx_mid);

    // Attention branch.
    let mut da = dx_mid.clone();
    scale(&mut da, gates.block);
    gate_cols(&mut da, gates.base_d_model, gates.width);
    let mut dcat = Matrix::zeros(rows, d);
    linear_backward(&c.cat, &lp.wo, &da, &mut g.wo, &mut dcat, false);

    let scale_f = T::lift(1.0 / libm::sqrt(hd as f64));
    let mut dq = Matrix::zeros(rows, d);
    let mut dk = Matrix::zeros(rows, d);
    let mut dv = Matrix::zeros(rows, d);
    let mut dp = Matrix::zeros(t, t);
    for b in 0..shape.batch {
        for h in 0..nh {
            let off = b * t * d + h * hd;
            let p_off = (b * nh + h) * t * t;
            let p = &c.probs[p_off..p_off + t * t];
            let ph = View::new(p, 0, t, t, t, 1);
            let doh = View::new(dcat.as_slice(), off, t, hd, d, 1);
            let vh = View::new(c.v.as_slice(), off, t, hd, d, 1);
            gemm(T::one(), doh, vh.t(), T::zero(), dp.view_mut());
            gemm(T::one(), ph.t(), doh, T::zero(), ViewMut::new(dv.as_mut_slice(), off, t, hd, d, 1));
            // dS = P * (dP - rowsum(P * dP)), written over dP.
            for i in 0..t {
                let prow = &p[i * t..(i + 1) * t];
                let drow = dp.row_mut(i);
                let dot: f64 = (0..=i).map(|j| prow[j].as_f64() * drow[j].as_f64()).sum();
                let dot_t = T::lift(dot);
                for j in 0..=i {
                    drow[j] = prow[j] * (drow[j] - dot_t);
                }
                drow[i + 1..].iter_mut().for_each(|x| *x = T::zero());
            }
            let qh = View::new(c.q.as_slice(), off, t, hd, d, 1);
            let kh = View::new(c.k.as_slice(), off, t, hd, d, 1);
            gemm(scale_f, dp.view(), kh, T::zero(), ViewMut::new(dq.as_mut_slice(), off, t, hd, d, 1));
            gemm(scale_f, dp.t(), qh, T::zero(), ViewMut::new(dk.as_mut_slice(), off, t, hd, d, 1));
        }
    }
    rope.apply(&mut dq, t, hd, true);
    rope.apply(&mut dk, t, hd, true);
    gate_cols(&mut dq, gates.base_d_model, gates.width);
    gate_cols(&mut dk, gates.base_d_model, gates.width);
    gate_cols(&mut dv, gates.base_d_model, gates.width);
    let mut dn1 = Matrix::zeros(rows, d);
    linear_backward(&c.n1, &lp.wq, &dq, &mut g.wq, &mut dn1, false);
    linear_backward(&c.n1, &lp.wk, &dk, &mut g.wk, &mut dn1, true);
    linear_backward(&c.n1, &lp.wv, &dv, &mut g.wv, &mut dn1, true);
    let mut dx = dx_mid;
    rms_norm_backward(&c.x_in, &c.inv1, &lp.norm_attn, &dn1, &mut g.norm_attn, &mut dx);
    dx
}

fn check_input<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    tokens: &[u32],
    seq_len: usize,
) -> Result<()> {
    params.check_shapes(config)?;
    if seq_len == 0 {
        return Err(Error::input("sequence length must be at least 1"));
    }
    if seq_len > config.max_seq_len {
        return Err(Error::SequenceTooLong { len: seq_len, max: config.max_seq_len });
    }
    if tokens.len() % seq_len != 0 {
        return Err(Error::LengthMismatch { expected: seq_len * (tokens.len() / seq_len + 1), actual: tokens.len() });
    }
    if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t as usize >= config.vocab_size) {
        return Err(Error::TokenOutOfRange { token, position, vocab: config.vocab_size });
    }
    Ok(())
}

struct Trace<T> {
    layers: Vec<LayerCache<T>>,
    x_final: Matrix<T>,
    inv_final: Vec<f64>,
    n_final: Matrix<T>,
}

fn run_forward<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    tokens: &[u32],
    seq_len: usize,
    keep: bool,
) -> (Matrix<T>, Option<Trace<T>>) {
    let shape = Shape { batch: tokens.len() / seq_len, seq: seq_len };
    let rope = Rope::new(seq_len, config.head_dim);
    let d = config.d_model;
    let mut x = Matrix::zeros(tokens.len(), d);
    for (r, &tok) in tokens.iter().enumerate() {
        x.row_mut(r).copy_from_slice(params.embedding.row(tok as usize));
    }
    if let Some(g) = &params.gates {
        gate_cols(&mut x, g.base_d_model, g.embed);
    }
    let mut caches = Vec::new();
    for (i, lp) in params.layers.iter().enumerate() {
        let gates = LayerGates::from(params.gates.as_ref(), i, config);
        let (next, cache) = layer_forward(lp, config, gates, &rope, &shape, x);
        if keep {
            caches.push(cache);
        }
        x = next;
    }
    let (n_final, inv_final) = rms_norm(&x, &params.norm_final);
    let logits = linear(&n_final, &params.head);
    let trace = keep.then_some(Trace { layers: caches, x_final: x, inv_final, n_final });
    (logits, trace)
}

/// Logits (`seq_len x V`) for a single sequence.
pub fn forward<T: Scalar>(params: &ParameterSet<T>, config: &ModelConfig, tokens: &[u32]) -> Result<Matrix<T>> {
    forward_batch(params, config, tokens, tokens.len())
}

/// Logits for `tokens.len() / seq_len` equal-length sequences laid end to
/// end; row `b * seq_len + i` belongs to position `i` of sequence `b`.
pub fn forward_batch<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    tokens: &[u32],
    seq_len: usize,
) -> Result<Matrix<T>> {
    check_input(params, config, tokens, seq_len)?;
    Ok(run_forward(params, config, tokens, seq_len, false).0)
}

/// Cross-entropy of one logit row against `target`, in nats.
fn row_loss<T: Scalar>(row: &[T], target: usize) -> (f64, f64, f64) {
    let mx = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
    let sum: f64 = row.iter().map(|v| libm::exp(v.as_f64() - mx)).sum();
    let lse = mx + libm::log(sum);
    (lse - row[target].as_f64(), mx, sum)
}

/// Mean next-token cross-entropy `-log softmax(logits)[target]` over rows.
pub fn lm_loss<T: Scalar>(logits: &Matrix<T>, targets: &[u32]) -> Result<f64> {
    if logits.rows() != targets.len() {
        return Err(Error::LengthMismatch { expected: logits.rows(), actual: targets.len() });
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t as usize >= logits.cols() {
            return Err(Error::TokenOutOfRange { token: t, position: r, vocab: logits.cols() });
        }
        total += row_loss(logits.row(r), t as usize).0;
    }
    Ok(if targets.is_empty() { 0.0 } else { total / targets.len() as f64 })
}

/// Loss and gradients for a single sequence.
pub fn backward<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    tokens: &[u32],
    targets: &[u32],
) -> Result<(f64, ParameterSet<T>)> {
    let mut grads = params.zeros_like();
    let n = targets.len();
    let sum =
        accumulate_gradients(params, config, tokens, targets, tokens.len(), None, 1.0 / n.max(1) as f64, &mut grads)?;
    Ok((if n == 0 { 0.0 } else { sum / n as f64 }, grads))
}

/// Batched loss/gradient with an optional per-position loss mask.
///
/// Each position contributes `loss_scale * CE` to the differentiated
/// objective; gradients are added into `grads` (which must be shaped like
/// `params`). Returns the unscaled sum of per-position losses over unmasked
/// positions.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_gradients<T: Scalar>(
    params: &ParameterSet<T>,
    config: &ModelConfig,
    tokens: &[u32],
    targets: &[u32],
    seq_len: usize,
    mask: Option<&[bool]>,
    loss_scale: f64,
    grads: &mut ParameterSet<T>,
) -> Result<f64> {
    check_input(params, config, tokens, seq_len)?;
    if targets.len() != tokens.len() {
        return Err(Error::LengthMismatch { expected: tokens.len(), actual: targets.len() });
    }
    if let Some(m) = mask {
        if m.len() != tokens.len() {
            return Err(Error::LengthMismatch { expected: tokens.len(), actual: m.len() });
        }
    }
    if let Some((position, &token)) = targets.iter().enumerate().find(|(_, &t)| t as usize >= config.vocab_size) {
        return Err(Error::TokenOutOfRange { token, position, vocab: config.vocab_size });
    }
    let (logits, trace) = run_forward(params, config, tokens, seq_len, true);
    let trace = trace.expect("trace requested");
    let shape = Shape { batch: tokens.len() / seq_len, seq: seq_len };
    let rope = Rope::new(seq_len, config.head_dim);

    let mut total = 0.0;
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        if mask.is_some_and(|m| !m[r]) {
            continue;
        }
        let row = logits.row(r);
        let target = targets[r] as usize;
        let (l, mx, sum) = row_loss(row, target);
        total += l;
        let drow = dlogits.row_mut(r);
        for (j, (dv, v)) in drow.iter_mut().zip(row).enumerate() {
            let p = libm::exp(v.as_f64() - mx) / sum;
            let onehot = if j == target { 1.0 } else { 0.0 };
            *dv = T::lift((p - onehot) * loss_scale);
        }
    }

    let mut dn = Matrix::zeros(logits.rows(), config.d_model);
    linear_backward(&trace.n_final, &params.head, &dlogits, &mut grads.head, &mut dn, false);
    let mut dx = Matrix::zeros(logits.rows(), config.d_model);
    rms_norm_backward(&trace.x_final, &trace.inv_final, &params.norm_final, &dn, &mut grads.norm_final, &mut dx);
    for (i, cache) in trace.layers.iter().enumerate().rev() {
        let gates = LayerGates::from(params.gates.as_ref(), i, config);
        dx = layer_backward(&params.layers[i], config, gates, &rope, &shape, cache, dx, &mut grads.layers[i]);
    }
    if let Some(g) = &params.gates {
        gate_cols(&mut dx, g.base_d_model, g.embed);
    }
    for (r, &tok) in tokens.iter().enumerate() {
        let grow = grads.embedding.row_mut(tok as usize);
        for (gv, &dv) in grow.iter_mut().zip(dx.row(r)) {
            *gv = *gv + dv;
        }
    }
    Ok(total)
}
