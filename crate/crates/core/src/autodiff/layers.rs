//! Per-kind forward, pushforward and pullback rules.
//!
//! Every layer maps a flat row-major vector to a flat row-major vector.
//! Token-structured layers interpret their buffers as `tokens × width`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::rng::normal;
use crate::tensor::{add_matmul_at, axpy, matmul, matmul_bt, zeros, Tensor};

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

/// Result of a reverse pass: primal output, input cotangent and, when
/// requested, parameter cotangents in declaration order.
#[derive(Debug, Clone)]
pub struct Pullback {
    pub output: Vec<f64>,
    pub input: Vec<f64>,
    pub params: Vec<Vec<f64>>,
}

pub(crate) trait Kernel {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn jvp(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>);
    fn backward(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback;
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

fn uniform_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.random_range(-bound..bound);
    }
    t
}

fn normal_tensor<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = std * normal(rng);
    }
    t
}

fn column_sums(g: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = zeros(cols);
    for r in 0..rows {
        axpy(&mut out, 1.0, &g[r * cols..(r + 1) * cols]);
    }
    out
}

// ---------------------------------------------------------------------------
// Dense

/// Affine map followed by an activation, applied independently to each of
/// `tokens` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub tokens: usize,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Self {
        Dense {
            weight,
            bias,
            activation,
            tokens: 1,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize, activation: Activation) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Dense {
            weight: uniform_tensor(rng, &[output, input], bound),
            bias: uniform_tensor(rng, &[output], bound),
            activation,
            tokens: 1,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        let (i, o) = (self.in_features(), self.out_features());
        let mut pre = matmul_bt(x, self.weight.data(), self.tokens, i, o);
        for row in pre.chunks_mut(o) {
            axpy(row, 1.0, self.bias.data());
        }
        pre
    }
}

impl Kernel for Dense {
    fn input_dim(&self) -> usize {
        self.tokens * self.in_features()
    }

    fn output_dim(&self) -> usize {
        self.tokens * self.out_features()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.preactivation(x);
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        y
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (i, o) = (self.in_features(), self.out_features());
        let pre = self.preactivation(x);
        let mut t = matmul_bt(v, self.weight.data(), self.tokens, i, o);
        let mut y = pre;
        for (yv, tv) in y.iter_mut().zip(t.iter_mut()) {
            *tv *= self.activation.derivative(*yv);
            *yv = self.activation.apply(*yv);
        }
        (y, t)
    }

    fn backward(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback {
        let (i, o) = (self.in_features(), self.out_features());
        let pre = self.preactivation(x);
        let mut gpre = zeros(pre.len());
        let mut y = zeros(pre.len());
        for k in 0..pre.len() {
            gpre[k] = u[k] * self.activation.derivative(pre[k]);
            y[k] = self.activation.apply(pre[k]);
        }
        let gx = matmul(&gpre, self.weight.data(), self.tokens, o, i);
        let params = if with_params {
            let mut gw = zeros(o * i);
            add_matmul_at(&mut gw, &gpre, x, self.tokens, o, i);
            vec![gw, column_sums(&gpre, self.tokens, o)]
        } else {
            Vec::new()
        };
        Pullback {
            output: y,
            input: gx,
            params,
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------
// Residual

/// `x + inner(x)`; the inner dense map must be square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub inner: Dense,
}

impl Kernel for Residual {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.inner.forward(x);
        axpy(&mut y, 1.0, x);
        y
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut y, mut t) = self.inner.jvp(x, v);
        axpy(&mut y, 1.0, x);
        axpy(&mut t, 1.0, v);
        (y, t)
    }

    fn backward(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback {
        let mut pb = self.inner.backward(x, u, with_params);
        axpy(&mut pb.output, 1.0, x);
        axpy(&mut pb.input, 1.0, u);
        pb
    }

    fn params(&self) -> Vec<&Tensor> {
        self.inner.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.inner.params_mut()
    }
}

// ---------------------------------------------------------------------------
// Layer norm

/// Per-token normalisation with learned gain and shift; epsilon 1e-5 inside
/// the square root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub tokens: usize,
}

impl LayerNorm {
    pub fn new(width: usize, tokens: usize) -> Self {
        LayerNorm {
            gamma: Tensor::vector(vec![1.0; width]),
            beta: Tensor::vector(vec![0.0; width]),
            tokens,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Normalised rows `x̂` and per-row inverse standard deviations.
    fn normalise(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = self.width();
        let mut xhat = zeros(x.len());
        let mut rstd = zeros(self.tokens);
        for t in 0..self.tokens {
            let row = &x[t * w..(t + 1) * w];
            let mean = row.iter().sum::<f64>() / w as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[t] = r;
            for (o, v) in xhat[t * w..(t + 1) * w].iter_mut().zip(row) {
                *o = (v - mean) * r;
            }
        }
        (xhat, rstd)
    }

    fn affine(&self, xhat: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut y = zeros(xhat.len());
        for (k, (o, xh)) in y.iter_mut().zip(xhat).enumerate() {
            let j = k % w;
            *o = self.gamma.data()[j] * xh + self.beta.data()[j];
        }
        y
    }

    /// Shared by pushforward and pullback: `r (g − mean(g) − x̂ · mean(g ⊙ x̂))`.
    fn project(&self, xhat: &[f64], rstd: &[f64], g: &[f64]) -> Vec<f64> {
        let w = self.width();
        let mut out = zeros(g.len());
        for t in 0..self.tokens {
            let gr = &g[t * w..(t + 1) * w];
            let xr = &xhat[t * w..(t + 1) * w];
            let mg = gr.iter().sum::<f64>() / w as f64;
            let mgx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / w as f64;
            for j in 0..w {
                out[t * w + j] = rstd[t] * (gr[j] - mg - xr[j] * mgx);
            }
        }
        out
    }
}

impl Kernel for LayerNorm {
    fn input_dim(&self) -> usize {
        self.tokens * self.width()
    }

    fn output_dim(&self) -> usize {
        self.input_dim()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (xhat, _) = self.normalise(x);
        self.affine(&xhat)
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (xhat, rstd) = self.normalise(x);
        let mut t = self.project(&xhat, &rstd, v);
        let w = self.width();
        for (k, tv) in t.iter_mut().enumerate() {
            *tv *= self.gamma.data()[k % w];
        }
        (self.affine(&xhat), t)
    }

    fn backward(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback {
        let w = self.width();
        let (xhat, rstd) = self.normalise(x);
        let mut gxhat = zeros(u.len());
        for (k, g) in gxhat.iter_mut().enumerate() {
            *g = u[k] * self.gamma.data()[k % w];
        }
        let gx = self.project(&xhat, &rstd, &gxhat);
        let params = if with_params {
            let mut gg = zeros(w);
            let mut gb = zeros(w);
            for k in 0..u.len() {
                gg[k % w] += u[k] * xhat[k];
                gb[k % w] += u[k];
            }
            vec![gg, gb]
        } else {
            Vec::new()
        };
        Pullback {
            output: self.affine(&xhat),
            input: gx,
            params,
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

// ---------------------------------------------------------------------------
// Token embedding

/// Splits the input into `tokens` chunks of `token_dim` features, embeds
/// each linearly, prepends a learned pooled-slot row (index 0) and adds
/// learned positional embeddings. Output is `(tokens + 1) × width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub weight: Tensor,
    pub bias: Tensor,
    pub slot: Tensor,
    pub positional: Tensor,
    pub tokens: usize,
}

impl Embedding {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, tokens: usize, token_dim: usize, width: usize) -> Self {
        let bound = 1.0 / (token_dim as f64).sqrt();
        Embedding {
            weight: uniform_tensor(rng, &[width, token_dim], bound),
            bias: uniform_tensor(rng, &[width], bound),
            slot: normal_tensor(rng, &[width], 0.02),
            positional: normal_tensor(rng, &[tokens + 1, width], 0.02),
            tokens,
        }
    }

    pub fn width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn token_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

impl Kernel for Embedding {
    fn input_dim(&self) -> usize {
        self.tokens * self.token_dim()
    }

    fn output_dim(&self) -> usize {
        (self.tokens + 1) * self.width()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (w, k) = (self.width(), self.token_dim());
        let mut y = zeros(self.output_dim());
        y[..w].copy_from_slice(self.slot.data());
        let emb = matmul_bt(x, self.weight.data(), self.tokens, k, w);
        for t in 0..self.tokens {
            let row = &mut y[(t + 1) * w..(t + 2) * w];
            row.copy_from_slice(&emb[t * w..(t + 1) * w]);
            axpy(row, 1.0, self.bias.data());
        }
        axpy(&mut y, 1.0, self.positional.data());
        y
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (w, k) = (self.width(), self.token_dim());
        let mut t = zeros(self.output_dim());
        let dv = matmul_bt(v, self.weight.data(), self.tokens, k, w);
        t[w..].copy_from_slice(&dv);
        (self.forward(x), t)
    }

    fn backward(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback {
        let (w, k) = (self.width(), self.token_dim());
        let gtok = &u[w..];
        let gx = matmul(gtok, self.weight.data(), self.tokens, w, k);
        let params = if with_params {
            let mut gw = zeros(w * k);
            add_matmul_at(&mut gw, gtok, x, self.tokens, w, k);
            vec![gw, column_sums(gtok, self.tokens, w), u[..w].to_vec(), u.to_vec()]
        } else {
            Vec::new()
        };
        Pullback {
            output: self.forward(x),
            input: gx,
            params,
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias, &self.slot, &self.positional]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias, &mut self.slot, &mut self.positional]
    }
}

// ---------------------------------------------------------------------------
// Encoder block

/// Pre-norm single-head self-attention block with a GELU feed-forward
/// sublayer, both wrapped in residual connections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2: LayerNorm,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub tokens: usize,
}

struct EncoderCache {
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    o: Vec<f64>,
    y1: Vec<f64>,
    b: Vec<f64>,
    pre: Vec<f64>,
    hid: Vec<f64>,
    y: Vec<f64>,
}

impl EncoderBlock {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, tokens: usize, width: usize, hidden: usize) -> Self {
        let bw = 1.0 / (width as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        EncoderBlock {
            ln1: LayerNorm::new(width, tokens),
            wq: uniform_tensor(rng, &[width, width], bw),
            bq: uniform_tensor(rng, &[width], bw),
            wk: uniform_tensor(rng, &[width, width], bw),
            bk: uniform_tensor(rng, &[width], bw),
            wv: uniform_tensor(rng, &[width, width], bw),
            bv: uniform_tensor(rng, &[width], bw),
            wo: uniform_tensor(rng, &[width, width], bw),
            bo: uniform_tensor(rng, &[width], bw),
            ln2: LayerNorm::new(width, tokens),
            w1: uniform_tensor(rng, &[hidden, width], bw),
            b1: uniform_tensor(rng, &[hidden], bw),
            w2: uniform_tensor(rng, &[width, hidden], bh),
            b2: uniform_tensor(rng, &[width], bh),
            tokens,
        }
    }

    pub fn width(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    fn scale(&self) -> f64 {
        1.0 / (self.width() as f64).sqrt()
    }

    fn affine_rows(&self, x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (o, i) = (w.shape()[0], w.shape()[1]);
        let mut y = matmul_bt(x, w.data(), self.tokens, i, o);
        for row in y.chunks_mut(o) {
            axpy(row, 1.0, b.data());
        }
        y
    }

    fn run(&self, x: &[f64]) -> EncoderCache {
        let (t, w) = (self.tokens, self.width());
        let a = self.ln1.forward(x);
        let q = self.affine_rows(&a, &self.wq, &self.bq);
        let k = self.affine_rows(&a, &self.wk, &self.bk);
        let v = self.affine_rows(&a, &self.wv, &self.bv);
        let mut p = matmul_bt(&q, &k, t, w, t);
        let c = self.scale();
        for row in p.chunks_mut(t) {
            for s in row.iter_mut() {
                *s *= c;
            }
            softmax_in_place(row);
        }
        let o = matmul(&p, &v, t, t, w);
        let mut y1 = self.affine_rows(&o, &self.wo, &self.bo);
        axpy(&mut y1, 1.0, x);
        let b = self.ln2.forward(&y1);
        let pre = self.affine_rows(&b, &self.w1, &self.b1);
        let mut hid = zeros(pre.len());
        for (h, z) in hid.iter_mut().zip(&pre) {
            *h = Activation::Gelu.apply(*z);
        }
        let mut y = self.affine_rows(&hid, &self.w2, &self.b2);
        axpy(&mut y, 1.0, &y1);
        EncoderCache {
            a,
            q,
            k,
            v,
            p,
            o,
            y1,
            b,
            pre,
            hid,
            y,
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

/// Row-wise softmax Jacobian applied to `g`: `p ⊙ (g − rowsum(p ⊙ g))`.
fn softmax_rows_apply(p: &[f64], g: &[f64], n: usize) -> Vec<f64> {
    let mut out = zeros(g.len());
    for r in 0..p.len() / n {
        let pr = &p[r * n..(r + 1) * n];
        let gr = &g[r * n..(r + 1) * n];
        let inner: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..n {
            out[r * n + j] = pr[j] * (gr[j] - inner);
        }
    }
    out
}

impl Kernel for EncoderBlock {
    fn input_dim(&self) -> usize {
        self.tokens * self.width()
    }

    fn output_dim(&self) -> usize {
        self.input_dim()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).y
    }

    fn jvp(&self, x: &[f64], dx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (t, w, h) = (self.tokens, self.width(), self.hidden());
        let c = self.run(x);
        let (_, da) = self.ln1.jvp(x, dx);
        let dq = matmul_bt(&da, self.wq.data(), t, w, w);
        let dk = matmul_bt(&da, self.wk.data(), t, w, w);
        let dv = matmul_bt(&da, self.wv.data(), t, w, w);
        let mut ds = matmul_bt(&dq, &c.k, t, w, t);
        let qdk = matmul_bt(&c.q, &dk, t, w, t);
        let scale = self.scale();
        for (s, e) in ds.iter_mut().zip(&qdk) {
            *s = scale * (*s + e);
        }
        let dp = softmax_rows_apply(&c.p, &ds, t);
        let mut d_o = matmul(&dp, &c.v, t, t, w);
        let pdv = matmul(&c.p, &dv, t, t, w);
        axpy(&mut d_o, 1.0, &pdv);
        let mut dy1 = matmul_bt(&d_o, self.wo.data(), t, w, w);
        axpy(&mut dy1, 1.0, dx);
        let (_, db) = self.ln2.jvp(&c.y1, &dy1);
        let mut dhid = matmul_bt(&db, self.w1.data(), t, w, h);
        for (d, z) in dhid.iter_mut().zip(&c.pre) {
            *d *= Activation::Gelu.derivative(*z);
        }
        let mut dy = matmul_bt(&dhid, self.w2.data(), t, h, w);
        axpy(&mut dy, 1.0, &dy1);
        (c.y, dy)
    }

    fn backward(&self, x: &[f64], gy: &[f64], with_params: bool) -> Pullback {
        let (t, w, h) = (self.tokens, self.width(), self.hidden());
        let c = self.run(x);
        let scale = self.scale();

        // feed-forward sublayer
        let gf = gy;
        let ghid = matmul(gf, self.w2.data(), t, w, h);
        let mut gpre = ghid;
        for (g, z) in gpre.iter_mut().zip(&c.pre) {
            *g *= Activation::Gelu.derivative(*z);
        }
        let gb = matmul(&gpre, self.w1.data(), t, h, w);
        let ln2 = self.ln2.backward(&c.y1, &gb, with_params);
        let mut gy1 = ln2.input;
        axpy(&mut gy1, 1.0, gy);

        // attention sublayer
        let go = matmul(&gy1, self.wo.data(), t, w, w);
        let gp = matmul_bt(&go, &c.v, t, w, t);
        let mut gv = zeros(t * w);
        add_matmul_at(&mut gv, &c.p, &go, t, t, w);
        let mut gs = softmax_rows_apply(&c.p, &gp, t);
        for s in &mut gs {
            *s *= scale;
        }
        let gq = matmul(&gs, &c.k, t, t, w);
        let mut gk = zeros(t * w);
        add_matmul_at(&mut gk, &gs, &c.q, t, t, w);
        let mut ga = matmul(&gq, self.wq.data(), t, w, w);
        axpy(&mut ga, 1.0, &matmul(&gk, self.wk.data(), t, w, w));
        axpy(&mut ga, 1.0, &matmul(&gv, self.wv.data(), t, w, w));
        let ln1 = self.ln1.backward(x, &ga, with_params);
        let mut gx = ln1.input;
        axpy(&mut gx, 1.0, &gy1);

        let params = if with_params {
            let outer = |g: &[f64], a: &[f64], rows: usize, cols: usize| {
                let mut out = zeros(rows * cols);
                add_matmul_at(&mut out, g, a, t, rows, cols);
                out
            };
            let mut ln1p = ln1.params.into_iter();
            let mut ln2p = ln2.params.into_iter();
            vec![
                ln1p.next().unwrap(),
                ln1p.next().unwrap(),
                outer(&gq, &c.a, w, w),
                column_sums(&gq, t, w),
                outer(&gk, &c.a, w, w),
                column_sums(&gk, t, w),
                outer(&gv, &c.a, w, w),
                column_sums(&gv, t, w),
                outer(&gy1, &c.o, w, w),
                column_sums(&gy1, t, w),
                ln2p.next().unwrap(),
                ln2p.next().unwrap(),
                outer(&gpre, &c.b, h, w),
                column_sums(&gpre, t, h),
                outer(gf, &c.hid, w, h),
                column_sums(gf, t, w),
            ]
        } else {
            Vec::new()
        };
        Pullback {
            output: c.y,
            input: gx,
            params,
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.ln1.gamma,
            &self.ln1.beta,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2.gamma,
            &self.ln2.beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.ln1.gamma,
            &mut self.ln1.beta,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2.gamma,
            &mut self.ln2.beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

// ---------------------------------------------------------------------------
// Classification head

/// Token-structured input read through a single pooled row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pooling {
    pub tokens: usize,
    pub slot: usize,
}

/// Maps the (pooled) penultimate representation to class logits:
/// an optional dense+activation sublayer followed by a linear projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Option<Dense>,
    pub weight: Tensor,
    pub bias: Tensor,
    pub pooling: Option<Pooling>,
}

impl Head {
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        width: usize,
        classes: usize,
        hidden: Option<Activation>,
        pooling: Option<Pooling>,
    ) -> Self {
        let hidden = hidden.map(|act| Dense::random(rng, width, width, act));
        let bound = 1.0 / (width as f64).sqrt();
        Head {
            hidden,
            weight: uniform_tensor(rng, &[classes, width], bound),
            bias: uniform_tensor(rng, &[classes], bound),
            pooling,
        }
    }

    pub fn width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.weight.shape()[0]
    }

    fn pooled<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        match self.pooling {
            Some(p) => {
                let w = self.width();
                &x[p.slot * w..(p.slot + 1) * w]
            }
            None => x,
        }
    }

    /// Representation entering the final projection.
    pub fn penultimate(&self, x: &[f64]) -> Vec<f64> {
        let p = self.pooled(x);
        match &self.hidden {
            Some(d) => d.forward(p),
            None => p.to_vec(),
        }
    }

    /// Final linear projection `W z + b`.
    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut logits = matmul_bt(z, self.weight.data(), 1, self.width(), self.classes());
        axpy(&mut logits, 1.0, self.bias.data());
        logits
    }

    /// Gradient of `uᵀ logits` with respect to the final projection's
    /// weight (`u zᵀ`), in row-major order.
    pub fn projection_weight_grad(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        let mut g = zeros(u.len() * z.len());
        add_matmul_at(&mut g, u, z, 1, u.len(), z.len());
        g
    }
}

impl Kernel for Head {
    fn input_dim(&self) -> usize {
        self.pooling.map_or(1, |p| p.tokens) * self.width()
    }

    fn output_dim(&self) -> usize {
        self.classes()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.project(&self.penultimate(x))
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (p, dp) = (self.pooled(x), self.pooled(v));
        let (z, dz) = match &self.hidden {
            Some(d) => d.jvp(p, dp),
            None => (p.to_vec(), dp.to_vec()),
        };
        let dl = matmul_bt(&dz, self.weight.data(), 1, self.width(), self.classes());
        (self.project(&z), dl)
    }

    fn backward(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback {
        let p = self.pooled(x);
        let z = self.penultimate(x);
        let gz = matmul(u, self.weight.data(), 1, self.classes(), self.width());
        let (gp, mut params) = match &self.hidden {
            Some(d) => {
                let pb = d.backward(p, &gz, with_params);
                (pb.input, pb.params)
            }
            None => (gz, Vec::new()),
        };
        let mut gx = zeros(self.input_dim());
        match self.pooling {
            Some(pool) => {
                let w = self.width();
                gx[pool.slot * w..(pool.slot + 1) * w].copy_from_slice(&gp);
            }
            None => gx.copy_from_slice(&gp),
        }
        if with_params {
            params.push(self.projection_weight_grad(&z, u));
            params.push(u.to_vec());
        }
        Pullback {
            output: self.project(&z),
            input: gx,
            params,
        }
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out = self.hidden.as_ref().map(|d| d.params()).unwrap_or_default();
        out.push(&self.weight);
        out.push(&self.bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.hidden.as_mut().map(|d| d.params_mut()).unwrap_or_default();
        out.push(&mut self.weight);
        out.push(&mut self.bias);
        out
    }
}
