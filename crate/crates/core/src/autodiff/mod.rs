//! Layer functions with forward-mode (JVP) and reverse-mode (VJP) rules,
//! plus exact and finite-difference Jacobian oracles.
//!
//! There is no tape: networks are fixed sequential compositions, so each
//! layer kind carries its own analytic pushforward and pullback.

mod activation;
mod layers;

use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use layers::{Dense, Embedding, EncoderBlock, Head, LayerNorm, Pooling, Pullback, Residual};

use layers::Kernel;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default column cap for [`exact_jacobian`].
pub const EXACT_JACOBIAN_CAP: usize = 4096;

/// Default step for [`finite_difference_jacobian`].
pub const FD_EPS: f64 = 1e-5;

/// A primal value together with a tangent (or cotangent) of the same role.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPair {
    pub primal: Tensor,
    pub tangent: Tensor,
}

/// One layer `f_l : ℝ^{d_{l-1}} → ℝ^{d_l}` of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerFunction {
    Dense(Dense),
    LayerNorm(LayerNorm),
    Residual(Residual),
    Embedding(Embedding),
    SelfAttention(EncoderBlock),
    SoftmaxHead(Head),
}

/// Row-major token layout of a layer's input or output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenLayout {
    pub tokens: usize,
    pub width: usize,
}

impl LayerFunction {
    fn kernel(&self) -> &dyn Kernel {
        match self {
            LayerFunction::Dense(l) => l,
            LayerFunction::LayerNorm(l) => l,
            LayerFunction::Residual(l) => l,
            LayerFunction::Embedding(l) => l,
            LayerFunction::SelfAttention(l) => l,
            LayerFunction::SoftmaxHead(l) => l,
        }
    }

    fn kernel_mut(&mut self) -> &mut dyn Kernel {
        match self {
            LayerFunction::Dense(l) => l,
            LayerFunction::LayerNorm(l) => l,
            LayerFunction::Residual(l) => l,
            LayerFunction::Embedding(l) => l,
            LayerFunction::SelfAttention(l) => l,
            LayerFunction::SoftmaxHead(l) => l,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerFunction::Dense(_) => "dense",
            LayerFunction::LayerNorm(_) => "layer-norm",
            LayerFunction::Residual(_) => "residual",
            LayerFunction::Embedding(_) => "embedding",
            LayerFunction::SelfAttention(_) => "self-attention",
            LayerFunction::SoftmaxHead(_) => "softmax-head",
        }
    }

    pub fn input_dim(&self) -> usize {
        self.kernel().input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.kernel().output_dim()
    }

    /// Token layout of the input, if the layer reads a token matrix.
    pub fn input_layout(&self) -> Option<TokenLayout> {
        match self {
            LayerFunction::LayerNorm(l) if l.tokens > 1 => Some(TokenLayout {
                tokens: l.tokens,
                width: l.width(),
            }),
            LayerFunction::SelfAttention(l) => Some(TokenLayout {
                tokens: l.tokens,
                width: l.width(),
            }),
            LayerFunction::SoftmaxHead(h) => h.pooling.map(|p| TokenLayout {
                tokens: p.tokens,
                width: h.width(),
            }),
            LayerFunction::Dense(d) if d.tokens > 1 => Some(TokenLayout {
                tokens: d.tokens,
                width: d.in_features(),
            }),
            LayerFunction::Residual(r) if r.inner.tokens > 1 => Some(TokenLayout {
                tokens: r.inner.tokens,
                width: r.inner.in_features(),
            }),
            _ => None,
        }
    }

    /// Token layout of the output, if the layer produces a token matrix.
    pub fn output_layout(&self) -> Option<TokenLayout> {
        match self {
            LayerFunction::Embedding(e) => Some(TokenLayout {
                tokens: e.tokens + 1,
                width: e.width(),
            }),
            LayerFunction::SoftmaxHead(_) => None,
            LayerFunction::Dense(d) if d.tokens > 1 => Some(TokenLayout {
                tokens: d.tokens,
                width: d.out_features(),
            }),
            _ => self.input_layout(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.kernel().params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.kernel_mut().params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn check(&self, what: &str, expected: usize, actual: usize) -> Result<()> {
        if expected != actual {
            return Err(Error::dimension(
                format!("{} layer ({what})", self.kind()),
                &[expected],
                &[actual],
            ));
        }
        Ok(())
    }

    /// Unchecked forward pass on raw buffers.
    pub(crate) fn forward_raw(&self, x: &[f64]) -> Vec<f64> {
        self.kernel().forward(x)
    }

    pub(crate) fn jvp_raw(&self, x: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.kernel().jvp(x, v)
    }

    pub(crate) fn backward_raw(&self, x: &[f64], u: &[f64], with_params: bool) -> Pullback {
        self.kernel().backward(x, u, with_params)
    }

    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check("input", self.input_dim(), x.len())?;
        Ok(Tensor::vector(self.forward_raw(x.data())))
    }

    /// Parameter cotangents of `uᵀ f(x)`, in the order of [`Self::params`].
    pub fn param_vjp(&self, x: &Tensor, u: &Tensor) -> Result<Vec<Tensor>> {
        self.check("input", self.input_dim(), x.len())?;
        self.check("cotangent", self.output_dim(), u.len())?;
        let pb = self.backward_raw(x.data(), u.data(), true);
        self.params()
            .iter()
            .zip(pb.params)
            .map(|(p, g)| Tensor::new(p.shape().to_vec(), g))
            .collect()
    }
}

/// Forward-mode pushforward: returns `f(x)` and `J_f(x) · v`.
pub fn jvp(layer: &LayerFunction, x: &Tensor, v: &Tensor) -> Result<TangentPair> {
    layer.check("input", layer.input_dim(), x.len())?;
    layer.check("tangent", layer.input_dim(), v.len())?;
    let (y, t) = layer.jvp_raw(x.data(), v.data());
    Ok(TangentPair {
        primal: Tensor::vector(y),
        tangent: Tensor::vector(t),
    })
}

/// Reverse-mode pullback: returns `f(x)` and `J_f(x)ᵀ · u`.
pub fn vjp(layer: &LayerFunction, x: &Tensor, u: &Tensor) -> Result<TangentPair> {
    layer.check("input", layer.input_dim(), x.len())?;
    layer.check("cotangent", layer.output_dim(), u.len())?;
    let pb = layer.backward_raw(x.data(), u.data(), false);
    Ok(TangentPair {
        primal: Tensor::vector(pb.output),
        tangent: Tensor::vector(pb.input),
    })
}

/// Full Jacobian assembled one column at a time from basis-vector JVPs.
/// Oracle only: refuses inputs wider than [`EXACT_JACOBIAN_CAP`].
pub fn exact_jacobian(layer: &LayerFunction, x: &Tensor) -> Result<Tensor> {
    exact_jacobian_with_cap(layer, x, EXACT_JACOBIAN_CAP)
}

pub fn exact_jacobian_with_cap(layer: &LayerFunction, x: &Tensor, cap: usize) -> Result<Tensor> {
    let n = layer.input_dim();
    exact_jacobian_block(layer, x, 0..n, 0..layer.output_dim(), cap)
}

/// Sub-block `J[rows, cols]` assembled from one JVP per requested column.
pub fn exact_jacobian_block(
    layer: &LayerFunction,
    x: &Tensor,
    cols: std::ops::Range<usize>,
    rows: std::ops::Range<usize>,
    cap: usize,
) -> Result<Tensor> {
    let n = layer.input_dim();
    layer.check("input", n, x.len())?;
    if cols.len() > cap {
        return Err(Error::OracleCap {
            columns: cols.len(),
            cap,
        });
    }
    if cols.end > n || rows.end > layer.output_dim() {
        return Err(Error::invalid("Jacobian block out of range"));
    }
    let (m, k) = (rows.len(), cols.len());
    let mut jac = vec![0.0; m * k];
    let mut e = vec![0.0; n];
    for (c, col) in cols.enumerate() {
        e[col] = 1.0;
        let (_, t) = layer.jvp_raw(x.data(), &e);
        e[col] = 0.0;
        for (r, row) in rows.clone().enumerate() {
            jac[r * k + c] = t[row];
        }
    }
    Tensor::matrix(m, k, jac)
}

/// Central-difference Jacobian `(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε`.
pub fn finite_difference_jacobian(layer: &LayerFunction, x: &Tensor, eps: f64) -> Result<Tensor> {
    if !(eps > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (n, m) = (layer.input_dim(), layer.output_dim());
    layer.check("input", n, x.len())?;
    let mut jac = vec![0.0; m * n];
    let mut xp = x.data().to_vec();
    for i in 0..n {
        let orig = xp[i];
        xp[i] = orig + eps;
        let fp = layer.forward_raw(&xp);
        xp[i] = orig - eps;
        let fm = layer.forward_raw(&xp);
        xp[i] = orig;
        for r in 0..m {
            jac[r * n + i] = (fp[r] - fm[r]) / (2.0 * eps);
        }
    }
    Tensor::matrix(m, n, jac)
}

#[cfg(test)]
mod tests;
