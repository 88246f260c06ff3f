//! Between-layer smoothness scores.
//!
//! For a network `f = f_L ∘ … ∘ f_1` with representations `h_l`, layer `l`
//! (1 ≤ l ≤ L−1) is scored by `φ_l = ‖J_{f_{l+1}}(h_l)‖_F²`. The estimator
//! draws `M` probe pairs `(v, w)` with identity autocorrelation and averages
//! `(wᵀ J v)²`, which is unbiased for `φ_l`. Each term costs one forward-mode
//! pass through `f_{l+1}`; the Jacobian itself is never formed.

mod openbox;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use openbox::{openbox_fit, openbox_score, OpenBoxWeights};

use crate::autodiff::{exact_jacobian_block, LayerFunction, EXACT_JACOBIAN_CAP};
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::rng::{counter_stream, domain, VectorDistribution};
use crate::tensor::{self, Tensor};

/// How each probe term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    /// `(wᵀ J v)²`
    #[default]
    Vjv,
    /// `‖J v‖²`, lower variance, one probe vector per term.
    Jv,
}

impl std::str::FromStr for EstimatorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vjv" => Ok(EstimatorMode::Vjv),
            "jv" => Ok(EstimatorMode::Jv),
            other => Err(format!("unknown estimator mode '{other}'")),
        }
    }
}

/// Which block of a token-layout layer's Jacobian is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianScope {
    /// Pooled slot in, pooled slot out; other tokens held fixed.
    #[default]
    PooledSlot,
    Full,
}

impl std::str::FromStr for JacobianScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pooled-slot" => Ok(JacobianScope::PooledSlot),
            "full" => Ok(JacobianScope::Full),
            other => Err(format!("unknown jacobian scope '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BloodConfig {
    pub m_samples: usize,
    pub vector_distribution: VectorDistribution,
    pub seed: u64,
    /// Inclusive `(first, last)` layer indices within `[1, L−1]`; `None`
    /// scores every layer.
    pub layer_range: Option<(usize, usize)>,
    pub estimator: EstimatorMode,
    pub jacobian_scope: JacobianScope,
    /// Divide each `φ̂_l` by the number of Jacobian entries in scope.
    pub normalize: bool,
}

impl Default for BloodConfig {
    fn default() -> Self {
        BloodConfig {
            m_samples: 50,
            vector_distribution: VectorDistribution::Gaussian,
            seed: 0,
            layer_range: None,
            estimator: EstimatorMode::Vjv,
            jacobian_scope: JacobianScope::PooledSlot,
            normalize: false,
        }
    }
}

impl BloodConfig {
    /// Resolved inclusive layer range for a network of depth `depth`.
    pub fn layers(&self, depth: usize) -> Result<Range<usize>> {
        if self.m_samples == 0 {
            return Err(Error::invalid("m_samples must be at least 1"));
        }
        let max = depth.saturating_sub(1);
        if max == 0 {
            return Err(Error::invalid("network needs at least two layers to be scored"));
        }
        let (a, b) = self.layer_range.unwrap_or((1, max));
        if a == 0 || a > b {
            return Err(Error::invalid(format!("bad layer range {a}..={b}")));
        }
        if b > max {
            return Err(Error::LayerIndex { index: b, max });
        }
        Ok(a..b + 1)
    }
}

/// Per-layer estimates `φ̂_l` for `l` in `layers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    pub layers: Vec<usize>,
    pub values: Vec<f64>,
}

impl LayerScores {
    pub fn from_values(values: Vec<f64>) -> Self {
        LayerScores {
            layers: (1..=values.len()).collect(),
            values,
        }
    }
}

/// Mean of the per-layer scores.
pub fn blood_m(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("layer scores".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Score of the last scored layer (the projection when all layers are scored).
pub fn blood_l(scores: &[f64]) -> Result<f64> {
    scores
        .last()
        .copied()
        .ok_or_else(|| Error::Empty("layer scores".into()))
}

fn check_layer(model: &NetworkModel, l: usize) -> Result<()> {
    let max = model.depth() - 1;
    if l == 0 || l > max {
        return Err(Error::LayerIndex { index: l, max });
    }
    Ok(())
}

/// Input and output coordinate ranges of `layer` covered by `scope`.
fn probe_ranges(layer: &LayerFunction, slot: Option<usize>, scope: JacobianScope) -> (Range<usize>, Range<usize>) {
    let pick = |layout: Option<crate::autodiff::TokenLayout>, dim: usize| match (scope, slot, layout) {
        (JacobianScope::PooledSlot, Some(s), Some(t)) => s * t.width..(s + 1) * t.width,
        _ => 0..dim,
    };
    (
        pick(layer.input_layout(), layer.input_dim()),
        pick(layer.output_layout(), layer.output_dim()),
    )
}

/// The individual probe terms whose mean is `φ̂_l`, evaluated at `h = h_l`.
/// Term `i` draws from the stream keyed `(seed, instance, l)` at counter `i`.
pub fn probe_terms(model: &NetworkModel, h: &[f64], l: usize, instance: u64, cfg: &BloodConfig) -> Result<Vec<f64>> {
    check_layer(model, l)?;
    let layer = &model.layers[l];
    if h.len() != layer.input_dim() {
        return Err(Error::dimension(
            format!("representation h_{l}"),
            &[layer.input_dim()],
            &[h.len()],
        ));
    }
    let (cols, rows) = probe_ranges(layer, model.pooled_slot, cfg.jacobian_scope);
    let mut v = tensor::zeros(layer.input_dim());
    let mut w = tensor::zeros(rows.len());
    let mut out = Vec::with_capacity(cfg.m_samples);
    for i in 0..cfg.m_samples {
        let mut rng = counter_stream(cfg.seed, &[domain::BLOOD, instance, l as u64], i as u64);
        cfg.vector_distribution.fill(&mut rng, &mut v[cols.clone()]);
        let (_, jv) = layer.jvp_raw(h, &v);
        let jv = &jv[rows.clone()];
        let term = match cfg.estimator {
            EstimatorMode::Vjv => {
                cfg.vector_distribution.fill(&mut rng, &mut w);
                let s = tensor::dot(&w, jv);
                s * s
            }
            EstimatorMode::Jv => tensor::dot(jv, jv),
        };
        out.push(term);
    }
    if cfg.normalize {
        let n = (cols.len() * rows.len()) as f64;
        for t in &mut out {
            *t /= n;
        }
    }
    Ok(out)
}

/// Hutchinson terms `vᵀ (JᵀJ) v`, each from one JVP followed by one VJP.
pub fn hutchinson_terms(
    model: &NetworkModel,
    h: &[f64],
    l: usize,
    instance: u64,
    cfg: &BloodConfig,
) -> Result<Vec<f64>> {
    check_layer(model, l)?;
    let layer = &model.layers[l];
    let (cols, rows) = probe_ranges(layer, model.pooled_slot, cfg.jacobian_scope);
    let mut v = tensor::zeros(layer.input_dim());
    let mut u = tensor::zeros(layer.output_dim());
    let mut out = Vec::with_capacity(cfg.m_samples);
    for i in 0..cfg.m_samples {
        let mut rng = counter_stream(cfg.seed, &[domain::BLOOD, instance, l as u64], i as u64);
        cfg.vector_distribution.fill(&mut rng, &mut v[cols.clone()]);
        let (_, jv) = layer.jvp_raw(h, &v);
        u[rows.clone()].copy_from_slice(&jv[rows.clone()]);
        let jtjv = layer.backward_raw(h, &u, false).input;
        out.push(tensor::dot(&v[cols.clone()], &jtjv[cols.clone()]));
    }
    Ok(out)
}

/// `φ̂_l(x)` for a single instance (instance id 0).
pub fn estimate_phi(model: &NetworkModel, x: &Tensor, l: usize, cfg: &BloodConfig) -> Result<f64> {
    check_layer(model, l)?;
    let trace = model.forward_trace(x)?;
    let terms = probe_terms(model, trace.representations[l].data(), l, 0, cfg)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// `φ_l(x)` from the assembled Jacobian block in `scope`. Oracle only.
pub fn exact_phi(model: &NetworkModel, x: &Tensor, l: usize, scope: JacobianScope) -> Result<f64> {
    check_layer(model, l)?;
    let trace = model.forward_trace(x)?;
    let layer = &model.layers[l];
    let (cols, rows) = probe_ranges(layer, model.pooled_slot, scope);
    let h = Tensor::vector(trace.representations[l].data().to_vec());
    Ok(exact_jacobian_block(layer, &h, cols, rows, EXACT_JACOBIAN_CAP)?.frobenius_sq())
}

/// `φ̂_l` for every layer in the configured range.
pub fn layer_scores(model: &NetworkModel, x: &Tensor, instance: u64, cfg: &BloodConfig) -> Result<LayerScores> {
    let range = cfg.layers(model.depth())?;
    let trace = model.forward_trace(x)?;
    let mut values = Vec::with_capacity(range.len());
    for l in range.clone() {
        let terms = probe_terms(model, trace.representations[l].data(), l, instance, cfg)?;
        values.push(terms.iter().sum::<f64>() / terms.len() as f64);
    }
    Ok(LayerScores {
        layers: range.collect(),
        values,
    })
}

/// Scores many instances; `ids[i]` keys the streams of `inputs[i]`.
/// `jobs = 0` uses every core. Output order and values do not depend on
/// `jobs`.
pub fn score_batch(
    model: &NetworkModel,
    inputs: &[Tensor],
    ids: &[u64],
    cfg: &BloodConfig,
    jobs: usize,
) -> Result<Vec<LayerScores>> {
    if inputs.len() != ids.len() {
        return Err(Error::dimension("instance ids", &[inputs.len()], &[ids.len()]));
    }
    crate::parallel::map(jobs, inputs.len(), |i| layer_scores(model, &inputs[i], ids[i], cfg))
}
