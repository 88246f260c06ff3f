//! Per-instance scores. Every function returns "higher = more OOD".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::rng::{counter_stream, domain};
use crate::tensor::{log_sum_exp, softmax, Tensor};

/// Negated maximum class probability.
pub fn msp(probabilities: &[f64]) -> f64 {
    -probabilities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn ent(probabilities: &[f64]) -> f64 {
    -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Energy `−ln Σ exp(z_i)`.
pub fn egy(logits: &[f64]) -> f64 {
    -log_sum_exp(logits)
}

/// Score applied to the logits after ASH or ReAct reshape the penultimate
/// representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalScore {
    #[default]
    Energy,
    Msp,
}

impl FinalScore {
    pub fn apply(self, logits: &[f64]) -> f64 {
        match self {
            FinalScore::Energy => egy(logits),
            FinalScore::Msp => msp(&softmax(logits)),
        }
    }
}

/// Mean predictive distribution over `passes` dropout forwards. Pass `k`
/// draws its masks from a stream keyed by `(seed, instance)` on counter `k`.
pub fn mc_dropout_mean(
    model: &NetworkModel,
    x: &Tensor,
    passes: usize,
    rate: f64,
    seed: u64,
    instance: u64,
) -> Result<Vec<f64>> {
    if passes == 0 {
        return Err(Error::invalid("MC dropout needs at least one pass"));
    }
    let mut mean = vec![0.0; model.num_classes];
    for k in 0..passes {
        let mut rng = counter_stream(seed, &[domain::MC_DROPOUT, instance], k as u64);
        let p = model.dropout_forward(x, rate, &mut rng)?;
        for (m, v) in mean.iter_mut().zip(p.data()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= passes as f64;
    }
    Ok(mean)
}

pub fn mc_dropout(model: &NetworkModel, x: &Tensor, passes: usize, rate: f64, seed: u64, instance: u64) -> Result<f64> {
    Ok(ent(&mc_dropout_mean(model, x, passes, rate, seed, instance)?))
}

/// Which gradient of the pseudo-label cross-entropy GRAD measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradTarget {
    /// Weight matrix of the head's final projection: `‖p − e_ŷ‖·‖z‖`.
    #[default]
    Projection,
    /// Every head parameter (dense sublayer and biases included).
    HeadParams,
    /// The penultimate representation `z` itself.
    Representation,
}

impl std::str::FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(GradTarget::Projection),
            "head-params" => Ok(GradTarget::HeadParams),
            "representation" => Ok(GradTarget::Representation),
            _ => Err(Error::invalid(format!("unknown GRAD target '{s}'"))),
        }
    }
}

pub fn grad_norm(model: &NetworkModel, x: &Tensor, target: GradTarget) -> Result<f64> {
    let trace = model.forward_trace(x)?;
    let p = trace.probabilities.data();
    let y = trace.logits.argmax();
    // d loss / d logits
    let mut u = p.to_vec();
    u[y] -= 1.0;
    let residual = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let head = model.head();
    match target {
        GradTarget::Projection => Ok(residual * crate::tensor::norm(&trace.penultimate(model))),
        GradTarget::Representation => {
            let g: f64 = (0..head.width())
                .map(|j| {
                    let s: f64 = (0..head.classes()).map(|c| u[c] * head.weight.get2(c, j)).sum();
                    s * s
                })
                .sum();
            Ok(g.sqrt())
        }
        GradTarget::HeadParams => {
            let h = trace.representations.last().unwrap().data();
            let last = model.depth() - 1;
            let pb = model.layers[last].backward_raw(h, &u, true);
            Ok(pb.params.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
        }
    }
}

/// ASH-S shaping of a penultimate vector: keep the largest
/// `⌈(1 − prune)·n⌉` entries by magnitude, zero the rest and scale the
/// survivors by `exp(s1 / s2)`. When the survivors sum to zero the scale
/// is 1; the exponent is clamped at ±50 so the result stays finite.
pub fn ash_shape(z: &[f64], prune_fraction: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&prune_fraction) {
        return Err(Error::invalid(format!(
            "prune fraction {prune_fraction} outside [0, 1)"
        )));
    }
    let n = z.len();
    let keep = (((1.0 - prune_fraction) * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));
    let s1: f64 = z.iter().sum();
    let mut out = vec![0.0; n];
    for &i in &order[..keep.min(n)] {
        out[i] = z[i];
    }
    let s2: f64 = out.iter().sum();
    let scale = if s2 == 0.0 {
        1.0
    } else {
        (s1 / s2).clamp(-50.0, 50.0).exp()
    };
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

pub fn ash_s(model: &NetworkModel, x: &Tensor, prune_fraction: f64, final_score: FinalScore) -> Result<f64> {
    let z = model.forward_trace(x)?.penultimate(model);
    let shaped = ash_shape(&z, prune_fraction)?;
    Ok(final_score.apply(&model.head().project(&shaped)))
}

/// Percentile with linear interpolation between order statistics
/// (position `q/100·(n−1)` in the sorted sample).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::invalid(format!("percentile {q} outside [0, 100]")));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(s[lo] + (pos - lo as f64) * (s[hi] - s[lo]))
}

/// ReAct clamp level: one scalar pooled over all units, or one per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactThreshold {
    Pooled(f64),
    PerUnit(Vec<f64>),
}

impl ReactThreshold {
    pub fn fit(train_penultimate: &[Vec<f64>], percentile_q: f64, per_unit: bool) -> Result<Self> {
        if train_penultimate.is_empty() {
            return Err(Error::Empty("ReAct needs training penultimate activations".into()));
        }
        if per_unit {
            let width = train_penultimate[0].len();
            let mut out = Vec::with_capacity(width);
            for j in 0..width {
                let col: Vec<f64> = train_penultimate.iter().map(|z| z[j]).collect();
                out.push(percentile(&col, percentile_q)?);
            }
            Ok(ReactThreshold::PerUnit(out))
        } else {
            let pool: Vec<f64> = train_penultimate.iter().flatten().copied().collect();
            Ok(ReactThreshold::Pooled(percentile(&pool, percentile_q)?))
        }
    }

    pub fn clamp(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            ReactThreshold::Pooled(c) => Ok(z.iter().map(|v| v.min(*c)).collect()),
            ReactThreshold::PerUnit(cs) => {
                if cs.len() != z.len() {
                    return Err(Error::dimension("ReAct thresholds", &[cs.len()], &[z.len()]));
                }
                Ok(z.iter().zip(cs).map(|(v, c)| v.min(*c)).collect())
            }
        }
    }
}

pub fn react(model: &NetworkModel, x: &Tensor, threshold: &ReactThreshold, final_score: FinalScore) -> Result<f64> {
    let z = model.forward_trace(x)?.penultimate(model);
    Ok(final_score.apply(&model.head().project(&threshold.clamp(&z)?)))
}

/// Entropy of the uniform mixture of the members' predictive distributions.
pub fn ensemble_score(members: &[NetworkModel], x: &Tensor) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Empty("ensemble has no members".into()));
    }
    let mut mean = vec![0.0; members[0].num_classes];
    for m in members {
        let p = m.predict_proba(x)?;
        if p.len() != mean.len() {
            return Err(Error::dimension("ensemble member classes", &[mean.len()], &[p.len()]));
        }
        for (a, b) in mean.iter_mut().zip(p.data()) {
            *a += b;
        }
    }
    for a in &mut mean {
        *a /= members.len() as f64;
    }
    Ok(ent(&mean))
}
