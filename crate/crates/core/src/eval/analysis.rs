//! Representation change, data cartography, prequential MDL and shift
//! sweeps.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::cles;
use super::stats::{mean_std, median, spearman};
use crate::error::{Error, Result};
use crate::network::{train_early_stopping, NetworkModel, TrainConfig, TrainingDynamics};
use crate::rng::{domain, stream};
use crate::tensor::{log_sum_exp, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerChange {
    pub layer: usize,
    pub id_mean: f64,
    pub id_std: f64,
    pub ood_mean: f64,
    pub ood_std: f64,
    /// `P(ID change > OOD change)`.
    pub cles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepChangeReport {
    pub layers: Vec<LayerChange>,
    pub cles_mean: f64,
    pub cles_last: f64,
}

/// Representation `h_l` used for change analysis: the pooled slot for token
/// models, the whole vector otherwise.
fn readout(model: &NetworkModel, h: &Tensor) -> Vec<f64> {
    match (model.pooled_slot, h.shape()) {
        (Some(s), &[_, w]) => h.data()[s * w..(s + 1) * w].to_vec(),
        _ => h.data().to_vec(),
    }
}

/// Per-instance Euclidean distances `‖h_l^init − h_l^trained‖` at layers
/// `1 … L−1`; outer index is the layer.
pub fn representation_distances(init: &NetworkModel, trained: &NetworkModel, xs: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    if init.depth() != trained.depth() || init.input_dim() != trained.input_dim() {
        return Err(Error::invalid(
            "representation change needs two models of the same architecture",
        ));
    }
    let mut out = vec![Vec::with_capacity(xs.len()); init.depth() - 1];
    for x in xs {
        let a = init.forward_trace(x)?;
        let b = trained.forward_trace(x)?;
        for l in 1..init.depth() {
            let (ra, rb) = (
                readout(init, &a.representations[l]),
                readout(trained, &b.representations[l]),
            );
            if ra.len() != rb.len() {
                return Err(Error::dimension(
                    format!("representation h_{l}"),
                    &[ra.len()],
                    &[rb.len()],
                ));
            }
            let d: f64 = ra.iter().zip(&rb).map(|(p, q)| (p - q).powi(2)).sum();
            out[l - 1].push(d.sqrt());
        }
    }
    Ok(out)
}

pub fn rep_change(
    init: &NetworkModel,
    trained: &NetworkModel,
    id: &[Tensor],
    ood: &[Tensor],
) -> Result<RepChangeReport> {
    let di = representation_distances(init, trained, id)?;
    let dood = representation_distances(init, trained, ood)?;
    let mut layers = Vec::with_capacity(di.len());
    for (l, (a, b)) in di.iter().zip(&dood).enumerate() {
        let (id_mean, id_std) = mean_std(a);
        let (ood_mean, ood_std) = mean_std(b);
        layers.push(LayerChange {
            layer: l + 1,
            id_mean,
            id_std,
            ood_mean,
            ood_std,
            cles: cles(a, b)?,
        });
    }
    let cles_mean = layers.iter().map(|l| l.cles).sum::<f64>() / layers.len() as f64;
    let cles_last = layers.last().map_or(0.5, |l| l.cles);
    Ok(RepChangeReport {
        layers,
        cles_mean,
        cles_last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartographyRecord {
    pub instance: usize,
    /// Mean true-class probability over epochs.
    pub confidence: f64,
    /// Population standard deviation of the true-class probability.
    pub variability: f64,
    /// Fraction of epochs with a correct prediction.
    pub correctness: f64,
}

pub fn cartography(dynamics: &TrainingDynamics) -> Result<Vec<CartographyRecord>> {
    if dynamics.epochs() == 0 {
        return Err(Error::Empty("training dynamics have no epochs".into()));
    }
    dynamics
        .observations
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            let probs: Vec<f64> = obs.iter().map(|o| o.true_prob).collect();
            let (confidence, variability) = mean_std(&probs);
            let correctness = obs.iter().filter(|o| o.correct).count() as f64 / obs.len() as f64;
            Ok(CartographyRecord {
                instance: i,
                confidence,
                variability,
                correctness,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdlReport {
    /// Total codelength in nats.
    pub codelength: f64,
    pub per_block: Vec<f64>,
    pub block_sizes: Vec<usize>,
    pub first_block_cost: f64,
}

/// `count` blocks of `size` instances.
pub fn uniform_blocks(count: usize, size: usize) -> Vec<usize> {
    vec![size; count]
}

/// Prequential codelength: instances are shuffled by `cfg.seed`, cut into
/// consecutive blocks, the first block is sent with the uniform code
/// (`ln C` per instance), and every later block is coded by a fresh model
/// from `factory` trained on all preceding blocks. Each model keeps the
/// epoch with the lowest cross-entropy on a 10% slice of its own training
/// data (the untrained model included), so uninformative labels cost about
/// `ln C` rather than an overfitted penalty.
pub fn mdl_prequential(
    inputs: &[Tensor],
    labels: &[usize],
    classes: usize,
    factory: impl Fn() -> Result<NetworkModel>,
    block_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<MdlReport> {
    if block_sizes.len() < 2 || block_sizes.contains(&0) {
        return Err(Error::invalid("prequential coding needs at least two nonempty blocks"));
    }
    let needed: usize = block_sizes.iter().sum();
    if inputs.len() != labels.len() {
        return Err(Error::dimension("MDL labels", &[inputs.len()], &[labels.len()]));
    }
    if inputs.len() < needed {
        return Err(Error::invalid(format!(
            "block schedule needs {needed} instances, dataset has {}",
            inputs.len()
        )));
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut stream(cfg.seed, &[domain::SHUFFLE, u64::MAX]));
    let order = &order[..needed];

    let first_block_cost = block_sizes[0] as f64 * (classes as f64).ln();
    let mut per_block = vec![first_block_cost];
    let mut start = block_sizes[0];
    for (k, &size) in block_sizes.iter().enumerate().skip(1) {
        let seen = &order[..start];
        let n_hold = (seen.len() / 10).max(1).min(seen.len() - 1);
        let (hold, fit) = seen.split_at(n_hold);
        let pick = |idx: &[usize]| -> (Vec<Tensor>, Vec<usize>) {
            idx.iter().map(|&i| (inputs[i].clone(), labels[i])).unzip()
        };
        let (fx, fy) = pick(fit);
        let (hx, hy) = pick(hold);
        let block_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        let model = if fx.is_empty() {
            factory()?
        } else {
            train_early_stopping(&factory()?, &fx, &fy, (&hx, &hy), &block_cfg)?
        };
        let mut cost = 0.0;
        for &i in &order[start..start + size] {
            let z = model.logits(&inputs[i])?;
            cost += log_sum_exp(z.data()) - z.data()[labels[i]];
        }
        per_block.push(cost);
        start += size;
    }
    Ok(MdlReport {
        codelength: per_block.iter().sum(),
        per_block,
        block_sizes: block_sizes.to_vec(),
        first_block_cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub name: String,
    pub median: f64,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSweep {
    pub levels: Vec<SweepLevel>,
    /// Spearman correlation of level index with level median; 0 when
    /// undefined.
    pub spearman: f64,
    /// Set when the correlation was undefined (all medians tied).
    pub degenerate: bool,
    pub strictly_increasing: bool,
}

/// Per-level medians and their rank agreement with the level order.
pub fn shift_sweep(levels: &[(String, Vec<f64>)]) -> Result<ShiftSweep> {
    if levels.len() < 2 {
        return Err(Error::invalid("a shift sweep needs at least two levels"));
    }
    let mut out = Vec::with_capacity(levels.len());
    for (name, scores) in levels {
        out.push(SweepLevel {
            name: name.clone(),
            median: median(scores)?,
            scores: scores.clone(),
        });
    }
    let idx: Vec<f64> = (0..out.len()).map(|i| i as f64).collect();
    let medians: Vec<f64> = out.iter().map(|l| l.median).collect();
    let (spearman, degenerate) = match spearman(&idx, &medians) {
        Ok(r) => (r, false),
        Err(_) => (0.0, true),
    };
    let strictly_increasing = medians.windows(2).all(|w| w[0] < w[1]);
    Ok(ShiftSweep {
        levels: out,
        spearman,
        degenerate,
        strictly_increasing,
    })
}
