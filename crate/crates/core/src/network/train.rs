//! Mini-batch Adam on softmax cross-entropy, with per-epoch training
//! dynamics for data cartography.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{apply_dropout, check_rate, NetworkModel};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};
use crate::tensor::{log_sum_exp, softmax, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            dropout: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        check_rate(self.dropout)
    }
}

/// True-class probability and correctness of one instance after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochObservation {
    pub true_prob: f64,
    pub correct: bool,
}

/// `observations[i][e]` is instance `i` after epoch `e`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingDynamics {
    pub labels: Vec<usize>,
    pub observations: Vec<Vec<EpochObservation>>,
}

impl TrainingDynamics {
    pub fn epochs(&self) -> usize {
        self.observations.first().map_or(0, |o| o.len())
    }

    /// One JSON object per instance: `{instance, label, true_prob, correct}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (i, (label, obs)) in self.labels.iter().zip(&self.observations).enumerate() {
            let rec = serde_json::json!({
                "instance": i,
                "label": label,
                "true_prob": obs.iter().map(|o| o.true_prob).collect::<Vec<_>>(),
                "correct": obs.iter().map(|o| o.correct).collect::<Vec<_>>(),
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Rec {
            label: usize,
            true_prob: Vec<f64>,
            correct: Vec<bool>,
        }
        let mut dyn_ = TrainingDynamics::default();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: Rec = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: n as u64 + 1,
                message: e.to_string(),
            })?;
            if rec.true_prob.len() != rec.correct.len() {
                return Err(Error::Parse {
                    line: n as u64 + 1,
                    message: "true_prob and correct lengths differ".into(),
                });
            }
            dyn_.labels.push(rec.label);
            dyn_.observations.push(
                rec.true_prob
                    .into_iter()
                    .zip(rec.correct)
                    .map(|(true_prob, correct)| EpochObservation { true_prob, correct })
                    .collect(),
            );
        }
        Ok(dyn_)
    }
}

/// Cross-entropy of `label` and its gradient with respect to every
/// parameter (outer index = layer, inner = parameter tensor).
/// With `dropout = Some((rate, key))` the pass uses the masks drawn from
/// the stream keyed by `key`.
pub fn loss_and_gradients(
    model: &NetworkModel,
    x: &Tensor,
    label: usize,
    dropout: Option<(f64, [u64; 4])>,
) -> Result<(f64, Vec<Vec<Tensor>>)> {
    if label >= model.num_classes {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.num_classes,
        });
    }
    if x.len() != model.input_dim() {
        return Err(Error::dimension("network input", &[model.input_dim()], &[x.len()]));
    }
    let last = model.layers.len() - 1;
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len());
    let mut masks: Vec<Option<Vec<f64>>> = Vec::with_capacity(last);
    let mut rng = dropout.map(|(_, key)| stream(key[0], &key[1..]));
    let mut h = x.data().to_vec();
    for (l, layer) in model.layers.iter().enumerate() {
        let out = layer.forward_raw(&h);
        inputs.push(h);
        h = out;
        if l < last {
            match (&mut rng, dropout) {
                (Some(r), Some((rate, _))) if rate > 0.0 => masks.push(Some(apply_dropout(&mut h, rate, r))),
                _ => masks.push(None),
            }
        }
    }
    let loss = log_sum_exp(&h) - h[label];
    let mut u = softmax(&h);
    u[label] -= 1.0;

    let mut grads: Vec<Vec<Tensor>> = vec![Vec::new(); model.layers.len()];
    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let pb = layer.backward_raw(&inputs[l], &u, true);
        grads[l] = layer
            .params()
            .iter()
            .zip(pb.params)
            .map(|(p, g)| Tensor::new(p.shape().to_vec(), g))
            .collect::<Result<_>>()?;
        u = pb.input;
        if l > 0 {
            if let Some(mask) = &masks[l - 1] {
                for (g, m) in u.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
        }
    }
    Ok((loss, grads))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &NetworkModel) -> Self {
        let sizes: Vec<usize> = model
            .layers
            .iter()
            .flat_map(|l| l.params().into_iter().map(|p| p.len()))
            .collect();
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut NetworkModel, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let params = model.layers.iter_mut().flat_map(|l| l.params_mut());
        for (k, p) in params.enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                *w -= cfg.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
            }
        }
    }
}

fn validate_data(model: &NetworkModel, inputs: &[Tensor], labels: &[usize]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::dimension("training labels", &[inputs.len()], &[labels.len()]));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= model.num_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.num_classes,
        });
    }
    Ok(())
}

/// Trains in place, calling `observe(epoch, model)` after every epoch.
/// Single-threaded and fully determined by `cfg.seed`.
pub fn train_with_observer(
    model: &mut NetworkModel,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, &NetworkModel) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    validate_data(model, inputs, labels)?;
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(cfg.seed, &[domain::SHUFFLE, epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Vec<f64>> = Vec::new();
            for &i in batch {
                let key = [cfg.seed, domain::DROPOUT, epoch as u64, i as u64];
                let drop = (cfg.dropout > 0.0).then_some((cfg.dropout, key));
                let (loss, grads) = loss_and_gradients(model, &inputs[i], labels[i], drop)?;
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!("training loss is {loss} in epoch {epoch}")));
                }
                let flat = grads.into_iter().flatten();
                if acc.is_empty() {
                    acc = flat.map(|t| t.into_data()).collect();
                } else {
                    for (a, g) in acc.iter_mut().zip(flat) {
                        for (x, y) in a.iter_mut().zip(g.data()) {
                            *x += y;
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                for x in a.iter_mut() {
                    *x *= scale;
                }
            }
            adam.update(model, &acc, cfg);
        }
        let finite = model
            .layers
            .iter()
            .all(|l| l.params().iter().all(|p| p.data().iter().all(|v| v.is_finite())));
        if !finite {
            return Err(Error::Numerical(format!("parameters diverged in epoch {epoch}")));
        }
        observe(epoch, model)?;
    }
    Ok(())
}

/// Trains a copy of `model` and records per-epoch training dynamics.
pub fn train(
    model: &NetworkModel,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainingDynamics)> {
    let mut trained = model.clone();
    let mut observations = vec![Vec::with_capacity(cfg.epochs); inputs.len()];
    train_with_observer(&mut trained, inputs, labels, cfg, |_, m| {
        for (i, (x, &y)) in inputs.iter().zip(labels).enumerate() {
            let p = m.predict_proba(x)?;
            observations[i].push(EpochObservation {
                true_prob: p.data()[y],
                correct: p.argmax() == y,
            });
        }
        Ok(())
    })?;
    Ok((
        trained,
        TrainingDynamics {
            labels: labels.to_vec(),
            observations,
        },
    ))
}

/// Trains while tracking held-out cross-entropy; returns the parameters
/// with the lowest held-out loss, considering the untrained model too.
pub fn train_early_stopping(
    model: &NetworkModel,
    inputs: &[Tensor],
    labels: &[usize],
    held_out: (&[Tensor], &[usize]),
    cfg: &TrainConfig,
) -> Result<NetworkModel> {
    let mut best = model.clone();
    let mut best_loss = model.mean_cross_entropy(held_out.0, held_out.1)?;
    let mut trained = model.clone();
    train_with_observer(&mut trained, inputs, labels, cfg, |_, m| {
        let loss = m.mean_cross_entropy(held_out.0, held_out.1)?;
        if loss < best_loss {
            best_loss = loss;
            best = m.clone();
        }
        Ok(())
    })?;
    Ok(best)
}
