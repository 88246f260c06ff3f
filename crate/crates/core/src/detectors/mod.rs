//! The ten comparison detectors. Scores follow the BLOOD convention:
//! higher means more likely out of distribution.
//!
//! Black-box: MSP, ENT, EGY, MC. White-box: GRAD, ASH. Open-box (need a
//! [`FitContext`]): REACT, ENSM, TEMP, MD.

mod calibrate;
mod scores;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use calibrate::{
    mahalanobis_fit, mahalanobis_score, temp_fit, temp_score, temperature_nll, MahalanobisFit, TempFit,
};
pub use scores::{
    ash_s, ash_shape, egy, ensemble_score, ent, grad_norm, mc_dropout, mc_dropout_mean, msp, percentile, react,
    FinalScore, GradTarget, ReactThreshold,
};

use crate::error::{Error, Result};
use crate::network::{train, NetworkModel, TrainConfig};
use crate::rng::domain;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Msp,
    Ent,
    Egy,
    Mc,
    Grad,
    Ash,
    React,
    Ensm,
    Temp,
    Md,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 10] = [
        DetectorKind::Msp,
        DetectorKind::Ent,
        DetectorKind::Egy,
        DetectorKind::Mc,
        DetectorKind::Grad,
        DetectorKind::Ash,
        DetectorKind::React,
        DetectorKind::Ensm,
        DetectorKind::Temp,
        DetectorKind::Md,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Msp => "msp",
            DetectorKind::Ent => "ent",
            DetectorKind::Egy => "egy",
            DetectorKind::Mc => "mc",
            DetectorKind::Grad => "grad",
            DetectorKind::Ash => "ash",
            DetectorKind::React => "react",
            DetectorKind::Ensm => "ensm",
            DetectorKind::Temp => "temp",
            DetectorKind::Md => "md",
        }
    }

    pub fn is_open_box(self) -> bool {
        matches!(
            self,
            DetectorKind::React | DetectorKind::Ensm | DetectorKind::Temp | DetectorKind::Md
        )
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown detector '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub mc_passes: usize,
    pub mc_rate: f64,
    pub ash_prune: f64,
    pub react_percentile: f64,
    pub react_per_unit: bool,
    pub final_score: FinalScore,
    pub grad_target: GradTarget,
    pub ensemble_size: usize,
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            mc_passes: 30,
            mc_rate: 0.1,
            ash_prune: 0.9,
            react_percentile: 90.0,
            react_per_unit: false,
            final_score: FinalScore::Energy,
            grad_target: GradTarget::Projection,
            ensemble_size: 5,
            seed: 0,
        }
    }
}

/// Training-side resources for the open-box detectors. Only the parts a
/// requested detector needs have to be present.
#[derive(Debug, Clone, Default)]
pub struct FitContext {
    /// Penultimate representations of the training set (MD, REACT).
    pub train_penultimate: Option<Vec<Vec<f64>>>,
    pub train_labels: Option<Vec<usize>>,
    /// ID validation logits and labels (TEMP).
    pub validation: Option<(Vec<Vec<f64>>, Vec<usize>)>,
    /// Independently trained members (ENSM).
    pub members: Option<Vec<NetworkModel>>,
}

impl FitContext {
    /// Collects training penultimate representations and validation logits
    /// from `model`. Ensemble members are added separately.
    pub fn from_model(
        model: &NetworkModel,
        train: (&[Tensor], &[usize]),
        validation: (&[Tensor], &[usize]),
    ) -> Result<Self> {
        let reps = train
            .0
            .iter()
            .map(|x| Ok(model.forward_trace(x)?.penultimate(model)))
            .collect::<Result<Vec<_>>>()?;
        let logits = validation
            .0
            .iter()
            .map(|x| Ok(model.logits(x)?.into_data()))
            .collect::<Result<Vec<_>>>()?;
        Ok(FitContext {
            train_penultimate: Some(reps),
            train_labels: Some(train.1.to_vec()),
            validation: Some((logits, validation.1.to_vec())),
            members: None,
        })
    }
}

/// `size` members, each a copy of `base` with a re-initialised head and its
/// own training seed, so members differ only through the head
/// initialisation and the data order.
pub fn train_ensemble(
    base: &NetworkModel,
    inputs: &[Tensor],
    labels: &[usize],
    size: usize,
    cfg: &TrainConfig,
) -> Result<Vec<NetworkModel>> {
    if size == 0 {
        return Err(Error::invalid("ensemble size must be at least 1"));
    }
    (0..size)
        .map(|k| {
            let seed = crate::rng::derive_seed(cfg.seed, &[domain::ENSEMBLE, k as u64]);
            let member = base.clone_with_reinit_head(seed);
            let member_cfg = TrainConfig { seed, ..cfg.clone() };
            Ok(train(&member, inputs, labels, &member_cfg)?.0)
        })
        .collect()
}

/// A detector ready to score: parameters bound and any fit computed.
#[derive(Debug, Clone)]
pub enum Detector {
    Msp,
    Ent,
    Egy,
    Mc {
        passes: usize,
        rate: f64,
        seed: u64,
    },
    Grad(GradTarget),
    Ash {
        prune: f64,
        final_score: FinalScore,
    },
    React {
        threshold: ReactThreshold,
        final_score: FinalScore,
    },
    Ensm(Vec<NetworkModel>),
    Temp(TempFit),
    Md(MahalanobisFit),
}

impl Detector {
    pub fn fit(kind: DetectorKind, params: &DetectorParams, ctx: &FitContext, classes: usize) -> Result<Self> {
        let missing = |what: &str| Error::invalid(format!("detector '{kind}' needs {what} in its fit context"));
        Ok(match kind {
            DetectorKind::Msp => Detector::Msp,
            DetectorKind::Ent => Detector::Ent,
            DetectorKind::Egy => Detector::Egy,
            DetectorKind::Mc => Detector::Mc {
                passes: params.mc_passes,
                rate: params.mc_rate,
                seed: params.seed,
            },
            DetectorKind::Grad => Detector::Grad(params.grad_target),
            DetectorKind::Ash => {
                ash_shape(&[1.0], params.ash_prune)?;
                Detector::Ash {
                    prune: params.ash_prune,
                    final_score: params.final_score,
                }
            }
            DetectorKind::React => {
                let reps = ctx
                    .train_penultimate
                    .as_ref()
                    .ok_or_else(|| missing("training representations"))?;
                Detector::React {
                    threshold: ReactThreshold::fit(reps, params.react_percentile, params.react_per_unit)?,
                    final_score: params.final_score,
                }
            }
            DetectorKind::Ensm => {
                let members = ctx.members.as_ref().ok_or_else(|| missing("ensemble members"))?;
                if members.is_empty() {
                    return Err(missing("at least one ensemble member"));
                }
                Detector::Ensm(members.clone())
            }
            DetectorKind::Temp => {
                let (logits, labels) = ctx.validation.as_ref().ok_or_else(|| missing("validation logits"))?;
                Detector::Temp(temp_fit(logits, labels)?)
            }
            DetectorKind::Md => {
                let reps = ctx
                    .train_penultimate
                    .as_ref()
                    .ok_or_else(|| missing("training representations"))?;
                let labels = ctx.train_labels.as_ref().ok_or_else(|| missing("training labels"))?;
                Detector::Md(mahalanobis_fit(reps, labels, classes)?)
            }
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Msp => DetectorKind::Msp,
            Detector::Ent => DetectorKind::Ent,
            Detector::Egy => DetectorKind::Egy,
            Detector::Mc { .. } => DetectorKind::Mc,
            Detector::Grad(_) => DetectorKind::Grad,
            Detector::Ash { .. } => DetectorKind::Ash,
            Detector::React { .. } => DetectorKind::React,
            Detector::Ensm(_) => DetectorKind::Ensm,
            Detector::Temp(_) => DetectorKind::Temp,
            Detector::Md(_) => DetectorKind::Md,
        }
    }

    pub fn score(&self, model: &NetworkModel, x: &Tensor, instance: u64) -> Result<f64> {
        let s = match self {
            Detector::Msp => msp(model.predict_proba(x)?.data()),
            Detector::Ent => ent(model.predict_proba(x)?.data()),
            Detector::Egy => egy(model.logits(x)?.data()),
            Detector::Mc { passes, rate, seed } => mc_dropout(model, x, *passes, *rate, *seed, instance)?,
            Detector::Grad(target) => grad_norm(model, x, *target)?,
            Detector::Ash { prune, final_score } => ash_s(model, x, *prune, *final_score)?,
            Detector::React { threshold, final_score } => react(model, x, threshold, *final_score)?,
            Detector::Ensm(members) => ensemble_score(members, x)?,
            Detector::Temp(fit) => temp_score(model.logits(x)?.data(), fit.temperature)?,
            Detector::Md(fit) => mahalanobis_score(fit, &model.forward_trace(x)?.penultimate(model))?,
        };
        if !s.is_finite() {
            return Err(Error::Numerical(format!(
                "detector '{}' produced a non-finite score",
                self.kind()
            )));
        }
        Ok(s)
    }

    /// Scores a batch; `ids[i]` keys any randomness of instance `i`.
    pub fn score_batch(&self, model: &NetworkModel, inputs: &[Tensor], ids: &[u64], jobs: usize) -> Result<Vec<f64>> {
        if inputs.len() != ids.len() {
            return Err(Error::dimension("instance ids", &[inputs.len()], &[ids.len()]));
        }
        crate::parallel::map(jobs, inputs.len(), |i| self.score(model, &inputs[i], ids[i]))
    }
}

#[cfg(test)]
mod tests;
