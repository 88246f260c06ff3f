//! Browser demo. Three operations, each returning JSON for `www/index.html`:
//! estimator convergence against the exact `φ_l`, ID vs OOD score
//! distributions with ROC curves, and a shift sweep.

use blood_core::blood::{blood_l, blood_m, exact_phi, layer_scores, probe_terms, BloodConfig, JacobianScope};
use blood_core::datasets::{make_far_ood, make_gaussian_classes, make_gaussian_split, Split};
use blood_core::detectors::msp;
use blood_core::eval::{auroc, median};
use blood_core::fixtures::random_vector;
use blood_core::network::{train, MlpSpec, NetworkModel, TrainConfig};
use blood_core::rng::{stream, VectorDistribution};
use blood_core::{Error, Result, Tensor};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const MAX_SAMPLES: usize = 20_000;

#[derive(Debug, Serialize)]
pub struct Trajectory {
    /// Running mean of the first `k + 1` terms.
    pub mean: Vec<f64>,
    /// Standard error of that mean (0 for a single term).
    pub se: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Convergence {
    pub layer: usize,
    pub exact: f64,
    pub gaussian: Trajectory,
    pub rademacher: Trajectory,
}

fn trajectory(terms: &[f64]) -> Trajectory {
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut out = Trajectory {
        mean: Vec::with_capacity(terms.len()),
        se: Vec::with_capacity(terms.len()),
    };
    for (k, t) in terms.iter().enumerate() {
        sum += t;
        sq += t * t;
        let n = (k + 1) as f64;
        let mean = sum / n;
        let var = if k == 0 {
            0.0
        } else {
            (sq - n * mean * mean).max(0.0) / (n - 1.0)
        };
        out.mean.push(mean);
        out.se.push((var / n).sqrt());
    }
    out
}

/// Running estimates of `φ_layer` at one random input of an untrained
/// tanh MLP (6 → 8 → 8 → 3), for both probe distributions.
pub fn convergence(seed: u64, layer: usize, samples: usize) -> Result<Convergence> {
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(Error::InvalidArgument(format!("samples must be in 1..={MAX_SAMPLES}")));
    }
    let spec = MlpSpec {
        activation: blood_core::autodiff::Activation::Tanh,
        ..MlpSpec::new(6, 8, 2, 3)
    };
    let model = NetworkModel::mlp(&spec, seed)?;
    let x = random_vector(&mut stream(seed, &[0xDE40]), 6);
    let exact = exact_phi(&model, &x, layer, JacobianScope::Full)?;
    let h = model.forward_trace(&x)?.representations[layer].data().to_vec();
    let run = |dist| -> Result<Trajectory> {
        let cfg = BloodConfig {
            m_samples: samples,
            vector_distribution: dist,
            seed,
            jacobian_scope: JacobianScope::Full,
            ..BloodConfig::default()
        };
        Ok(trajectory(&probe_terms(&model, &h, layer, 0, &cfg)?))
    };
    Ok(Convergence {
        layer,
        exact,
        gaussian: run(VectorDistribution::Gaussian)?,
        rademacher: run(VectorDistribution::Rademacher)?,
    })
}

/// `(FPR, TPR)` at every distinct threshold, OOD positive, from `(0, 0)` to
/// `(1, 1)`. Tied ID/OOD scores give a diagonal step, so the trapezoidal
/// area equals the midrank AUROC.
pub fn roc_curve(id: &[f64], ood: &[f64]) -> Vec<(f64, f64)> {
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, false))
        .chain(ood.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (n_id, n_ood) = (id.len() as f64, ood.len() as f64);
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut out = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((fp as f64 / n_id, tp as f64 / n_ood));
    }
    out
}

#[derive(Debug, Serialize)]
pub struct ScoreSet {
    pub name: String,
    pub id: Vec<f64>,
    pub ood: Vec<f64>,
    pub auroc: f64,
    pub roc: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize)]
pub struct Detection {
    pub test_accuracy: f64,
    pub degree: f64,
    pub detectors: Vec<ScoreSet>,
}

/// Two Gaussian classes in 4 dimensions and a small GELU MLP trained on
/// them. Returns the model and the test split.
fn demo_model(seed: u64) -> Result<(NetworkModel, blood_core::datasets::Dataset)> {
    let (classes, dim, sep) = (2, 4, 3.0);
    let (xs, ys) = make_gaussian_classes(classes, dim, 100, sep, seed)?.labelled();
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 1e-2,
        seed,
        ..TrainConfig::default()
    };
    let (model, _) = train(
        &NetworkModel::mlp(&MlpSpec::new(dim, 16, 2, classes), seed)?,
        &xs,
        &ys,
        &cfg,
    )?;
    let test = make_gaussian_split(classes, dim, 50, sep, seed, Split::TestId)?;
    Ok((model, test))
}

struct Scores {
    blood_m: Vec<f64>,
    blood_l: Vec<f64>,
    msp: Vec<f64>,
}

fn score_all(model: &NetworkModel, xs: &[Tensor], offset: u64, cfg: &BloodConfig) -> Result<Scores> {
    let mut out = Scores {
        blood_m: Vec::new(),
        blood_l: Vec::new(),
        msp: Vec::new(),
    };
    for (i, x) in xs.iter().enumerate() {
        let s = layer_scores(model, x, offset + i as u64, cfg)?;
        out.blood_m.push(blood_m(&s.values)?);
        out.blood_l.push(blood_l(&s.values)?);
        out.msp.push(msp(model.predict_proba(x)?.data()));
    }
    Ok(out)
}

fn blood_cfg(seed: u64, samples: usize) -> Result<BloodConfig> {
    if samples == 0 || samples > MAX_SAMPLES {
        return Err(Error::InvalidArgument(format!("samples must be in 1..={MAX_SAMPLES}")));
    }
    Ok(BloodConfig {
        m_samples: samples,
        seed,
        ..BloodConfig::default()
    })
}

/// BLOOD_M, BLOOD_L and MSP on the test split against far OOD of `degree`.
pub fn detection(seed: u64, degree: f64, samples: usize) -> Result<Detection> {
    let cfg = blood_cfg(seed, samples)?;
    let (model, test) = demo_model(seed)?;
    let ood = make_far_ood(&test, degree, test.len(), seed)?;
    let (tx, ty) = test.labelled();
    let a = score_all(&model, &test.features, 0, &cfg)?;
    let b = score_all(&model, &ood.features, 1 << 32, &cfg)?;
    let set = |name: &str, id: Vec<f64>, ood: Vec<f64>| -> Result<ScoreSet> {
        Ok(ScoreSet {
            name: name.into(),
            auroc: auroc(&id, &ood)?,
            roc: roc_curve(&id, &ood),
            id,
            ood,
        })
    };
    Ok(Detection {
        test_accuracy: model.accuracy(&tx, &ty)?,
        degree,
        detectors: vec![
            set("BLOOD_M", a.blood_m, b.blood_m)?,
            set("BLOOD_L", a.blood_l, b.blood_l)?,
            set("MSP", a.msp, b.msp)?,
        ],
    })
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub degree: f64,
    pub blood_l_median: f64,
    pub msp_median: f64,
    pub blood_l_auroc: f64,
    pub msp_auroc: f64,
}

#[derive(Debug, Serialize)]
pub struct Sweep {
    pub test_blood_l_median: f64,
    pub points: Vec<SweepPoint>,
}

/// Medians and AUROCs against the test split as the far-OOD degree grows.
pub fn sweep(seed: u64, degrees: &[f64], samples: usize) -> Result<Sweep> {
    if degrees.is_empty() {
        return Err(Error::Empty("no shift degrees".into()));
    }
    let cfg = blood_cfg(seed, samples)?;
    let (model, test) = demo_model(seed)?;
    let id = score_all(&model, &test.features, 0, &cfg)?;
    let mut points = Vec::with_capacity(degrees.len());
    for (k, &degree) in degrees.iter().enumerate() {
        let ood = make_far_ood(&test, degree, test.len(), seed)?;
        let s = score_all(&model, &ood.features, (k as u64 + 1) << 32, &cfg)?;
        points.push(SweepPoint {
            degree,
            blood_l_median: median(&s.blood_l)?,
            msp_median: median(&s.msp)?,
            blood_l_auroc: auroc(&id.blood_l, &s.blood_l)?,
            msp_auroc: auroc(&id.msp, &s.msp)?,
        });
    }
    Ok(Sweep {
        test_blood_l_median: median(&id.blood_l)?,
        points,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string())))
}

#[wasm_bindgen(js_name = estimatorConvergence)]
pub fn estimator_convergence_js(seed: u32, layer: u32, samples: u32) -> Result<String, JsValue> {
    to_js(convergence(seed as u64, layer as usize, samples as usize))
}

#[wasm_bindgen(js_name = scoreDistributions)]
pub fn score_distributions_js(seed: u32, degree: f64, samples: u32) -> Result<String, JsValue> {
    to_js(detection(seed as u64, degree, samples as usize))
}

#[wasm_bindgen(js_name = shiftSweep)]
pub fn shift_sweep_js(seed: u32, degrees: Vec<f64>, samples: u32) -> Result<String, JsValue> {
    to_js(sweep(seed as u64, &degrees, samples as usize))
}
