//! Open-box weighting: a logistic regression over the per-layer scores,
//! fitted on a labelled validation split that mixes ID and OOD instances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge penalty on the standardised weights (not the bias). Keeps the fit
/// finite on separable data and unique when columns are collinear.
const RIDGE: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 200;
const TOLERANCE: f64 = 1e-10;

/// Affine weights on log per-layer scores, passed through the logistic link.
/// Scores are nonnegative and heavy-tailed, so the fit works in log space;
/// the link stays monotone in each raw score whose weight is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenBoxWeights {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Logistic probability of OOD for one instance's per-layer scores.
pub fn openbox_score(weights: &OpenBoxWeights, scores: &[f64]) -> Result<f64> {
    if scores.len() != weights.weights.len() {
        return Err(Error::dimension(
            "open-box layer scores",
            &[weights.weights.len()],
            &[scores.len()],
        ));
    }
    let t = weights.bias
        + weights
            .weights
            .iter()
            .zip(scores)
            .map(|(w, &s)| w * feature(s))
            .sum::<f64>();
    Ok(sigmoid(t))
}

fn feature(score: f64) -> f64 {
    score.max(f64::MIN_POSITIVE).ln()
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for (e, &t) in eta.iter().zip(y) {
        // log σ(e) = −softplus(−e)
        let softplus = |z: f64| {
            if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            }
        };
        ll -= if t > 0.5 { softplus(-e) } else { softplus(*e) };
    }
    let k = beta.len();
    ll - 0.5 * RIDGE * beta.rows(1, k - 1).norm_squared()
}

/// Maximises the (lightly ridge-penalised) log-likelihood of `is_ood` given
/// the per-layer scores by damped Newton iterations on standardised
/// log features, then maps the weights back to unstandardised units.
pub fn openbox_fit(scores: &[Vec<f64>], is_ood: &[bool]) -> Result<OpenBoxWeights> {
    if scores.is_empty() {
        return Err(Error::Empty("open-box validation set".into()));
    }
    if scores.len() != is_ood.len() {
        return Err(Error::dimension("open-box labels", &[scores.len()], &[is_ood.len()]));
    }
    if is_ood.iter().all(|&b| b) || is_ood.iter().all(|&b| !b) {
        return Err(Error::invalid("open-box fit needs both ID and OOD instances"));
    }
    let k = scores[0].len();
    if k == 0 || scores.iter().any(|s| s.len() != k) {
        return Err(Error::invalid("open-box scores must share a nonzero layer count"));
    }
    let n = scores.len();
    let scores: Vec<Vec<f64>> = scores.iter().map(|s| s.iter().map(|&v| feature(v)).collect()).collect();
    let mut mean = vec![0.0; k];
    let mut sd = vec![0.0; k];
    for s in &scores {
        for j in 0..k {
            mean[j] += s[j] / n as f64;
        }
    }
    for s in &scores {
        for j in 0..k {
            sd[j] += (s[j] - mean[j]).powi(2) / n as f64;
        }
    }
    for v in &mut sd {
        *v = if *v > 0.0 { v.sqrt() } else { 1.0 };
    }

    let x = DMatrix::from_fn(n, k + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (scores[i][j - 1] - mean[j - 1]) / sd[j - 1]
        }
    });
    let y: Vec<f64> = is_ood.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut beta = DVector::zeros(k + 1);
    let mut ll = log_likelihood(&x, &y, &beta);
    for _ in 0..MAX_NEWTON_STEPS {
        let eta = &x * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut grad = DVector::zeros(k + 1);
        let mut hess = DMatrix::zeros(k + 1, k + 1);
        for i in 0..n {
            let row = x.row(i);
            let r = y[i] - p[i];
            let s = (p[i] * (1.0 - p[i])).max(1e-12);
            for a in 0..=k {
                grad[a] += row[a] * r;
                for b in 0..=k {
                    hess[(a, b)] += s * row[a] * row[b];
                }
            }
        }
        for a in 1..=k {
            grad[a] -= RIDGE * beta[a];
            hess[(a, a)] += RIDGE;
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => return Err(Error::Numerical("open-box Hessian is not positive definite".into())),
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let cand = &beta + &step * t;
            let cand_ll = log_likelihood(&x, &y, &cand);
            if cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step.amax() * t < TOLERANCE {
            break;
        }
    }

    let weights: Vec<f64> = (0..k).map(|j| beta[j + 1] / sd[j]).collect();
    let bias = beta[0] - (0..k).map(|j| beta[j + 1] * mean[j] / sd[j]).sum::<f64>();
    if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("open-box fit diverged".into()));
    }
    Ok(OpenBoxWeights { weights, bias })
}
