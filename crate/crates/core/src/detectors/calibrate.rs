//! Fitted detectors: temperature scaling and the tied-covariance
//! Mahalanobis score.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::scores::msp;
use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, softmax};

const LOG_T_BOUNDS: (f64, f64) = (-4.0, 4.0);
const GOLDEN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempFit {
    pub temperature: f64,
    /// Validation NLL at `temperature`.
    pub nll: f64,
    /// The minimiser sits on the edge of the search interval (e.g. separable
    /// data whose NLL keeps falling as `T → 0`).
    pub at_boundary: bool,
}

/// Mean negative log-likelihood of `softmax(z / T)`.
pub fn temperature_nll(logits: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    let mut total = 0.0;
    let mut scaled = Vec::new();
    for (z, &y) in logits.iter().zip(labels) {
        scaled.clear();
        scaled.extend(z.iter().map(|v| v / t));
        total += log_sum_exp(&scaled) - scaled[y];
    }
    total / logits.len() as f64
}

/// Golden-section search for the NLL-minimising temperature over
/// `ln T ∈ [−4, 4]`. NLL of scaled logits is convex in `1/T`, so the search
/// is over a unimodal function; `T = 1` is still checked so the result never
/// does worse than leaving the logits alone.
pub fn temp_fit(logits: &[Vec<f64>], labels: &[usize]) -> Result<TempFit> {
    if logits.is_empty() {
        return Err(Error::Empty("temperature scaling needs validation logits".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::dimension("validation labels", &[logits.len()], &[labels.len()]));
    }
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: z.len(),
            });
        }
    }
    let f = |s: f64| temperature_nll(logits, labels, s.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = LOG_T_BOUNDS;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let log_t = (a + b) / 2.0;
    let at_boundary = log_t - LOG_T_BOUNDS.0 < 1e-4 || LOG_T_BOUNDS.1 - log_t < 1e-4;
    let (mut temperature, mut nll) = (log_t.exp(), f(log_t));
    let nll_one = temperature_nll(logits, labels, 1.0);
    if nll_one < nll {
        temperature = 1.0;
        nll = nll_one;
    }
    Ok(TempFit {
        temperature,
        nll,
        at_boundary,
    })
}

/// `msp(softmax(z / T))`.
pub fn temp_score(logits: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let scaled: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    Ok(msp(&softmax(&scaled)))
}

/// Class means and a shared covariance `Σ + λI`, kept as its Cholesky
/// factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisFit {
    pub means: Vec<Vec<f64>>,
    pub covariance: DMatrix<f64>,
    pub ridge: f64,
    factor: DMatrix<f64>,
}

impl MahalanobisFit {
    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// Builds a fit from given moments (the ridge is added here).
    pub fn from_moments(means: Vec<Vec<f64>>, covariance: DMatrix<f64>) -> Result<Self> {
        let dim = covariance.nrows();
        if covariance.ncols() != dim || means.iter().any(|m| m.len() != dim) {
            return Err(Error::dimension(
                "Mahalanobis moments",
                &[dim, dim],
                &[covariance.nrows(), covariance.ncols()],
            ));
        }
        let ridge = 1e-6 * covariance.trace() / dim as f64;
        let regularised = &covariance + DMatrix::identity(dim, dim) * ridge;
        let factor = regularised
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("shared covariance is not positive definite".into()))?
            .l();
        Ok(MahalanobisFit {
            means,
            covariance,
            ridge,
            factor,
        })
    }
}

/// Per-class means and the covariance pooled over classes
/// (`1/N Σ_c Σ_{i∈c} (z_i − μ_c)(z_i − μ_c)ᵀ`).
pub fn mahalanobis_fit(reps: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<MahalanobisFit> {
    if reps.len() != labels.len() {
        return Err(Error::dimension("Mahalanobis labels", &[reps.len()], &[labels.len()]));
    }
    let dim = reps
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("no training representations".into()))?;
    let mut counts = vec![0usize; classes];
    let mut means = vec![vec![0.0; dim]; classes];
    for (z, &y) in reps.iter().zip(labels) {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        if z.len() != dim {
            return Err(Error::dimension("training representation", &[dim], &[z.len()]));
        }
        counts[y] += 1;
        for (m, v) in means[y].iter_mut().zip(z) {
            *m += v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(Error::invalid(format!(
            "class {c} has {} training instances, need at least 2",
            counts[c]
        )));
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for (z, &y) in reps.iter().zip(labels) {
        let d = DVector::from_iterator(dim, z.iter().zip(&means[y]).map(|(a, b)| a - b));
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov /= reps.len() as f64;
    MahalanobisFit::from_moments(means, cov)
}

/// `min_c (z − μ_c)ᵀ Σ⁻¹ (z − μ_c)` via a triangular solve per class.
pub fn mahalanobis_score(fit: &MahalanobisFit, z: &[f64]) -> Result<f64> {
    if z.len() != fit.dim() {
        return Err(Error::dimension("Mahalanobis query", &[fit.dim()], &[z.len()]));
    }
    let mut best = f64::INFINITY;
    for mu in &fit.means {
        let d = DVector::from_iterator(z.len(), z.iter().zip(mu).map(|(a, b)| a - b));
        let y = fit
            .factor
            .solve_lower_triangular(&d)
            .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        best = best.min(y.norm_squared());
    }
    Ok(best)
}
