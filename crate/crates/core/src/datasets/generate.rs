use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{domain, normal, stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Far,
    Semantic,
    Background,
}

impl std::str::FromStr for ShiftKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "far" => Ok(ShiftKind::Far),
            "semantic" => Ok(ShiftKind::Semantic),
            "background" => Ok(ShiftKind::Background),
            other => Err(format!("unknown shift kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    pub degree: f64,
    pub seed: u64,
}

/// Class means `separation/√2 · (e_c − 𝟏/C)`, zero-padded to `dim`. Every
/// pair of means is exactly `separation` apart.
pub fn class_means(classes: usize, dim: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if dim < classes {
        return Err(Error::invalid(format!(
            "dimension {dim} is smaller than the class count {classes}"
        )));
    }
    let s = separation / std::f64::consts::SQRT_2;
    Ok((0..classes)
        .map(|c| {
            (0..dim)
                .map(|j| match j {
                    j if j >= classes => 0.0,
                    j if j == c => s * (1.0 - 1.0 / classes as f64),
                    _ => -s / classes as f64,
                })
                .collect()
        })
        .collect())
}

/// `n_per_class` unit-covariance Gaussian instances per class, tagged `split`.
/// Each split draws from its own stream, so train and test never coincide.
pub fn make_gaussian_split(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    let means = class_means(classes, dim, separation)?;
    let mut rng = stream(seed, &[domain::DATA, split.code()]);
    let mut ds = Dataset::new(dim, classes);
    ds.metadata.insert("generator".into(), "gaussian".into());
    ds.metadata.insert("separation".into(), separation.to_string());
    ds.metadata.insert("seed".into(), seed.to_string());
    for (c, mu) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            let x = mu.iter().map(|m| m + normal(&mut rng)).collect();
            ds.push(Tensor::vector(x), Some(c), split)?;
        }
    }
    Ok(ds)
}

/// Training split of `C` Gaussian classes.
pub fn make_gaussian_classes(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    make_gaussian_split(classes, dim, n_per_class, separation, seed, Split::Train)
}

fn check_degree(degree: f64) -> Result<()> {
    if !(degree >= 0.0 && degree.is_finite()) {
        return Err(Error::invalid(format!(
            "shift degree must be finite and ≥ 0, got {degree}"
        )));
    }
    Ok(())
}

/// `n` unlabelled instances: a random ID class mean, displaced by `degree`
/// along one random unit direction (fixed per seed), with covariance
/// `(1 + min(degree, 1))·I`. Degree 0 reproduces the ID distribution.
/// Samples are keyed by the source split as well, so OOD sets built from
/// the validation and test splits share the direction but not the draws.
pub fn make_far_ood(id: &Dataset, degree: f64, n: usize, seed: u64) -> Result<Dataset> {
    check_degree(degree)?;
    let separation: f64 = id.meta("separation")?;
    let means = class_means(id.num_classes, id.dim, separation)?;
    let mut dir_rng = stream(seed, &[domain::DATA, 0xFA2, 0]);
    let mut u: Vec<f64> = (0..id.dim).map(|_| normal(&mut dir_rng)).collect();
    let norm = crate::tensor::norm(&u);
    u.iter_mut().for_each(|v| *v /= norm);
    let sd = (1.0 + degree.min(1.0)).sqrt();

    let source = id.splits.first().map_or(u64::MAX, |s| s.code());
    let mut rng = stream(seed, &[domain::DATA, 0xFA2, 1, degree.to_bits(), source]);
    let mut ds = Dataset::new(id.dim, id.num_classes);
    ds.metadata = id.metadata.clone();
    ds.metadata.insert("shift".into(), "far".into());
    ds.metadata.insert("degree".into(), degree.to_string());
    ds.metadata.insert("shift_seed".into(), seed.to_string());
    for _ in 0..n {
        let c = rng.random_range(0..id.num_classes);
        let x = (0..id.dim)
            .map(|j| means[c][j] + degree * u[j] + sd * normal(&mut rng))
            .collect();
        ds.push(Tensor::vector(x), None, Split::Ood)?;
    }
    Ok(ds)
}

/// Even classes stay ID (relabelled `c/2`); odd-class instances from the
/// evaluation splits become unlabelled Near-OOD. Odd-class training and
/// validation instances are dropped.
pub fn make_semantic_split(ds: &Dataset) -> Result<(Dataset, Dataset)> {
    if ds.num_classes < 4 {
        return Err(Error::invalid(format!(
            "semantic split needs at least 4 classes, got {}",
            ds.num_classes
        )));
    }
    let id_classes = ds.num_classes.div_ceil(2);
    let mut id = Dataset::new(ds.dim, id_classes);
    let mut ood = Dataset::new(ds.dim, id_classes);
    id.metadata = ds.metadata.clone();
    id.metadata.insert("shift".into(), "semantic".into());
    ood.metadata = id.metadata.clone();
    for i in 0..ds.len() {
        let x = ds.features[i].clone();
        match ds.labels[i] {
            Some(c) if c % 2 == 0 => id.push(x, Some(c / 2), ds.splits[i])?,
            Some(_) if matches!(ds.splits[i], Split::TestId | Split::Ood) => ood.push(x, None, Split::Ood)?,
            _ => {}
        }
    }
    Ok((id, ood))
}

/// Same labels, covariates mapped by `x ↦ (I + degree·R) x + degree·b` with a
/// seeded random `R` (entries 𝒩(0, 1/d)) and `b` (entries 𝒩(0, 1/d)).
/// Instances are tagged OOD but keep their class.
pub fn make_background_shift(id: &Dataset, degree: f64, seed: u64) -> Result<Dataset> {
    check_degree(degree)?;
    let d = id.dim;
    let mut rng = stream(seed, &[domain::DATA, 0xBAC]);
    let scale = 1.0 / (d as f64).sqrt();
    let r: Vec<f64> = (0..d * d).map(|_| scale * normal(&mut rng)).collect();
    let b: Vec<f64> = (0..d).map(|_| scale * normal(&mut rng)).collect();
    let mut ds = Dataset::new(d, id.num_classes);
    ds.metadata = id.metadata.clone();
    ds.metadata.insert("shift".into(), "background".into());
    ds.metadata.insert("degree".into(), degree.to_string());
    ds.metadata.insert("shift_seed".into(), seed.to_string());
    for i in 0..id.len() {
        let x = id.features[i].data();
        let y = (0..d)
            .map(|a| {
                let rx: f64 = (0..d).map(|k| r[a * d + k] * x[k]).sum();
                x[a] + degree * (rx + b[a])
            })
            .collect();
        ds.push(Tensor::vector(y), id.labels[i], Split::Ood)?;
    }
    Ok(ds)
}

/// Keeps classes `a` and `b`, relabelled to 0 and 1.
pub fn simplify_to_two_classes(ds: &Dataset, a: usize, b: usize) -> Result<Dataset> {
    if a == b {
        return Err(Error::invalid("the two retained classes must differ"));
    }
    for c in [a, b] {
        if c >= ds.num_classes {
            return Err(Error::LabelOutOfRange {
                label: c,
                classes: ds.num_classes,
            });
        }
    }
    let mut out = Dataset::new(ds.dim, 2);
    out.metadata = ds.metadata.clone();
    out.metadata
        .insert("simplified_from".into(), format!("{}:{a},{b}", ds.num_classes));
    for i in 0..ds.len() {
        let label = match ds.labels[i] {
            Some(c) if c == a => 0,
            Some(c) if c == b => 1,
            _ => continue,
        };
        out.push(ds.features[i].clone(), Some(label), ds.splits[i])?;
    }
    Ok(out)
}

/// Uniform subsample of `target` instances without replacement, in the
/// sampled order.
pub fn subsample_ood_to_test_size(ood: &Dataset, target: usize, seed: u64) -> Result<Dataset> {
    if ood.len() < target {
        return Err(Error::invalid(format!(
            "OOD set has {} instances, fewer than the target {target}",
            ood.len()
        )));
    }
    let mut rng = stream(seed, &[domain::SUBSAMPLE]);
    let picked = sample(&mut rng, ood.len(), target).into_vec();
    let mut out = Dataset {
        metadata: ood.metadata.clone(),
        ..Dataset::new(ood.dim, ood.num_classes)
    };
    for i in picked {
        out.features.push(ood.features[i].clone());
        out.labels.push(ood.labels[i]);
        out.splits.push(ood.splits[i]);
    }
    Ok(out)
}
