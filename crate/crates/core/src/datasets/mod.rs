//! Synthetic benchmarks: Gaussian classes, Far-OOD, semantic and background
//! shift, two-class simplification, and the CSV container.

mod csv;
mod generate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use self::csv::{load_csv, parse_csv, save_csv, write_csv};
pub use generate::{
    class_means, make_background_shift, make_far_ood, make_gaussian_classes, make_gaussian_split, make_semantic_split,
    simplify_to_two_classes, subsample_ood_to_test_size, ShiftKind, ShiftSpec,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Validation,
    TestId,
    Ood,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::TestId => "test-id",
            Split::Ood => "ood",
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test-id" => Ok(Split::TestId),
            "ood" => Ok(Split::Ood),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

/// Labelled (or, for OOD, possibly unlabelled) instances with split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub num_classes: usize,
    pub features: Vec<Tensor>,
    /// `None` for OOD instances without a class (written as `-1`).
    pub labels: Vec<Option<usize>>,
    pub splits: Vec<Split>,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(dim: usize, num_classes: usize) -> Self {
        Dataset {
            dim,
            num_classes,
            features: Vec::new(),
            labels: Vec::new(),
            splits: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn push(&mut self, x: Tensor, label: Option<usize>, split: Split) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::dimension("dataset instance", &[self.dim], &[x.len()]));
        }
        if let Some(c) = label {
            if c >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: c,
                    classes: self.num_classes,
                });
            }
        }
        self.features.push(x);
        self.labels.push(label);
        self.splits.push(split);
        Ok(())
    }

    /// Copy restricted to instances satisfying `keep(index)`.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let mut out = Dataset {
            metadata: self.metadata.clone(),
            ..Dataset::new(self.dim, self.num_classes)
        };
        for i in 0..self.len() {
            if keep(i) {
                out.features.push(self.features[i].clone());
                out.labels.push(self.labels[i]);
                out.splits.push(self.splits[i]);
            }
        }
        out
    }

    pub fn split(&self, split: Split) -> Dataset {
        self.filter(|i| self.splits[i] == split)
    }

    /// Features and labels of the labelled instances, for training.
    pub fn labelled(&self) -> (Vec<Tensor>, Vec<usize>) {
        self.features
            .iter()
            .zip(&self.labels)
            .filter_map(|(x, y)| y.map(|y| (x.clone(), y)))
            .unzip()
    }

    /// Appends `other`; dims and class counts must agree. Metadata of
    /// `self` wins.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::dimension("dataset concatenation", &[self.dim], &[other.dim]));
        }
        if other.num_classes != self.num_classes {
            return Err(Error::invalid(
                "cannot concatenate datasets with different class counts",
            ));
        }
        self.features.extend(other.features.iter().cloned());
        self.labels.extend(&other.labels);
        self.splits.extend(&other.splits);
        Ok(())
    }

    pub(crate) fn meta<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.metadata
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::invalid(format!("dataset metadata lacks a valid '{key}'")))
    }
}

#[cfg(test)]
mod tests;
