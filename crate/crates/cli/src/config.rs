//! Run configuration, read from TOML. Every field has a default, so an
//! empty file (or no file) is a valid configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use blood_core::autodiff::Activation;
use blood_core::blood::BloodConfig;
use blood_core::datasets::ShiftKind;
use blood_core::detectors::{DetectorKind, DetectorParams};
use blood_core::network::{MlpSpec, NetworkModel, TrainConfig, TransformerSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// BLOOD variants scored alongside the ten comparison detectors.
pub const BLOOD_DETECTORS: [&str; 3] = ["blood_m", "blood_l", "blood_ob"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Column order of the report table.
    pub detectors: Vec<String>,
    /// Significance stars compare every detector against this one.
    pub baseline: String,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    /// `seed` is replaced by the run seed.
    pub train: TrainConfig,
    /// `seed` is replaced by the run seed.
    pub blood: BloodConfig,
    /// `seed` is replaced by the run seed.
    pub detector: DetectorParams,
    pub analyze: AnalyzeSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut detectors: Vec<String> = BLOOD_DETECTORS.iter().map(|s| s.to_string()).collect();
        detectors.extend(DetectorKind::ALL.iter().map(|k| k.name().to_string()));
        RunConfig {
            out_dir: PathBuf::from("runs/default"),
            seeds: vec![0, 1, 2, 3, 4],
            detectors,
            baseline: "msp".into(),
            dataset: DatasetSpec::default(),
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            blood: BloodConfig::default(),
            detector: DetectorParams::default(),
            analyze: AnalyzeSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub separation: f64,
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
    /// One OOD benchmark each. A `semantic` entry turns the ID task into
    /// the even classes and holds the odd ones out.
    pub shifts: Vec<ShiftEntry>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 4,
            dim: 16,
            separation: 4.0,
            train_per_class: 100,
            validation_per_class: 50,
            test_per_class: 50,
            shifts: vec![ShiftEntry {
                name: "far-8".into(),
                kind: ShiftKind::Far,
                degree: 8.0,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftEntry {
    pub name: String,
    pub kind: ShiftKind,
    #[serde(default)]
    pub degree: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArch {
    Mlp,
    MiniTransformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: ModelArch,
    pub width: usize,
    /// Dense layers (MLP) or encoder blocks (transformer), head excluded.
    pub depth: usize,
    pub activation: Activation,
    /// Whether the head has a hidden dense sublayer before the projection.
    pub head_hidden: bool,
    pub head_activation: Activation,
    pub token_dim: usize,
    pub ffn_hidden: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            arch: ModelArch::Mlp,
            width: 64,
            depth: 3,
            activation: Activation::Gelu,
            head_hidden: true,
            head_activation: Activation::Gelu,
            token_dim: 4,
            ffn_hidden: 64,
        }
    }
}

impl ModelSpec {
    pub fn build(&self, input_dim: usize, classes: usize, seed: u64) -> blood_core::Result<NetworkModel> {
        let head = self.head_hidden.then_some(self.head_activation);
        match self.arch {
            ModelArch::Mlp => NetworkModel::mlp(
                &MlpSpec {
                    activation: self.activation,
                    head_activation: head,
                    ..MlpSpec::new(input_dim, self.width, self.depth, classes)
                },
                seed,
            ),
            ModelArch::MiniTransformer => NetworkModel::mini_transformer(
                &TransformerSpec {
                    width: self.width,
                    layers: self.depth,
                    ffn_hidden: self.ffn_hidden,
                    head_activation: head,
                    ..TransformerSpec::new(input_dim, self.token_dim, classes)
                },
                seed,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSpec {
    /// Prequential MDL block count over the training set; below 2 skips MDL.
    pub mdl_blocks: usize,
}

impl Default for AnalyzeSpec {
    fn default() -> Self {
        AnalyzeSpec { mdl_blocks: 8 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.detectors.is_empty() {
            return bad("detectors must not be empty".into());
        }
        let mut seen = BTreeSet::new();
        for d in &self.detectors {
            if !BLOOD_DETECTORS.contains(&d.as_str()) && d.parse::<DetectorKind>().is_err() {
                return bad(format!("unknown detector '{d}'"));
            }
            if !seen.insert(d) {
                return bad(format!("detector '{d}' listed twice"));
            }
        }
        if !self.detectors.contains(&self.baseline) {
            return bad(format!("baseline '{}' is not among the detectors", self.baseline));
        }
        let ds = &self.dataset;
        if ds.classes < 2 || ds.dim < ds.classes {
            return bad(format!(
                "need 2 ≤ classes ≤ dim, got {} classes in {} dims",
                ds.classes, ds.dim
            ));
        }
        if ds.train_per_class < 2 || ds.validation_per_class == 0 || ds.test_per_class == 0 {
            return bad("per-class sizes must be positive (train at least 2)".into());
        }
        if ds.shifts.is_empty() {
            return bad("at least one shift is needed".into());
        }
        let mut names = BTreeSet::new();
        for s in &ds.shifts {
            if s.name.is_empty()
                || !s
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return bad(format!("shift name '{}' must be nonempty [A-Za-z0-9_-]", s.name));
            }
            if !names.insert(&s.name) {
                return bad(format!("shift '{}' listed twice", s.name));
            }
            if !(s.degree >= 0.0 && s.degree.is_finite()) {
                return bad(format!("shift '{}' has degree {}", s.name, s.degree));
            }
        }
        if ds.shifts.iter().filter(|s| s.kind == ShiftKind::Semantic).count() > 1 {
            return bad("at most one semantic shift".into());
        }
        if self.semantic() && ds.classes < 4 {
            return bad("a semantic shift needs at least 4 classes".into());
        }
        if self.model.width == 0 || self.model.depth == 0 {
            return bad("model width and depth must be positive".into());
        }
        if self.blood.m_samples == 0 {
            return bad("blood.m_samples must be positive".into());
        }
        let p = &self.detector;
        if !(0.0..1.0).contains(&p.ash_prune) || !(0.0..1.0).contains(&p.mc_rate) {
            return bad("detector.ash_prune and detector.mc_rate must lie in [0, 1)".into());
        }
        if !(0.0..=100.0).contains(&p.react_percentile) {
            return bad("detector.react_percentile must lie in [0, 100]".into());
        }
        if p.mc_passes == 0 || p.ensemble_size == 0 {
            return bad("detector.mc_passes and detector.ensemble_size must be positive".into());
        }
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))
    }

    pub fn semantic(&self) -> bool {
        self.dataset.shifts.iter().any(|s| s.kind == ShiftKind::Semantic)
    }

    /// Classes the model is trained on.
    pub fn id_classes(&self) -> usize {
        if self.semantic() {
            self.dataset.classes.div_ceil(2)
        } else {
            self.dataset.classes
        }
    }

    pub fn wants(&self, detector: &str) -> bool {
        self.detectors.iter().any(|d| d == detector)
    }

    pub fn wants_blood(&self) -> bool {
        BLOOD_DETECTORS.iter().any(|d| self.wants(d))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    pub fn blood_config(&self, seed: u64) -> BloodConfig {
        BloodConfig {
            seed,
            ..self.blood.clone()
        }
    }

    pub fn detector_params(&self, seed: u64) -> DetectorParams {
        DetectorParams {
            seed,
            ..self.detector.clone()
        }
    }

    /// Filename tag for outputs that aggregate over seeds.
    pub fn seed_tag(&self) -> String {
        let s: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!("seeds-{}", s.join("-"))
    }
}
