//! The six pipeline stages. Each reads only artifacts of earlier stages and
//! writes only under the output directory; rerunning a stage with the same
//! config and seeds rewrites byte-identical files.

mod analyze;
mod data;
mod eval;
mod report;
mod score;

use std::path::PathBuf;

use blood_core::detectors::train_ensemble;
use blood_core::network::{encode_model, load_model, train, NetworkModel, TrainingDynamics};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::layout::{read_text, require, write_atomic, Layout};

pub use analyze::cmd_analyze;
pub use data::{cmd_generate, load_split, ood_split, val_ood_split};
pub use eval::cmd_eval;
pub use report::cmd_report;
pub use score::cmd_score;

pub struct Context {
    pub cfg: RunConfig,
    pub layout: Layout,
    /// Scoring fan-out; 0 uses every core.
    pub jobs: usize,
    pub latex: bool,
}

impl Context {
    pub fn new(cfg: RunConfig, jobs: usize, latex: bool) -> Self {
        let layout = Layout::new(cfg.out_dir.clone());
        Context {
            cfg,
            layout,
            jobs,
            latex,
        }
    }
}

pub(crate) fn save_model(path: &std::path::Path, model: &NetworkModel) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub(crate) fn open_model(path: &std::path::Path) -> Result<NetworkModel> {
    require(path, "train")?;
    Ok(load_model(path)?)
}

pub(crate) fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(blood_core::Error::from)?;
    text.push('\n');
    Ok(text.into_bytes())
}

/// Trains one model per seed from the generated training split, keeping the
/// initial parameters (for representation change) and the per-epoch
/// dynamics (for cartography). Ensemble members are trained only when
/// `ensm` is requested.
pub fn cmd_train(ctx: &Context) -> Result<Vec<PathBuf>> {
    let (cfg, layout) = (&ctx.cfg, &ctx.layout);
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let ds = load_split(layout, "train", seed)?;
        let (xs, ys) = ds.labelled();
        let init = cfg.model.build(ds.dim, ds.num_classes, seed)?;
        let tcfg = cfg.train_config(seed);
        let (model, dynamics) = train(&init, &xs, &ys, &tcfg)?;

        let path = layout.init_model(seed);
        save_model(&path, &init)?;
        written.push(path);
        let path = layout.model(seed);
        save_model(&path, &model)?;
        written.push(path);
        let path = layout.dynamics(seed);
        write_atomic(&path, dynamics.to_jsonl().as_bytes())?;
        written.push(path);

        if cfg.wants("ensm") {
            let members = train_ensemble(&init, &xs, &ys, cfg.detector.ensemble_size, &tcfg)?;
            for (k, m) in members.iter().enumerate() {
                let path = layout.member(seed, k);
                save_model(&path, m)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub(crate) fn load_dynamics(layout: &Layout, seed: u64) -> Result<TrainingDynamics> {
    Ok(TrainingDynamics::from_jsonl(&read_text(
        &layout.dynamics(seed),
        "train",
    )?)?)
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(path: &std::path::Path, producer: &'static str) -> Result<T> {
    let text = read_text(path, producer)?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(blood_core::Error::Json(e)))
}
