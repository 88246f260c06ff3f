//! Representation change per shift, data cartography, the BLOOD_L shift
//! sweep (train, test-id, then the shifts in config order) and prequential
//! MDL of the training set.

use std::path::PathBuf;

use blood_core::blood::blood_l;
use blood_core::eval::{cartography, mdl_prequential, rep_change, shift_sweep, uniform_blocks};
use blood_core::record::{read_jsonl, select};

use super::data::{load_split, ood_split};
use super::score::BLOOD_RAW;
use super::{json_bytes, load_dynamics, open_model, Context};
use crate::error::{CliError, Result};
use crate::layout::{read_text, write_atomic};

pub fn cmd_analyze(ctx: &Context) -> Result<Vec<PathBuf>> {
    let (cfg, layout) = (&ctx.cfg, &ctx.layout);
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: Vec<u8>| -> Result<()> {
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    for &seed in &cfg.seeds {
        let init = open_model(&layout.init_model(seed))?;
        let model = open_model(&layout.model(seed))?;
        let test = load_split(layout, "test-id", seed)?;
        for s in &cfg.dataset.shifts {
            let ood = load_split(layout, &ood_split(&s.name), seed)?;
            let report = rep_change(&init, &model, &test.features, &ood.features)?;
            put(
                layout.analysis(&format!("rep-change-{}", s.name), seed),
                json_bytes(&report)?,
            )?;
        }

        let records = cartography(&load_dynamics(layout, seed)?)?;
        put(layout.analysis("cartography", seed), json_bytes(&records)?)?;

        if cfg.wants_blood() {
            let path = layout.scores(BLOOD_RAW, seed);
            let raw = read_jsonl(read_text(&path, "score")?.as_bytes())?;
            let mut levels = Vec::new();
            let names = ["train".to_string(), "test-id".to_string()]
                .into_iter()
                .chain(cfg.dataset.shifts.iter().map(|s| ood_split(&s.name)));
            for name in names {
                let scores = select(&raw, BLOOD_RAW, &name)
                    .iter()
                    .map(|r| blood_l(r.per_layer.as_deref().unwrap_or_default()))
                    .collect::<blood_core::Result<Vec<f64>>>()?;
                if scores.is_empty() {
                    return Err(CliError::MissingArtifact {
                        path: path.clone(),
                        producer: "score",
                    });
                }
                levels.push((name, scores));
            }
            put(
                layout.analysis("shift-sweep", seed),
                json_bytes(&shift_sweep(&levels)?)?,
            )?;
        }

        let blocks = cfg.analyze.mdl_blocks;
        if blocks >= 2 {
            let train = load_split(layout, "train", seed)?;
            let (xs, ys) = train.labelled();
            let size = xs.len() / blocks;
            if size == 0 {
                return Err(CliError::Config(format!(
                    "analyze.mdl_blocks = {blocks} exceeds the {} training instances",
                    xs.len()
                )));
            }
            let factory = || cfg.model.build(train.dim, train.num_classes, seed);
            let report = mdl_prequential(
                &xs,
                &ys,
                train.num_classes,
                factory,
                &uniform_blocks(blocks, size),
                &cfg.train_config(seed),
            )?;
            put(layout.analysis("mdl", seed), json_bytes(&report)?)?;
        }
    }
    Ok(written)
}
