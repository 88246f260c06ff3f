//! Scoring. Score files are append-only JSON lines written in chunks, so an
//! interrupted run resumes at the first unscored instance and ends with the
//! same bytes as an uninterrupted one.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use blood_core::blood::{blood_l, blood_m, layer_scores, openbox_fit, openbox_score};
use blood_core::detectors::{Detector, DetectorKind, FitContext};
use blood_core::record::{read_jsonl, write_jsonl, ScoreRecord};
use blood_core::Tensor;

use super::data::{load_split, ood_split, val_ood_split};
use super::{open_model, Context};
use crate::error::{CliError, Result};
use crate::layout::{ensure_parent, write_atomic};

const CHUNK: usize = 128;

/// Detector name of the raw per-layer BLOOD file the variants derive from.
pub const BLOOD_RAW: &str = "blood";

/// Records already on disk. A trailing line without its newline is the
/// remnant of an interrupted write and is cut off.
fn read_existing(path: &Path) -> Result<Vec<ScoreRecord>> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(Vec::new());
    };
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| CliError::io(path, e))?;
        f.set_len(keep as u64).map_err(|e| CliError::io(path, e))?;
    }
    Ok(read_jsonl(&bytes[..keep])?)
}

type Scorer<'a> = dyn Fn(&Tensor, u64) -> blood_core::Result<(f64, Option<Vec<f64>>)> + Sync + 'a;

/// Scores every instance of `splits` not yet in `path`. Randomness of
/// instance `i` of split `k` is keyed by `k << 32 | i`.
fn score_file(
    path: &Path,
    detector: &str,
    seed: u64,
    splits: &[(String, Vec<Tensor>)],
    jobs: usize,
    f: &Scorer<'_>,
) -> Result<Vec<ScoreRecord>> {
    let mut records = read_existing(path)?;
    if let Some(r) = records.iter().find(|r| r.detector != detector || r.seed != seed) {
        return Err(CliError::Config(format!(
            "{} holds '{}' scores for seed {}, not '{detector}' for seed {seed}; remove it or use another --out",
            path.display(),
            r.detector,
            r.seed
        )));
    }
    let done: BTreeSet<(String, u64)> = records.iter().map(|r| (r.split.clone(), r.instance_id)).collect();
    ensure_parent(path)?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    for (k, (split, xs)) in splits.iter().enumerate() {
        let pending: Vec<usize> = (0..xs.len())
            .filter(|&i| !done.contains(&(split.clone(), i as u64)))
            .collect();
        for chunk in pending.chunks(CHUNK) {
            let out = blood_core::parallel::map(jobs, chunk.len(), |j| {
                let i = chunk[j];
                f(&xs[i], ((k as u64) << 32) | i as u64)
            })?;
            let new: Vec<ScoreRecord> = chunk
                .iter()
                .zip(out)
                .map(|(&i, (score, per_layer))| ScoreRecord {
                    instance_id: i as u64,
                    detector: detector.to_string(),
                    split: split.clone(),
                    per_layer,
                    score,
                    seed,
                })
                .collect();
            write_jsonl(&mut file, &new)?;
            file.flush().map_err(|e| CliError::io(path, e))?;
            records.extend(new);
        }
    }
    Ok(records)
}

fn write_records(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, records)?;
    write_atomic(path, &buf)
}

/// Per-layer BLOOD scores on every split, then the three variants: mean,
/// last layer, and the open-box weighting fitted on validation ID against
/// the union of the validation-side OOD sets.
fn score_blood(ctx: &Context, seed: u64, written: &mut Vec<PathBuf>) -> Result<()> {
    let (cfg, layout) = (&ctx.cfg, &ctx.layout);
    let model = open_model(&layout.model(seed))?;
    let mut splits = Vec::new();
    for name in ["train", "validation", "test-id"] {
        splits.push((name.to_string(), load_split(layout, name, seed)?.features));
    }
    for s in &cfg.dataset.shifts {
        for name in [ood_split(&s.name), val_ood_split(&s.name)] {
            let xs = load_split(layout, &name, seed)?.features;
            splits.push((name, xs));
        }
    }
    let bcfg = cfg.blood_config(seed);
    let raw_path = layout.scores(BLOOD_RAW, seed);
    let raw = score_file(&raw_path, BLOOD_RAW, seed, &splits, ctx.jobs, &|x, id| {
        let s = layer_scores(&model, x, id, &bcfg)?;
        Ok((blood_m(&s.values)?, Some(s.values)))
    })?;
    written.push(raw_path);

    let per_layer = |r: &ScoreRecord| r.per_layer.clone().unwrap_or_default();
    let derive = |name: &str, records: Vec<ScoreRecord>| -> Result<PathBuf> {
        let path = layout.scores(name, seed);
        write_records(&path, &records)?;
        Ok(path)
    };
    let relabel = |r: &ScoreRecord, detector: &str, score: f64| ScoreRecord {
        detector: detector.to_string(),
        per_layer: None,
        score,
        ..r.clone()
    };
    if cfg.wants("blood_m") {
        let recs = raw
            .iter()
            .map(|r| Ok(relabel(r, "blood_m", blood_m(&per_layer(r))?)))
            .collect::<Result<Vec<_>>>()?;
        written.push(derive("blood_m", recs)?);
    }
    if cfg.wants("blood_l") {
        let recs = raw
            .iter()
            .map(|r| Ok(relabel(r, "blood_l", blood_l(&per_layer(r))?)))
            .collect::<Result<Vec<_>>>()?;
        written.push(derive("blood_l", recs)?);
    }
    if cfg.wants("blood_ob") {
        let (mut feats, mut is_ood) = (Vec::new(), Vec::new());
        for r in &raw {
            let ood = r.split.starts_with("val-ood-");
            if ood || r.split == "validation" {
                feats.push(per_layer(r));
                is_ood.push(ood);
            }
        }
        let weights = openbox_fit(&feats, &is_ood)?;
        let recs = raw
            .iter()
            .filter(|r| r.split == "test-id" || r.split.starts_with("ood-"))
            .map(|r| Ok(relabel(r, "blood_ob", openbox_score(&weights, &per_layer(r))?)))
            .collect::<Result<Vec<_>>>()?;
        written.push(derive("blood_ob", recs)?);
    }
    Ok(())
}

/// Training representations and validation logits for the open-box
/// detectors, plus ensemble members when `ensm` is requested.
fn fit_context(ctx: &Context, seed: u64, model: &blood_core::network::NetworkModel) -> Result<FitContext> {
    let train = load_split(&ctx.layout, "train", seed)?.labelled();
    let val = load_split(&ctx.layout, "validation", seed)?.labelled();
    let mut fc = FitContext::from_model(model, (&train.0, &train.1), (&val.0, &val.1))?;
    if ctx.cfg.wants("ensm") {
        let members = (0..ctx.cfg.detector.ensemble_size)
            .map(|k| open_model(&ctx.layout.member(seed, k)))
            .collect::<Result<Vec<_>>>()?;
        fc.members = Some(members);
    }
    Ok(fc)
}

pub fn cmd_score(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let kinds: Vec<DetectorKind> = cfg.detectors.iter().filter_map(|d| d.parse().ok()).collect();
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        if cfg.wants_blood() {
            score_blood(ctx, seed, &mut written)?;
        }
        if kinds.is_empty() {
            continue;
        }
        let model = open_model(&ctx.layout.model(seed))?;
        let mut splits = vec![(
            "test-id".to_string(),
            load_split(&ctx.layout, "test-id", seed)?.features,
        )];
        for s in &cfg.dataset.shifts {
            let name = ood_split(&s.name);
            splits.push((name.clone(), load_split(&ctx.layout, &name, seed)?.features));
        }
        let fc = if kinds.iter().any(|k| k.is_open_box()) {
            fit_context(ctx, seed, &model)?
        } else {
            FitContext::default()
        };
        let params = cfg.detector_params(seed);
        for kind in kinds.iter().copied() {
            let det = Detector::fit(kind, &params, &fc, model.head().classes())?;
            let path = ctx.layout.scores(kind.name(), seed);
            score_file(&path, kind.name(), seed, &splits, ctx.jobs, &|x, id| {
                Ok((det.score(&model, x, id)?, None))
            })?;
            written.push(path);
        }
    }
    Ok(written)
}
