use std::path::PathBuf;

use blood_core::eval::{evaluate, summary_table, EvalReport};
use blood_core::record::{read_jsonl, select};

use super::data::ood_split;
use super::{json_bytes, Context};
use crate::error::{CliError, Result};
use crate::layout::{read_text, write_atomic};

/// `(shift, test-id scores, OOD scores)`
type ShiftScores = (String, Vec<f64>, Vec<f64>);

/// Test-ID and per-shift OOD scores of `detector`.
fn split_scores(ctx: &Context, detector: &str, seed: u64) -> Result<Vec<ShiftScores>> {
    let path = ctx.layout.scores(detector, seed);
    let records = read_jsonl(read_text(&path, "score")?.as_bytes())?;
    let pick = |split: &str| -> Result<Vec<f64>> {
        let v: Vec<f64> = select(&records, detector, split).iter().map(|r| r.score).collect();
        if v.is_empty() {
            // a partial or stale score file
            return Err(CliError::MissingArtifact {
                path: path.clone(),
                producer: "score",
            });
        }
        Ok(v)
    };
    let id = pick("test-id")?;
    ctx.cfg
        .dataset
        .shifts
        .iter()
        .map(|s| Ok((s.name.clone(), id.clone(), pick(&ood_split(&s.name))?)))
        .collect()
}

/// One report per shift × detector × seed, then the summary table (mean
/// AUROC over seeds, best per row in bold, stars for one-sided
/// Mann-Whitney p < 0.05 against the baseline).
pub fn cmd_eval(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let mut reports: Vec<EvalReport> = Vec::new();
    for &seed in &cfg.seeds {
        for det in &cfg.detectors {
            for (shift, id, ood) in split_scores(ctx, det, seed)? {
                reports.push(evaluate(&shift, det, seed, &id, &ood)?);
            }
        }
    }
    let table = summary_table(&reports, &cfg.detectors, &cfg.baseline)?;
    let tag = cfg.seed_tag();
    let mut written = vec![ctx.layout.eval_reports(&tag), ctx.layout.eval(&tag, "md")];
    write_atomic(&written[0], &json_bytes(&reports)?)?;
    write_atomic(&written[1], table.to_markdown().as_bytes())?;
    if ctx.latex {
        let path = ctx.layout.eval(&tag, "tex");
        write_atomic(&path, table.to_latex().as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
