//! A single Markdown report over all seeds: the detection table, every
//! metric with its spread, and summaries of the analyses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use blood_core::eval::{
    mean_std, summary_table, CartographyRecord, EvalReport, MdlReport, RepChangeReport, ShiftSweep,
};

use super::{parse_json, Context};
use crate::error::Result;
use crate::layout::write_atomic;

fn pm(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.3} ± {s:.3}")
}

pub fn cmd_report(ctx: &Context) -> Result<Vec<PathBuf>> {
    let (cfg, layout) = (&ctx.cfg, &ctx.layout);
    let tag = cfg.seed_tag();
    let reports: Vec<EvalReport> = parse_json(&layout.eval_reports(&tag), "eval")?;
    let table = summary_table(&reports, &cfg.detectors, &cfg.baseline)?;
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();

    let mut out = String::new();
    let _ = writeln!(out, "# OOD detection report (seeds {})\n", seeds.join(", "));
    let _ = writeln!(out, "## Detection\n\n{}", table.to_markdown());

    let _ = writeln!(out, "## All metrics (mean ± std over seeds)\n");
    let _ = writeln!(
        out,
        "| dataset | detector | AUROC | AUPR-IN | FPR@95 |\n|---|---|---:|---:|---:|"
    );
    let mut grouped: BTreeMap<(&str, usize), Vec<&EvalReport>> = BTreeMap::new();
    for r in &reports {
        let col = cfg
            .detectors
            .iter()
            .position(|d| *d == r.detector)
            .unwrap_or(usize::MAX);
        grouped.entry((r.dataset.as_str(), col)).or_default().push(r);
    }
    for ((dataset, _), rs) in &grouped {
        let col = |f: fn(&EvalReport) -> f64| pm(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "| {dataset} | {} | {} | {} | {} |",
            rs[0].detector,
            col(|r| r.auroc),
            col(|r| r.aupr_in),
            col(|r| r.fpr_at_95_tpr)
        );
    }

    let _ = writeln!(out, "\n## Representation change\n");
    let _ = writeln!(
        out,
        "CLES is P(ID change > OOD change) of ‖h_init − h_trained‖, averaged over layers and at the last layer.\n"
    );
    let _ = writeln!(out, "| shift | seed | CLES mean | CLES last |\n|---|---|---:|---:|");
    for s in &cfg.dataset.shifts {
        for &seed in &cfg.seeds {
            let r: RepChangeReport = parse_json(&layout.analysis(&format!("rep-change-{}", s.name), seed), "analyze")?;
            let _ = writeln!(out, "| {} | {seed} | {:.3} | {:.3} |", s.name, r.cles_mean, r.cles_last);
        }
    }

    if cfg.wants_blood() {
        let _ = writeln!(out, "\n## Shift sweep (median BLOOD_L)\n");
        let mut header = false;
        for &seed in &cfg.seeds {
            let sweep: ShiftSweep = parse_json(&layout.analysis("shift-sweep", seed), "analyze")?;
            if !header {
                let names: Vec<&str> = sweep.levels.iter().map(|l| l.name.as_str()).collect();
                let _ = writeln!(out, "| seed | {} | increasing |", names.join(" | "));
                let _ = writeln!(out, "|---|{}---|", "---:|".repeat(names.len()));
                header = true;
            }
            let medians: Vec<String> = sweep.levels.iter().map(|l| format!("{:.4e}", l.median)).collect();
            let _ = writeln!(
                out,
                "| {seed} | {} | {} |",
                medians.join(" | "),
                sweep.strictly_increasing
            );
        }
    }

    if cfg.analyze.mdl_blocks >= 2 {
        let _ = writeln!(
            out,
            "\n## Prequential MDL\n\n| seed | codelength (nats) | per instance |\n|---|---:|---:|"
        );
        for &seed in &cfg.seeds {
            let r: MdlReport = parse_json(&layout.analysis("mdl", seed), "analyze")?;
            let n: usize = r.block_sizes.iter().sum();
            let _ = writeln!(out, "| {seed} | {:.2} | {:.4} |", r.codelength, r.codelength / n as f64);
        }
    }

    let _ = writeln!(
        out,
        "\n## Training dynamics\n\n| seed | confidence | variability | correctness |\n|---|---:|---:|---:|"
    );
    for &seed in &cfg.seeds {
        let recs: Vec<CartographyRecord> = parse_json(&layout.analysis("cartography", seed), "analyze")?;
        let mean = |f: fn(&CartographyRecord) -> f64| mean_std(&recs.iter().map(f).collect::<Vec<_>>()).0;
        let _ = writeln!(
            out,
            "| {seed} | {:.3} | {:.3} | {:.3} |",
            mean(|r| r.confidence),
            mean(|r| r.variability),
            mean(|r| r.correctness)
        );
    }

    let mut written = vec![layout.report(&tag, "md")];
    write_atomic(&written[0], out.as_bytes())?;
    if ctx.latex {
        let path = layout.report(&tag, "tex");
        write_atomic(&path, table.to_latex().as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
