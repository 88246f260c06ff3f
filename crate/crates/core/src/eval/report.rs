//! Per-pair evaluation reports and the detectors × datasets summary table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{aupr_in, auroc, fpr_at_95_tpr};
use super::stats::mann_whitney_one_sided;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub detector: String,
    pub seed: u64,
    pub n_id: usize,
    pub n_ood: usize,
    pub auroc: f64,
    pub aupr_in: f64,
    pub fpr_at_95_tpr: f64,
}

pub fn evaluate(dataset: &str, detector: &str, seed: u64, id: &[f64], ood: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        dataset: dataset.to_string(),
        detector: detector.to_string(),
        seed,
        n_id: id.len(),
        n_ood: ood.len(),
        auroc: auroc(id, ood)?,
        aupr_in: aupr_in(id, ood)?,
        fpr_at_95_tpr: fpr_at_95_tpr(id, ood)?,
    })
}

/// One cell of the summary: AUROC over seeds and the significance test
/// against the baseline detector of the same row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub mean_auroc: f64,
    pub seed_aurocs: Vec<f64>,
    /// One-sided Mann-Whitney p-value of "this detector's seed AUROCs exceed
    /// the baseline's"; `None` for the baseline itself.
    pub p_value: Option<f64>,
    pub best: bool,
}

impl TableCell {
    pub fn significant(&self) -> bool {
        self.p_value.is_some_and(|p| p < 0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub detectors: Vec<String>,
    pub baseline: String,
    /// dataset → detector → cell
    pub rows: BTreeMap<String, BTreeMap<String, TableCell>>,
}

/// Groups reports into rows (datasets) and columns (detectors, in the given
/// order). The best mean AUROC of each row is flagged; ties all flagged.
pub fn summary_table(reports: &[EvalReport], detectors: &[String], baseline: &str) -> Result<SummaryTable> {
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in reports {
        grouped
            .entry(r.dataset.clone())
            .or_default()
            .entry(r.detector.clone())
            .or_default()
            .push(r.auroc);
    }
    let mut rows = BTreeMap::new();
    for (dataset, by_det) in grouped {
        let base = by_det.get(baseline);
        let mut cells = BTreeMap::new();
        for det in detectors {
            let Some(aurocs) = by_det.get(det) else { continue };
            let p_value = match base {
                Some(b) if det != baseline => Some(mann_whitney_one_sided(aurocs, b)?),
                _ => None,
            };
            cells.insert(
                det.clone(),
                TableCell {
                    mean_auroc: aurocs.iter().sum::<f64>() / aurocs.len() as f64,
                    seed_aurocs: aurocs.clone(),
                    p_value,
                    best: false,
                },
            );
        }
        if cells.is_empty() {
            return Err(Error::Empty(format!(
                "no requested detector has scores for dataset '{dataset}'"
            )));
        }
        let best = cells.values().map(|c| c.mean_auroc).fold(f64::NEG_INFINITY, f64::max);
        for c in cells.values_mut() {
            c.best = c.mean_auroc == best;
        }
        rows.insert(dataset, cells);
    }
    Ok(SummaryTable {
        detectors: detectors.to_vec(),
        baseline: baseline.to_string(),
        rows,
    })
}

impl SummaryTable {
    fn cell_text(&self, cell: Option<&TableCell>, bold: (&str, &str), star: &str) -> String {
        match cell {
            None => "–".to_string(),
            Some(c) => {
                let mut s = format!("{:.3}", c.mean_auroc);
                if c.best {
                    s = format!("{}{s}{}", bold.0, bold.1);
                }
                if c.significant() {
                    s.push_str(star);
                }
                s
            }
        }
    }

    /// Markdown table: mean AUROC over seeds, best per row in bold, `*`
    /// when the one-sided Mann-Whitney test against the baseline gives
    /// p < 0.05.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("| dataset | {} |\n", self.detectors.join(" | "));
        out.push_str(&format!("|---|{}\n", "---:|".repeat(self.detectors.len())));
        for (dataset, cells) in &self.rows {
            let row: Vec<String> = self
                .detectors
                .iter()
                .map(|d| self.cell_text(cells.get(d), ("**", "**"), "\\*"))
                .collect();
            out.push_str(&format!("| {dataset} | {} |\n", row.join(" | ")));
        }
        out.push_str(&format!(
            "\nMean AUROC over seeds. Bold: best in row. \\*: one-sided Mann-Whitney U test against {} over seed AUROCs, p < 0.05.\n",
            self.baseline
        ));
        out
    }

    pub fn to_latex(&self) -> String {
        let esc = |s: &str| s.replace('_', "\\_");
        let mut out = format!(
            "\\begin{{tabular}}{{l{}}}\n\\toprule\n",
            "r".repeat(self.detectors.len())
        );
        let header: Vec<String> = self.detectors.iter().map(|d| esc(d)).collect();
        out.push_str(&format!("dataset & {} \\\\\n\\midrule\n", header.join(" & ")));
        for (dataset, cells) in &self.rows {
            let row: Vec<String> = self
                .detectors
                .iter()
                .map(|d| self.cell_text(cells.get(d), ("\\textbf{", "}"), "$^{*}$"))
                .collect();
            out.push_str(&format!("{} & {} \\\\\n", esc(dataset), row.join(" & ")));
        }
        out.push_str("\\bottomrule\n\\end{tabular}\n");
        out
    }
}
