//! Detection metrics, rank statistics and the analyses built on them.

mod analysis;
mod metrics;
mod report;
mod stats;

pub use analysis::{
    cartography, mdl_prequential, rep_change, representation_distances, shift_sweep, uniform_blocks, CartographyRecord,
    LayerChange, MdlReport, RepChangeReport, ShiftSweep, SweepLevel,
};
pub use metrics::{aupr_in, auroc, cles, fpr_at_95_tpr, midranks};
pub use report::{evaluate, summary_table, EvalReport, SummaryTable, TableCell};
pub use stats::{
    mann_whitney_exact, mann_whitney_normal, mann_whitney_one_sided, mean_std, median, pearson, spearman, EXACT_LIMIT,
};
