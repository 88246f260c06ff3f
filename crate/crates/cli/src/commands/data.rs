use std::path::PathBuf;

use blood_core::datasets::{
    load_csv, make_background_shift, make_far_ood, make_gaussian_split, make_semantic_split, write_csv, Dataset,
    ShiftKind, Split,
};

use super::Context;
use crate::config::RunConfig;
use crate::error::Result;
use crate::layout::{require, write_atomic, Layout};

pub fn ood_split(shift: &str) -> String {
    format!("ood-{shift}")
}

pub fn val_ood_split(shift: &str) -> String {
    format!("val-ood-{shift}")
}

pub fn load_split(layout: &Layout, split: &str, seed: u64) -> Result<Dataset> {
    let path = layout.data(split, seed);
    require(&path, "generate")?;
    Ok(load_csv(&path)?)
}

/// Odd-class instances of `ds` as unlabelled OOD over the even-class task.
fn odd_classes_as_ood(ds: &Dataset) -> Result<Dataset> {
    let mut out = Dataset::new(ds.dim, ds.num_classes.div_ceil(2));
    out.metadata = ds.metadata.clone();
    out.metadata.insert("shift".into(), "semantic".into());
    for (x, y) in ds.features.iter().zip(&ds.labels) {
        if y.is_some_and(|c| c % 2 == 1) {
            out.push(x.clone(), None, Split::Ood)?;
        }
    }
    Ok(out)
}

/// Every split of one seed, in a fixed order: train, validation, test-id,
/// then a test-side and a validation-side OOD set per shift.
pub fn build_splits(cfg: &RunConfig, seed: u64) -> Result<Vec<(String, Dataset)>> {
    let d = &cfg.dataset;
    let gen = |n, split| make_gaussian_split(d.classes, d.dim, n, d.separation, seed, split);
    let mut train = gen(d.train_per_class, Split::Train)?;
    let mut val = gen(d.validation_per_class, Split::Validation)?;
    let mut test = gen(d.test_per_class, Split::TestId)?;
    let mut semantic = None;
    if cfg.semantic() {
        let val_ood = odd_classes_as_ood(&val)?;
        let (test_id, test_ood) = make_semantic_split(&test)?;
        train = make_semantic_split(&train)?.0;
        val = make_semantic_split(&val)?.0;
        test = test_id;
        semantic = Some((test_ood, val_ood));
    }
    let mut out = vec![
        ("train".to_string(), train),
        ("validation".to_string(), val.clone()),
        ("test-id".to_string(), test.clone()),
    ];
    for s in &d.shifts {
        let (ood, val_ood) = match s.kind {
            ShiftKind::Far => (
                make_far_ood(&test, s.degree, test.len(), seed)?,
                make_far_ood(&val, s.degree, val.len(), seed)?,
            ),
            ShiftKind::Background => (
                make_background_shift(&test, s.degree, seed)?,
                make_background_shift(&val, s.degree, seed)?,
            ),
            ShiftKind::Semantic => semantic.clone().expect("semantic split built above"),
        };
        out.push((ood_split(&s.name), ood));
        out.push((val_ood_split(&s.name), val_ood));
    }
    Ok(out)
}

pub fn cmd_generate(ctx: &Context) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &seed in &ctx.cfg.seeds {
        for (name, ds) in build_splits(&ctx.cfg, seed)? {
            let path = ctx.layout.data(&name, seed);
            write_atomic(&path, write_csv(&ds).as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}
