//! Pilot for the extreme-separation pair used by the detector orientation
//! check: AUROC of every detector, per seed.
//!
//! ```text
//! cargo run --release -p blood-core --example orientation -- [classes] [dim] [sep] [degree] [tanh]
//! ```

use blood_core::autodiff::Activation;
use blood_core::datasets::{make_far_ood, make_gaussian_classes, make_gaussian_split, Split};
use blood_core::detectors::{train_ensemble, Detector, DetectorKind, DetectorParams, FitContext};
use blood_core::eval::auroc;
use blood_core::network::{train, MlpSpec, NetworkModel, TrainConfig};

fn main() -> blood_core::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let (classes, dim, sep, degree) = (get(0, 2.0) as usize, get(1, 8.0) as usize, get(2, 2.0), get(3, 10.0));
    for seed in 0..5 {
        let train_ds = make_gaussian_classes(classes, dim, 100, sep, seed)?;
        let val = make_gaussian_split(classes, dim, 50, sep, seed, Split::Validation)?;
        let test = make_gaussian_split(classes, dim, 50, sep, seed, Split::TestId)?;
        let ood = make_far_ood(&test, degree, test.len(), seed)?;
        let (xs, ys) = train_ds.labelled();
        let (vx, vy) = val.labelled();
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let mut spec = MlpSpec::new(dim, 64, 3, classes);
        if get(4, 0.0) == 1.0 {
            spec.activation = Activation::Tanh;
            spec.head_activation = Some(Activation::Tanh);
        }
        let base = NetworkModel::mlp(&spec, seed)?;
        let (model, _) = train(&base, &xs, &ys, &cfg)?;
        let mut ctx = FitContext::from_model(&model, (&xs, &ys), (&vx, &vy))?;
        ctx.members = Some(train_ensemble(&base, &xs, &ys, 5, &cfg)?);
        let mut line = format!("seed {seed}:");
        for kind in DetectorKind::ALL {
            let det = Detector::fit(
                kind,
                &DetectorParams {
                    seed,
                    ..DetectorParams::default()
                },
                &ctx,
                classes,
            )?;
            let ids: Vec<u64> = (0..test.len() as u64).collect();
            let a = det.score_batch(&model, &test.features, &ids, 0)?;
            let b = det.score_batch(&model, &ood.features, &ids, 0)?;
            line.push_str(&format!(" {kind} {:.2}", auroc(&a, &b)?));
        }
        println!("{line}");
    }
    Ok(())
}
