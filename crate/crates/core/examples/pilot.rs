//! Pilot sweep used to fix the desk-scale defaults of the Far-OOD benchmark.
//!
//! ```text
//! cargo run --release -p blood-core --example pilot -- \
//!     [act=gelu] [head=gelu] [depth=3] [width=64] [epochs=50] [train=100] \
//!     [dropout=0.1] [lr=1e-3] [seeds=5] [m=50]
//! ```
//!
//! Prints per-seed BLOOD_L / BLOOD_M AUROC, the one-sided Mann-Whitney p of
//! OOD over test-ID BLOOD_L scores, and whether the BLOOD_L medians rise
//! across train < test-ID < degree 4 < degree 8.

use std::collections::HashMap;

use blood_core::blood::{blood_l, blood_m, score_batch, BloodConfig};
use blood_core::datasets::{make_far_ood, make_gaussian_split, Dataset, Split};
use blood_core::eval::{auroc, mann_whitney_one_sided, median};
use blood_core::network::{train, MlpSpec, NetworkModel, TrainConfig};
use blood_core::Tensor;

fn main() -> blood_core::Result<()> {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| args.get(k).cloned().unwrap_or_else(|| d.to_string());
    let act = get("act", "gelu").parse().unwrap();
    let head = match get("head", "gelu").as_str() {
        "none" => None,
        h => Some(h.parse().unwrap()),
    };
    let depth: usize = get("depth", "3").parse().unwrap();
    let width: usize = get("width", "64").parse().unwrap();
    let epochs: usize = get("epochs", "50").parse().unwrap();
    let n_train: usize = get("train", "100").parse().unwrap();
    let n_test: usize = get("test", "50").parse().unwrap();
    let dropout: f64 = get("dropout", "0.1").parse().unwrap();
    let lr: f64 = get("lr", "1e-3").parse().unwrap();
    let seeds: u64 = get("seeds", "5").parse().unwrap();
    let m: usize = get("m", "50").parse().unwrap();
    let sep: f64 = get("sep", "4").parse().unwrap();

    let (mut sum_l, mut sum_m, mut ordered) = (0.0, 0.0, 0);
    for seed in 0..seeds {
        let train_ds = make_gaussian_split(4, 16, n_train, sep, seed, Split::Train)?;
        let test = make_gaussian_split(4, 16, n_test, sep, seed, Split::TestId)?;
        let ood8 = make_far_ood(&test, 8.0, test.len(), seed)?;
        let ood4 = make_far_ood(&test, 4.0, test.len(), seed)?;
        let spec = MlpSpec {
            activation: act,
            head_activation: head,
            ..MlpSpec::new(16, width, depth, 4)
        };
        let model = NetworkModel::mlp(&spec, seed)?;
        let (xs, ys) = train_ds.labelled();
        let cfg = TrainConfig {
            epochs,
            dropout,
            learning_rate: lr,
            seed,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&model, &xs, &ys, &cfg)?;
        let bcfg = BloodConfig {
            m_samples: m,
            seed,
            ..BloodConfig::default()
        };
        let score = |ds: &Dataset| -> blood_core::Result<(Vec<f64>, Vec<f64>)> {
            let ids: Vec<u64> = (0..ds.len() as u64).collect();
            let s = score_batch(&trained, &ds.features, &ids, &bcfg, 0)?;
            Ok((
                s.iter().map(|v| blood_l(&v.values).unwrap()).collect(),
                s.iter().map(|v| blood_m(&v.values).unwrap()).collect(),
            ))
        };
        let train_sub = Dataset {
            features: xs.iter().take(test.len()).cloned().collect::<Vec<Tensor>>(),
            ..train_ds.clone()
        };
        let (tr_l, _) = score(&train_sub)?;
        let (id_l, id_m) = score(&test)?;
        let (o4_l, _) = score(&ood4)?;
        let (o8_l, o8_m) = score(&ood8)?;
        let a_l = auroc(&id_l, &o8_l)?;
        let a_m = auroc(&id_m, &o8_m)?;
        let p = mann_whitney_one_sided(&o8_l, &id_l)?;
        let meds = [median(&tr_l)?, median(&id_l)?, median(&o4_l)?, median(&o8_l)?];
        let inc = meds.windows(2).all(|w| w[0] < w[1]);
        let ood10 = make_far_ood(&test, 10.0, test.len(), seed)?;
        let msp_of = |ds: &Dataset| -> Vec<f64> {
            ds.features
                .iter()
                .map(|x| {
                    -trained
                        .predict_proba(x)
                        .unwrap()
                        .data()
                        .iter()
                        .cloned()
                        .fold(0.0, f64::max)
                })
                .collect()
        };
        let a_msp = auroc(&msp_of(&test), &msp_of(&ood10))?;
        let acc = trained.accuracy(&test.labelled().0, &test.labelled().1)?;
        println!(
            "seed {seed}: acc {acc:.3} auroc_L {a_l:.3} auroc_M {a_m:.3} p {p:.2e} msp@10 {a_msp:.3} medians {:.3?} increasing {inc}",
            meds
        );
        sum_l += a_l;
        sum_m += a_m;
        ordered += inc as usize;
    }
    println!(
        "MEAN auroc_L {:.3} auroc_M {:.3} ordered {ordered}/{seeds} args {:?}",
        sum_l / seeds as f64,
        sum_m / seeds as f64,
        std::env::args().skip(1).collect::<Vec<_>>()
    );
    Ok(())
}
