use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::autodiff::{Activation, Dense, Head, LayerFunction};
use crate::fixtures::linear;
use crate::network::{Architecture, MlpSpec};
use crate::rng::stream;
use crate::tensor::softmax;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-300) || (a - b).abs() <= tol
}

/// `[identity body, head]`, so the head sees the input unchanged.
fn with_head(head: Head) -> NetworkModel {
    let width = head.width();
    NetworkModel::new(
        vec![linear(Tensor::identity(width)), LayerFunction::SoftmaxHead(head)],
        Architecture::Mlp,
        None,
    )
    .unwrap()
}

fn linear_head(weight: Vec<f64>, bias: Vec<f64>) -> Head {
    let classes = bias.len();
    let width = weight.len() / classes;
    Head {
        hidden: None,
        weight: Tensor::matrix(classes, width, weight).unwrap(),
        bias: Tensor::vector(bias),
        pooling: None,
    }
}

fn random_model(seed: u64, hidden: Option<Activation>) -> NetworkModel {
    let spec = MlpSpec {
        activation: Activation::Tanh,
        head_activation: hidden,
        ..MlpSpec::new(3, 4, 1, 3)
    };
    NetworkModel::mlp(&spec, seed).unwrap()
}

#[test]
fn black_box_examples() {
    assert_eq!(msp(&[0.25; 4]), -0.25);
    assert_eq!(msp(&[0.0, 1.0, 0.0]), -1.0);
    assert_eq!(msp(&[0.7, 0.2, 0.1]), -0.7);
    assert!((ent(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
    assert_eq!(ent(&[0.0, 1.0, 0.0]), 0.0);
    assert!((ent(&[0.5, 0.5, 0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    assert!((egy(&[0.0; 4]) + 4f64.ln()).abs() < 1e-15);
    assert_eq!(egy(&[1000.0, 1000.0]), -(1000.0 + 2f64.ln()));
}

proptest! {
    #[test]
    fn energy_shift_equivariance(z in prop::collection::vec(-50.0f64..50.0, 2..8), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        prop_assert!((egy(&shifted) - (egy(&z) - c)).abs() <= 1e-12 * (1.0 + c.abs() + egy(&z).abs()));
    }

    #[test]
    fn temperature_keeps_argmax(z in prop::collection::vec(-20.0f64..20.0, 2..8), log_t in -6.0f64..6.0) {
        let t = log_t.exp();
        let scaled: Vec<f64> = z.iter().map(|v| v / t).collect();
        prop_assert_eq!(crate::tensor::argmax(&softmax(&scaled)), crate::tensor::argmax(&z));
    }

    #[test]
    fn binary_msp_and_ent_rank_alike(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (pa, pb) = ([a, 1.0 - a], [b, 1.0 - b]);
        let by_msp = msp(&pa).partial_cmp(&msp(&pb)).unwrap();
        let by_ent = ent(&pa).partial_cmp(&ent(&pb)).unwrap();
        prop_assume!((msp(&pa) - msp(&pb)).abs() > 1e-12);
        prop_assert_eq!(by_msp, by_ent);
    }
}

#[test]
fn mc_dropout_rate_zero_is_entropy_and_seeded() {
    let model = random_model(1, Some(Activation::Gelu));
    let x = Tensor::vector(vec![0.3, -1.0, 2.0]);
    let e = ent(model.predict_proba(&x).unwrap().data());
    assert!((mc_dropout(&model, &x, 5, 0.0, 9, 0).unwrap() - e).abs() < 1e-15);
    let a = mc_dropout(&model, &x, 30, 0.3, 9, 4).unwrap();
    assert_eq!(a, mc_dropout(&model, &x, 30, 0.3, 9, 4).unwrap());
    assert_ne!(a, mc_dropout(&model, &x, 30, 0.3, 9, 5).unwrap());
}

#[test]
fn mc_dropout_matches_mask_enumeration() {
    // x (2) → linear 4-unit hidden layer → dropout → linear head (3 classes)
    let hidden = Tensor::matrix(4, 2, vec![1.0, -0.5, 0.3, 0.8, -1.2, 0.4, 0.6, 0.9]).unwrap();
    let head = linear_head(
        vec![0.5, -0.4, 1.1, 0.2, -0.7, 0.9, 0.1, -0.3, 0.3, 0.2, -0.8, 0.6],
        vec![0.1, 0.0, -0.1],
    );
    let model = NetworkModel::new(
        vec![linear(hidden.clone()), LayerFunction::SoftmaxHead(head.clone())],
        Architecture::Mlp,
        None,
    )
    .unwrap();
    let x = Tensor::vector(vec![0.7, -1.1]);
    let rate: f64 = 0.3;
    let h: Vec<f64> = (0..4)
        .map(|i| hidden.get2(i, 0) * 0.7 + hidden.get2(i, 1) * -1.1)
        .collect();
    let mut exact = [0.0; 3];
    for mask in 0..16u32 {
        let kept = mask.count_ones() as i32;
        let weight = (1.0 - rate).powi(kept) * rate.powi(4 - kept);
        let z: Vec<f64> = (0..4)
            .map(|i| if mask >> i & 1 == 1 { h[i] / (1.0 - rate) } else { 0.0 })
            .collect();
        for (e, p) in exact.iter_mut().zip(softmax(&head.project(&z))) {
            *e += weight * p;
        }
    }
    let passes = 10_000;
    let mean = mc_dropout_mean(&model, &x, passes, rate, 3, 0).unwrap();
    // per-class SE from the per-pass probability spread
    let mut sq = [0.0; 3];
    for k in 0..passes {
        let mut rng = crate::rng::counter_stream(3, &[crate::rng::domain::MC_DROPOUT, 0], k as u64);
        let p = model.dropout_forward(&x, rate, &mut rng).unwrap();
        for c in 0..3 {
            sq[c] += (p.data()[c] - mean[c]).powi(2);
        }
    }
    let se: Vec<f64> = sq
        .iter()
        .map(|s| (s / (passes as f64 - 1.0) / passes as f64).sqrt())
        .collect();
    let mut ent_bound = 0.0;
    for c in 0..3 {
        assert!(
            (mean[c] - exact[c]).abs() <= 3.0 * se[c],
            "class {c}: {} vs {}",
            mean[c],
            exact[c]
        );
        ent_bound += (exact[c].ln() + 1.0).abs() * 3.0 * se[c];
    }
    let score = mc_dropout(&model, &x, passes, rate, 3, 0).unwrap();
    assert!((score - ent(&exact)).abs() <= ent_bound, "{score} vs {}", ent(&exact));
}

#[test]
fn grad_norm_zero_for_one_hot_and_bilinear() {
    let saturated = with_head(linear_head(vec![1000.0, 0.0, 0.0, 0.0], vec![0.0, 0.0]));
    assert_eq!(
        grad_norm(&saturated, &Tensor::vector(vec![1.0, 0.0]), GradTarget::Projection).unwrap(),
        0.0
    );

    // equal rows keep p uniform whatever z is
    let flat = with_head(linear_head(vec![0.4, -0.2, 0.1, 0.4, -0.2, 0.1], vec![0.0, 0.0]));
    let z = Tensor::vector(vec![0.3, 1.2, -0.7]);
    let one = grad_norm(&flat, &z, GradTarget::Projection).unwrap();
    let two = grad_norm(&flat, &z.scale(2.0), GradTarget::Projection).unwrap();
    assert!((two - 2.0 * one).abs() < 1e-14 * two);
    assert!((one - 0.5f64.sqrt() * crate::tensor::norm(z.data())).abs() < 1e-14);
}

/// Central-difference norm of `∂ CE(ŷ) / ∂θ` over the selected head
/// parameters, with ŷ frozen at the unperturbed prediction.
fn fd_head_grad(model: &NetworkModel, x: &Tensor, projection_only: bool) -> f64 {
    let y = model.logits(x).unwrap().argmax();
    let loss = |m: &NetworkModel| {
        let z = m.logits(x).unwrap();
        crate::tensor::log_sum_exp(z.data()) - z.data()[y]
    };
    let n_params: Vec<usize> = {
        let mut m = model.clone();
        m.head_mut().params_mut_lens()
    };
    let first = if projection_only { n_params.len() - 2 } else { 0 };
    let last = if projection_only {
        n_params.len() - 1
    } else {
        n_params.len()
    };
    let eps = 1e-6;
    let mut total = 0.0;
    for t in first..last {
        for i in 0..n_params[t] {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            plus.head_mut().param_slot(t)[i] += eps;
            minus.head_mut().param_slot(t)[i] -= eps;
            let g = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            total += g * g;
        }
    }
    total.sqrt()
}

/// Test-only accessors over the head's parameter tensors
/// (hidden weight, hidden bias, projection weight, projection bias).
trait HeadParams {
    fn params_mut_lens(&mut self) -> Vec<usize>;
    fn param_slot(&mut self, t: usize) -> &mut [f64];
}

impl HeadParams for Head {
    fn params_mut_lens(&mut self) -> Vec<usize> {
        let mut out = Vec::new();
        if let Some(d) = &self.hidden {
            out.extend([d.weight.len(), d.bias.len()]);
        }
        out.extend([self.weight.len(), self.bias.len()]);
        out
    }

    fn param_slot(&mut self, t: usize) -> &mut [f64] {
        let offset = if self.hidden.is_some() { 0 } else { 2 };
        match (t + offset, self.hidden.as_mut()) {
            (0, Some(d)) => d.weight.data_mut(),
            (1, Some(d)) => d.bias.data_mut(),
            (2, _) => self.weight.data_mut(),
            _ => self.bias.data_mut(),
        }
    }
}

#[test]
fn grad_norm_matches_finite_differences() {
    for seed in 0..4 {
        for hidden in [None, Some(Activation::Tanh)] {
            let model = random_model(seed, hidden);
            let x = Tensor::vector(vec![0.5 - seed as f64 * 0.3, 1.1, -0.4]);
            let fd = fd_head_grad(&model, &x, true);
            let cf = grad_norm(&model, &x, GradTarget::Projection).unwrap();
            assert!(close(cf, fd, 1e-5), "projection seed {seed}: {cf} vs {fd}");
            let fd = fd_head_grad(&model, &x, false);
            let an = grad_norm(&model, &x, GradTarget::HeadParams).unwrap();
            assert!(close(an, fd, 1e-5), "head params seed {seed}: {an} vs {fd}");
        }
    }
}

#[test]
fn ash_shaping_rules() {
    let z = [0.5, -1.0, 2.0];
    let kept = ash_shape(&z, 0.0).unwrap();
    for (k, v) in kept.iter().zip(z) {
        assert!((k - v * 1f64.exp()).abs() < 1e-15);
    }
    let single = ash_shape(&[0.0, 0.0, -3.0, 0.0], 0.75).unwrap();
    assert_eq!(single, vec![0.0, 0.0, -3.0 * 1f64.exp(), 0.0]);
    assert!(ash_shape(&z, 1.0).is_err());
    assert!(ash_shape(&z, -0.1).is_err());
}

#[test]
fn ash_ten_unit_hand_trace() {
    let z = vec![0.2, 0.1, 0.9, 0.0, 0.3, 0.05, 0.4, 0.25, 0.1, 0.2];
    // s1 = 2.5, the only survivor is 0.9, s2 = 0.9
    let shaped = ash_shape(&z, 0.9).unwrap();
    assert_eq!(shaped.iter().filter(|v| **v != 0.0).count(), 1);
    let survivor = 0.9 * (2.5f64 / 0.9).exp();
    assert!((shaped[2] - survivor).abs() < 1e-12 * survivor);
    // head: logit_0 = z_2, logit_1 = −z_2 + 1
    let mut w = vec![0.0; 20];
    w[2] = 1.0;
    w[12] = -1.0;
    let model = with_head(linear_head(w, vec![0.0, 1.0]));
    let expected = -((survivor).exp() + (1.0 - survivor).exp()).ln();
    let got = ash_s(&model, &Tensor::vector(z), 0.9, FinalScore::Energy).unwrap();
    assert!((got - expected).abs() < 1e-12 * expected.abs());
}

#[test]
fn percentile_matches_sorted_pool() {
    let pool = [
        vec![3.0, 1.0],
        vec![4.0, 1.5],
        vec![9.0, 2.0],
        vec![6.0, 5.0],
        vec![3.5, 8.0],
    ];
    let ReactThreshold::Pooled(c) = ReactThreshold::fit(&pool, 90.0, false).unwrap() else {
        panic!("pooled threshold expected")
    };
    // sorted: 1 1.5 2 3 3.5 4 5 6 8 9; position 0.9·9 = 8.1
    assert!((c - (8.0 + 0.1 * 1.0)).abs() < 1e-12);
    let ReactThreshold::PerUnit(cs) = ReactThreshold::fit(&pool, 50.0, true).unwrap() else {
        panic!("per-unit thresholds expected")
    };
    assert_eq!(cs, vec![4.0, 2.0]);
}

#[test]
fn react_clamp_edge_cases() {
    let model = with_head(linear_head(vec![0.5, -1.0, 0.3, 2.0, 0.1, 0.7], vec![0.2, -0.4]));
    let x = Tensor::vector(vec![1.0, 0.5, 2.0]);
    let above = ReactThreshold::Pooled(100.0);
    assert_eq!(
        react(&model, &x, &above, FinalScore::Energy).unwrap(),
        egy(model.logits(&x).unwrap().data())
    );
    let zero = ReactThreshold::Pooled(0.0);
    assert_eq!(react(&model, &x, &zero, FinalScore::Energy).unwrap(), egy(&[0.2, -0.4]));
}

#[test]
fn ensemble_examples() {
    let m = random_model(3, Some(Activation::Gelu));
    let x = Tensor::vector(vec![0.1, 0.2, -0.3]);
    let single = ent(m.predict_proba(&x).unwrap().data());
    assert!((ensemble_score(&[m.clone(), m.clone(), m.clone()], &x).unwrap() - single).abs() < 1e-15);

    let a = with_head(linear_head(vec![1000.0, -1000.0], vec![0.0, 0.0]));
    let b = with_head(linear_head(vec![-1000.0, 1000.0], vec![0.0, 0.0]));
    assert!((ensemble_score(&[a, b], &Tensor::vector(vec![1.0])).unwrap() - 2f64.ln()).abs() < 1e-15);

    let members: Vec<NetworkModel> = (0..3).map(|s| random_model(10 + s, Some(Activation::Tanh))).collect();
    let mut mean = [0.0; 3];
    for m in &members {
        for (a, p) in mean.iter_mut().zip(m.predict_proba(&x).unwrap().data()) {
            *a += p / 3.0;
        }
    }
    let hand = -mean.iter().map(|p| p * p.ln()).sum::<f64>();
    assert!((ensemble_score(&members, &x).unwrap() - hand).abs() < 1e-12);
}

#[test]
fn temperature_recovers_calibrated_logits() {
    let mut fitted = 0.0;
    for seed in 0..3 {
        let mut rng = stream(seed, &[0x7E]);
        let mut logits = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..10_000 {
            let z: Vec<f64> = (0..4).map(|_| 2.0 * crate::rng::normal(&mut rng)).collect();
            let p = softmax(&z);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let y = p
                .iter()
                .position(|v| {
                    acc += v;
                    u < acc
                })
                .unwrap_or(3);
            logits.push(z);
            labels.push(y);
        }
        let fit = temp_fit(&logits, &labels).unwrap();
        assert!(!fit.at_boundary);
        assert!(fit.nll <= temperature_nll(&logits, &labels, 1.0));
        fitted += fit.temperature / 3.0;
    }
    assert!((0.9..=1.1).contains(&fitted), "mean T {fitted}");
}

#[test]
fn temperature_degenerate_and_scores() {
    let logits: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0 + i as f64 * 0.1, -1.0]).collect();
    let fit = temp_fit(&logits, &[0; 20]).unwrap();
    assert!(fit.at_boundary);
    assert!(fit.temperature < 1.0);
    assert!(fit.nll <= temperature_nll(&logits, &[0; 20], 1.0));
    assert!(temp_fit(&[], &[]).is_err());

    let z = [1.5, -0.2, 0.4, 0.0];
    assert_eq!(temp_score(&z, 1.0).unwrap(), msp(&softmax(&z)));
    assert!((temp_score(&z, 1e9).unwrap() + 0.25).abs() < 1e-8);
    assert!(temp_score(&z, 0.0).is_err());
}

#[test]
fn mahalanobis_hand_cases() {
    let fit = MahalanobisFit::from_moments(
        vec![vec![0.0, 0.0, 0.0], vec![5.0, 5.0, 5.0]],
        nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0, 9.0])),
    )
    .unwrap();
    let z = [1.0, 2.0, 3.0];
    let lam = fit.ridge;
    let hand = 1.0 / (1.0 + lam) + 4.0 / (4.0 + lam) + 9.0 / (9.0 + lam);
    assert!((mahalanobis_score(&fit, &z).unwrap() - hand).abs() < 1e-12);
    assert!((lam - 1e-6 * 14.0 / 3.0).abs() < 1e-18);
    assert_eq!(mahalanobis_score(&fit, &[5.0, 5.0, 5.0]).unwrap(), 0.0);

    let eye =
        MahalanobisFit::from_moments(vec![vec![1.0, 0.0], vec![0.0, 3.0]], nalgebra::DMatrix::identity(2, 2)).unwrap();
    let q = [0.5, 2.0];
    let euclid: f64 = (0.5f64.powi(2) + 1.0).min(0.25 + 1.0);
    assert!((mahalanobis_score(&eye, &q).unwrap() * (1.0 + eye.ridge) - euclid).abs() < 1e-12);
}

#[test]
fn mahalanobis_fit_moments() {
    let reps = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![0.0, 0.0], vec![0.0, 4.0]];
    let labels = vec![0, 0, 1, 1];
    let fit = mahalanobis_fit(&reps, &labels, 2).unwrap();
    assert_eq!(fit.means, vec![vec![2.0, 2.0], vec![0.0, 2.0]]);
    // deviations: (−1,0) (1,0) (0,−2) (0,2) → Σ = diag(2, 8)/4
    assert!((fit.covariance[(0, 0)] - 0.5).abs() < 1e-15);
    assert!((fit.covariance[(1, 1)] - 2.0).abs() < 1e-15);
    assert_eq!(fit.covariance[(0, 1)], 0.0);

    assert!(mahalanobis_fit(&[vec![1.0], vec![2.0], vec![3.0]], &[0, 1, 1], 2).is_err());

    // whitened Gaussian draws around two centres: Σ ≈ I
    let mut rng = stream(5, &[0x3D]);
    let (mut reps, mut labels) = (Vec::new(), Vec::new());
    for i in 0..20_000 {
        let c = i % 2;
        let z: Vec<f64> = (0..3)
            .map(|j| crate::rng::normal(&mut rng) + if j == 0 { 4.0 * c as f64 } else { 0.0 })
            .collect();
        reps.push(z);
        labels.push(c);
    }
    let fit = mahalanobis_fit(&reps, &labels, 2).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!(
                (fit.covariance[(i, j)] - target).abs() < 0.05,
                "Σ[{i},{j}] = {}",
                fit.covariance[(i, j)]
            );
        }
    }
    assert!((fit.means[1][0] - 4.0).abs() < 0.05);
}

#[test]
fn fit_contexts_and_names() {
    for k in DetectorKind::ALL {
        assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
    }
    assert!("blood".parse::<DetectorKind>().is_err());
    let empty = FitContext::default();
    let params = DetectorParams::default();
    for k in DetectorKind::ALL {
        assert_eq!(Detector::fit(k, &params, &empty, 3).is_err(), k.is_open_box(), "{k}");
    }
    let bad = DetectorParams {
        ash_prune: 1.0,
        ..params
    };
    assert!(Detector::fit(DetectorKind::Ash, &bad, &empty, 3).is_err());
}

#[test]
fn batch_scoring_is_schedule_independent() {
    let model = random_model(8, Some(Activation::Gelu));
    let mut rng = stream(2, &[1]);
    let xs: Vec<Tensor> = (0..40).map(|_| crate::fixtures::random_vector(&mut rng, 3)).collect();
    let ids: Vec<u64> = (0..40).collect();
    let det = Detector::fit(DetectorKind::Mc, &DetectorParams::default(), &FitContext::default(), 3).unwrap();
    let a = det.score_batch(&model, &xs, &ids, 1).unwrap();
    let b = det.score_batch(&model, &xs, &ids, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mahalanobis_rejects_dense_hidden_mismatch() {
    let model = with_head(Head {
        hidden: Some(Dense::new(Tensor::identity(2), Tensor::zeros(&[2]), Activation::Relu)),
        ..linear_head(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0])
    });
    let fit = MahalanobisFit::from_moments(vec![vec![0.0; 3]], nalgebra::DMatrix::identity(3, 3)).unwrap();
    let det = Detector::Md(fit);
    assert!(det.score(&model, &Tensor::vector(vec![1.0, 2.0]), 0).is_err());
}
