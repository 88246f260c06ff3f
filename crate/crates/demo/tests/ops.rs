use blood_core::eval::auroc;
use blood_demo::{convergence, detection, estimator_convergence_js, roc_curve, shift_sweep_js, sweep};
use proptest::prelude::*;

#[test]
fn running_estimates_settle_on_the_exact_value() {
    for layer in [1, 2] {
        let c = convergence(3, layer, 20_000).unwrap();
        for t in [&c.gaussian, &c.rademacher] {
            let (m, se) = (*t.mean.last().unwrap(), *t.se.last().unwrap());
            assert!(
                (m - c.exact).abs() < 4.0 * se,
                "layer {layer}: {m} ± {se} vs {}",
                c.exact
            );
            assert!(se < t.se[99], "standard error should shrink");
        }
    }
}

#[test]
fn convergence_rejects_bad_arguments() {
    assert!(convergence(0, 0, 10).is_err());
    assert!(convergence(0, 3, 10).is_err());
    assert!(convergence(0, 1, 0).is_err());
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

proptest! {
    #[test]
    fn roc_area_is_the_midrank_auroc(
        id in prop::collection::vec(0u8..6, 1..30),
        ood in prop::collection::vec(0u8..6, 1..30),
    ) {
        let id: Vec<f64> = id.into_iter().map(f64::from).collect();
        let ood: Vec<f64> = ood.into_iter().map(f64::from).collect();
        let roc = roc_curve(&id, &ood);
        prop_assert_eq!(roc[0], (0.0, 0.0));
        prop_assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
        prop_assert!((trapezoid(&roc) - auroc(&id, &ood).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn detection_reports_three_detectors() {
    let d = detection(1, 10.0, 20).unwrap();
    assert!(d.test_accuracy > 0.85, "{}", d.test_accuracy);
    assert_eq!(d.detectors.len(), 3);
    for s in &d.detectors {
        assert_eq!((s.id.len(), s.ood.len()), (100, 100));
        assert!(s.roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }
}

#[test]
fn zero_shift_is_indistinguishable() {
    let s = sweep(2, &[0.0], 20).unwrap();
    assert!(
        (s.points[0].blood_l_auroc - 0.5).abs() < 0.15,
        "{}",
        s.points[0].blood_l_auroc
    );
}

#[test]
fn bindings_return_json() {
    let v: serde_json::Value = serde_json::from_str(&estimator_convergence_js(0, 1, 50).unwrap()).unwrap();
    assert_eq!(v["gaussian"]["mean"].as_array().unwrap().len(), 50);
    let v: serde_json::Value = serde_json::from_str(&shift_sweep_js(0, vec![0.0, 4.0], 10).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
}
