use proptest::prelude::*;

use super::*;
use crate::fixtures::{linear, random_dense, random_layer, random_vector, LAYER_KINDS};
use crate::rng::stream;

fn close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()) + 1e-8
}

fn assert_tensors_close(a: &Tensor, b: &Tensor, rtol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        assert!(close(*x, *y, rtol), "{what}[{i}]: {x} vs {y}");
    }
}

#[test]
fn identity_dense_pushes_tangent_through_unchanged() {
    let layer = linear(Tensor::identity(4));
    let x = Tensor::vector(vec![0.3, -1.0, 2.0, 0.5]);
    let v = Tensor::vector(vec![1.0, 2.0, -3.0, 0.25]);
    let tp = jvp(&layer, &x, &v).unwrap();
    assert_eq!(tp.tangent, v);
    assert_eq!(tp.primal, x);
    let vp = vjp(&layer, &x, &v).unwrap();
    assert_eq!(vp.tangent, v);
}

#[test]
fn basis_vector_extracts_first_column() {
    let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let layer = linear(w);
    let tp = jvp(
        &layer,
        &Tensor::vector(vec![0.1, 0.2, 0.3]),
        &Tensor::vector(vec![1.0, 0.0, 0.0]),
    )
    .unwrap();
    assert_eq!(tp.tangent.data(), &[1.0, 4.0]);
}

#[test]
fn tanh_dense_jvp_matches_central_differences() {
    let layer = random_dense(11, 5, 4, Activation::Tanh);
    let mut rng = stream(1, &[]);
    let x = random_vector(&mut rng, 5);
    let v = random_vector(&mut rng, 5);
    let eps = 1e-5;
    let tp = jvp(&layer, &x, &v).unwrap();
    let xp = x.add(&v.scale(eps)).unwrap();
    let xm = x.add(&v.scale(-eps)).unwrap();
    let fd = layer
        .eval(&xp)
        .unwrap()
        .add(&layer.eval(&xm).unwrap().scale(-1.0))
        .unwrap()
        .scale(0.5 / eps);
    assert_tensors_close(&tp.tangent, &fd, 1e-6, "jvp");
    assert_eq!(tp.primal, layer.eval(&x).unwrap());
}

#[test]
fn relu_dense_vjp_matches_gradient_of_projection() {
    let layer = random_dense(5, 6, 4, Activation::Relu);
    let mut rng = stream(2, &[]);
    let x = random_vector(&mut rng, 6);
    let u = random_vector(&mut rng, 4);
    let g = vjp(&layer, &x, &u).unwrap().tangent;
    let eps = 1e-5;
    for i in 0..6 {
        let mut xp = x.clone();
        xp.data_mut()[i] += eps;
        let mut xm = x.clone();
        xm.data_mut()[i] -= eps;
        let fd = (u.dot(&layer.eval(&xp).unwrap()) - u.dot(&layer.eval(&xm).unwrap())) / (2.0 * eps);
        assert!(close(g.data()[i], fd, 1e-6), "coordinate {i}: {} vs {fd}", g.data()[i]);
    }
}

#[test]
fn exact_jacobian_of_linear_layer_is_its_weight() {
    let w = Tensor::matrix(2, 3, vec![1.5, -2.0, 0.0, 0.25, 3.0, -1.0]).unwrap();
    let layer = linear(w.clone());
    let j = exact_jacobian(&layer, &Tensor::vector(vec![9.0, -4.0, 1.0])).unwrap();
    assert_eq!(j, w);
    let fro: f64 = w.data().iter().map(|v| v * v).sum();
    assert!((j.frobenius_sq().sqrt() - fro.sqrt()).abs() < 1e-12);
    let id = exact_jacobian(&linear(Tensor::identity(3)), &Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
    assert_eq!(id, Tensor::identity(3));
}

#[test]
fn finite_differences_on_degenerate_maps() {
    let zero = linear(Tensor::zeros(&[3, 2]));
    let x = Tensor::vector(vec![0.4, -0.1]);
    let j = finite_difference_jacobian(&zero, &x, FD_EPS).unwrap();
    assert!(j.data().iter().all(|v| *v == 0.0));

    let w = Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 4.0]).unwrap();
    let j = finite_difference_jacobian(&linear(w.clone()), &x, FD_EPS).unwrap();
    assert_tensors_close(&j, &w, 1e-9, "linear fd");
    assert!(finite_difference_jacobian(&zero, &x, 0.0).is_err());
}

#[test]
fn exact_jacobian_agrees_with_finite_differences_for_every_kind() {
    for (s, kind) in LAYER_KINDS.iter().enumerate() {
        let layer = random_layer(kind, s as u64);
        let mut rng = stream(40 + s as u64, &[]);
        let x = random_vector(&mut rng, layer.input_dim());
        let exact = exact_jacobian(&layer, &x).unwrap();
        let fd = finite_difference_jacobian(&layer, &x, FD_EPS).unwrap();
        assert_eq!(exact.shape(), &[layer.output_dim(), layer.input_dim()]);
        assert_tensors_close(&exact, &fd, 1e-6, kind);
    }
}

#[test]
fn exact_jacobian_columns_are_basis_jvps() {
    let layer = random_layer("self-attention", 3);
    let mut rng = stream(3, &[]);
    let x = random_vector(&mut rng, layer.input_dim());
    let j = exact_jacobian(&layer, &x).unwrap();
    let n = layer.input_dim();
    for col in [0, n / 2, n - 1] {
        let mut e = Tensor::zeros(&[n]);
        e.data_mut()[col] = 1.0;
        let t = jvp(&layer, &x, &e).unwrap().tangent;
        for r in 0..layer.output_dim() {
            assert_eq!(j.get2(r, col).to_bits(), t.data()[r].to_bits());
        }
    }
}

#[test]
fn oracle_cap_is_enforced() {
    let layer = linear(Tensor::identity(8));
    let err = exact_jacobian_with_cap(&layer, &Tensor::zeros(&[8]), 4).unwrap_err();
    assert!(matches!(err, Error::OracleCap { columns: 8, cap: 4 }));
    assert!(err.to_string().contains("oracle-only"));
}

#[test]
fn shape_errors_name_the_layer() {
    let layer = random_layer("layer-norm", 0);
    let err = jvp(&layer, &Tensor::zeros(&[3]), &Tensor::zeros(&[3])).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("layer-norm") && msg.contains("[6]") && msg.contains("[3]"),
        "{msg}"
    );
    assert!(vjp(&layer, &Tensor::zeros(&[6]), &Tensor::zeros(&[2])).is_err());
}

#[test]
fn parameter_pullbacks_match_finite_differences() {
    for (s, kind) in LAYER_KINDS.iter().enumerate() {
        let layer = random_layer(kind, 100 + s as u64);
        let mut rng = stream(7 + s as u64, &[]);
        let x = random_vector(&mut rng, layer.input_dim());
        let u = random_vector(&mut rng, layer.output_dim());
        let grads = layer.param_vjp(&x, &u).unwrap();
        let n_params = layer.params().len();
        assert_eq!(grads.len(), n_params, "{kind}");
        let eps = 1e-6;
        for p in 0..n_params {
            for i in 0..layer.params()[p].len() {
                let mut plus = layer.clone();
                plus.params_mut()[p].data_mut()[i] += eps;
                let mut minus = layer.clone();
                minus.params_mut()[p].data_mut()[i] -= eps;
                let fd = (u.dot(&plus.eval(&x).unwrap()) - u.dot(&minus.eval(&x).unwrap())) / (2.0 * eps);
                let g = grads[p].data()[i];
                assert!(close(g, fd, 1e-5), "{kind} param {p}[{i}]: {g} vs {fd}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjoint_identity_holds(kind_idx in 0usize..6, seed in 0u64..1000) {
        let layer = random_layer(LAYER_KINDS[kind_idx], seed);
        let mut rng = stream(seed, &[9]);
        let x = random_vector(&mut rng, layer.input_dim());
        let v = random_vector(&mut rng, layer.input_dim());
        let u = random_vector(&mut rng, layer.output_dim());
        let jv = jvp(&layer, &x, &v).unwrap().tangent;
        let jtu = vjp(&layer, &x, &u).unwrap().tangent;
        let lhs = u.dot(&jv);
        let rhs = jtu.dot(&v);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn jvp_is_linear_in_tangent(kind_idx in 0usize..6, seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let layer = random_layer(LAYER_KINDS[kind_idx], seed);
        let mut rng = stream(seed, &[10]);
        let x = random_vector(&mut rng, layer.input_dim());
        let v1 = random_vector(&mut rng, layer.input_dim());
        let v2 = random_vector(&mut rng, layer.input_dim());
        let combo = v1.scale(a).add(&v2.scale(b)).unwrap();
        let lhs = jvp(&layer, &x, &combo).unwrap().tangent;
        let rhs = jvp(&layer, &x, &v1).unwrap().tangent.scale(a)
            .add(&jvp(&layer, &x, &v2).unwrap().tangent.scale(b)).unwrap();
        for (p, q) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((p - q).abs() <= 1e-10 * (1.0 + q.abs()));
        }
    }
}
