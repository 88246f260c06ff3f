//! Random layers and inputs for tests, benchmarks and the demo.

use rand::Rng;

use crate::autodiff::{Activation, Dense, Embedding, EncoderBlock, Head, LayerFunction, LayerNorm, Pooling, Residual};
use crate::rng::{normal, stream};
use crate::tensor::Tensor;

/// Every supported layer kind, for kind-parametrised test suites.
pub const LAYER_KINDS: [&str; 6] = [
    "dense",
    "layer-norm",
    "residual",
    "embedding",
    "self-attention",
    "softmax-head",
];

pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Tensor {
    Tensor::vector((0..n).map(|_| normal(rng)).collect())
}

/// A small random layer of the given kind (dims ≤ 16).
pub fn random_layer(kind: &str, seed: u64) -> LayerFunction {
    let mut rng = stream(seed, &[0xF1]);
    match kind {
        "dense" => LayerFunction::Dense(Dense::random(&mut rng, 5, 4, Activation::Tanh)),
        "layer-norm" => {
            let mut ln = LayerNorm::new(6, 1);
            for v in ln.gamma.data_mut() {
                *v = 1.0 + 0.3 * normal(&mut rng);
            }
            for v in ln.beta.data_mut() {
                *v = 0.3 * normal(&mut rng);
            }
            LayerFunction::LayerNorm(ln)
        }
        "residual" => LayerFunction::Residual(Residual {
            inner: Dense::random(&mut rng, 6, 6, Activation::Gelu),
        }),
        "embedding" => LayerFunction::Embedding(Embedding::random(&mut rng, 3, 2, 4)),
        "self-attention" => LayerFunction::SelfAttention(EncoderBlock::random(&mut rng, 3, 4, 8)),
        "softmax-head" => LayerFunction::SoftmaxHead(Head::random(
            &mut rng,
            4,
            3,
            Some(Activation::Tanh),
            Some(Pooling { tokens: 3, slot: 0 }),
        )),
        other => panic!("unknown layer kind {other}"),
    }
}

/// Random dense layer with `input → output` dims and the given activation.
pub fn random_dense(seed: u64, input: usize, output: usize, activation: Activation) -> LayerFunction {
    let mut rng = stream(seed, &[0xF2]);
    let mut d = Dense::random(&mut rng, input, output, activation);
    // wider weights than the default init so nonlinear layers are not
    // nearly linear at unit-scale inputs
    for w in d.weight.data_mut() {
        *w *= 2.0;
    }
    LayerFunction::Dense(d)
}

/// Linear dense layer with the given weight matrix and zero bias.
pub fn linear(weight: Tensor) -> LayerFunction {
    let out = weight.shape()[0];
    LayerFunction::Dense(Dense::new(weight, Tensor::zeros(&[out]), Activation::Identity))
}
