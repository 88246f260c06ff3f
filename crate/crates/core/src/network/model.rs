use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Dense, Embedding, EncoderBlock, Head, LayerFunction, Pooling};
use crate::error::{Error, Result};
use crate::rng::{domain, stream};
use crate::tensor::{log_sum_exp, softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Mlp,
    MiniTransformer,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::MiniTransformer => "mini-transformer",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Architecture::Mlp),
            "mini-transformer" => Ok(Architecture::MiniTransformer),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

/// Shape of a multilayer perceptron: `depth` dense layers of `width` units
/// followed by a classification head (so `L = depth + 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub classes: usize,
    pub activation: Activation,
    /// Activation of the head's dense sublayer; `None` gives a purely
    /// linear head.
    pub head_activation: Option<Activation>,
}

impl MlpSpec {
    pub fn new(input_dim: usize, width: usize, depth: usize, classes: usize) -> Self {
        MlpSpec {
            input_dim,
            width,
            depth,
            classes,
            activation: Activation::Gelu,
            head_activation: Some(Activation::Gelu),
        }
    }
}

/// Shape of the mini transformer encoder. The input vector is cut into
/// `input_dim / token_dim` tokens; a learned pooled slot is prepended at
/// index 0 and read by the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub input_dim: usize,
    pub token_dim: usize,
    pub width: usize,
    pub layers: usize,
    pub ffn_hidden: usize,
    pub classes: usize,
    pub head_activation: Option<Activation>,
}

impl TransformerSpec {
    pub fn new(input_dim: usize, token_dim: usize, classes: usize) -> Self {
        TransformerSpec {
            input_dim,
            token_dim,
            width: 32,
            layers: 4,
            ffn_hidden: 64,
            classes,
            head_activation: Some(Activation::Tanh),
        }
    }
}

/// A layered classifier `f = f_L ∘ … ∘ f_1`; `f_L` maps to logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub layers: Vec<LayerFunction>,
    pub num_classes: usize,
    pub architecture: Architecture,
    pub pooled_slot: Option<usize>,
}

/// Every intermediate representation of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `h_0 … h_{L-1}`, with `h_0` the input.
    pub representations: Vec<Tensor>,
    pub logits: Tensor,
    pub probabilities: Tensor,
}

impl ForwardTrace {
    /// Input to the final projection of the head.
    pub fn penultimate(&self, model: &NetworkModel) -> Vec<f64> {
        model.head().penultimate(self.representations.last().unwrap().data())
    }
}

impl NetworkModel {
    pub fn new(layers: Vec<LayerFunction>, architecture: Architecture, pooled_slot: Option<usize>) -> Result<Self> {
        let Some(LayerFunction::SoftmaxHead(head)) = layers.last() else {
            return Err(Error::invalid("last layer must be a softmax head"));
        };
        let num_classes = head.classes();
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dimension(
                    format!("layer chain f_{} → f_{}", l + 1, l + 2),
                    &[pair[0].output_dim()],
                    &[pair[1].input_dim()],
                ));
            }
        }
        if layers[..layers.len() - 1]
            .iter()
            .any(|l| matches!(l, LayerFunction::SoftmaxHead(_)))
        {
            return Err(Error::invalid("softmax head must be the last layer"));
        }
        Ok(NetworkModel {
            layers,
            num_classes,
            architecture,
            pooled_slot,
        })
    }

    pub fn mlp(spec: &MlpSpec, seed: u64) -> Result<Self> {
        if spec.depth == 0 || spec.width == 0 || spec.input_dim == 0 || spec.classes < 2 {
            return Err(Error::invalid(
                "MLP needs depth ≥ 1, width ≥ 1, input ≥ 1 and ≥ 2 classes",
            ));
        }
        let mut layers = Vec::with_capacity(spec.depth + 1);
        for l in 0..spec.depth {
            let mut rng = stream(seed, &[domain::INIT, l as u64]);
            let input = if l == 0 { spec.input_dim } else { spec.width };
            layers.push(LayerFunction::Dense(Dense::random(
                &mut rng,
                input,
                spec.width,
                spec.activation,
            )));
        }
        let mut rng = stream(seed, &[domain::INIT, spec.depth as u64]);
        layers.push(LayerFunction::SoftmaxHead(Head::random(
            &mut rng,
            spec.width,
            spec.classes,
            spec.head_activation,
            None,
        )));
        NetworkModel::new(layers, Architecture::Mlp, None)
    }

    pub fn mini_transformer(spec: &TransformerSpec, seed: u64) -> Result<Self> {
        if spec.token_dim == 0 || !spec.input_dim.is_multiple_of(spec.token_dim) {
            return Err(Error::invalid(format!(
                "input dim {} is not a multiple of token dim {}",
                spec.input_dim, spec.token_dim
            )));
        }
        let data_tokens = spec.input_dim / spec.token_dim;
        let tokens = data_tokens + 1;
        let mut layers = Vec::with_capacity(spec.layers + 2);
        let mut rng = stream(seed, &[domain::INIT, 0]);
        layers.push(LayerFunction::Embedding(Embedding::random(
            &mut rng,
            data_tokens,
            spec.token_dim,
            spec.width,
        )));
        for l in 0..spec.layers {
            let mut rng = stream(seed, &[domain::INIT, l as u64 + 1]);
            layers.push(LayerFunction::SelfAttention(EncoderBlock::random(
                &mut rng,
                tokens,
                spec.width,
                spec.ffn_hidden,
            )));
        }
        let mut rng = stream(seed, &[domain::INIT, spec.layers as u64 + 1]);
        layers.push(LayerFunction::SoftmaxHead(Head::random(
            &mut rng,
            spec.width,
            spec.classes,
            spec.head_activation,
            Some(Pooling { tokens, slot: 0 }),
        )));
        NetworkModel::new(layers, Architecture::MiniTransformer, Some(0))
    }

    /// Number of layers `L` (including the head).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn head(&self) -> &Head {
        match self.layers.last() {
            Some(LayerFunction::SoftmaxHead(h)) => h,
            _ => unreachable!("constructor guarantees a trailing head"),
        }
    }

    pub fn head_mut(&mut self) -> &mut Head {
        match self.layers.last_mut() {
            Some(LayerFunction::SoftmaxHead(h)) => h,
            _ => unreachable!("constructor guarantees a trailing head"),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dimension("network input", &[self.input_dim()], &[x.len()]));
        }
        Ok(())
    }

    fn shaped(&self, layer: usize, data: Vec<f64>) -> Tensor {
        match self.layers[layer].output_layout() {
            Some(l) => Tensor::new(vec![l.tokens, l.width], data).expect("layout matches output dim"),
            None => Tensor::vector(data),
        }
    }

    pub fn forward_trace(&self, x: &Tensor) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut reps = Vec::with_capacity(self.layers.len());
        reps.push(x.clone());
        for (l, layer) in self.layers[..last].iter().enumerate() {
            let h = layer.forward_raw(reps[l].data());
            reps.push(self.shaped(l, h));
        }
        let logits = self.layers[last].forward_raw(reps[last].data());
        let probabilities = Tensor::vector(softmax(&logits));
        Ok(ForwardTrace {
            representations: reps,
            logits: Tensor::vector(logits),
            probabilities,
        })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.data().to_vec();
        for layer in &self.layers {
            h = layer.forward_raw(&h);
        }
        Ok(Tensor::vector(h))
    }

    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        Ok(Tensor::vector(softmax(self.logits(x)?.data())))
    }

    /// One stochastic pass with inverted dropout on every hidden
    /// representation `h_1 … h_{L-1}`; returns class probabilities.
    pub fn dropout_forward<R: Rng + ?Sized>(&self, x: &Tensor, rate: f64, rng: &mut R) -> Result<Tensor> {
        check_rate(rate)?;
        self.check_input(x)?;
        let mut h = x.data().to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward_raw(&h);
            if l < last && rate > 0.0 {
                apply_dropout(&mut h, rate, rng);
            }
        }
        Ok(Tensor::vector(softmax(&h)))
    }

    /// Copy whose head is re-initialised from `seed`; body layers are
    /// bitwise equal to the source.
    pub fn clone_with_reinit_head(&self, seed: u64) -> NetworkModel {
        let mut out = self.clone();
        let head = self.head();
        let mut rng = stream(seed, &[domain::INIT, 0x4EAD]);
        let hidden = head.hidden.as_ref().map(|d| d.activation);
        *out.head_mut() = Head::random(&mut rng, head.width(), head.classes(), hidden, head.pooling);
        out
    }

    /// Mean cross-entropy (nats) over labelled instances.
    pub fn mean_cross_entropy(&self, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            let logits = self.logits(x)?;
            total += log_sum_exp(logits.data()) - logits.data()[y];
        }
        Ok(total / inputs.len().max(1) as f64)
    }

    pub fn accuracy(&self, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
        let mut correct = 0usize;
        for (x, &y) in inputs.iter().zip(labels) {
            if self.logits(x)?.argmax() == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / inputs.len().max(1) as f64)
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout in place; returns the keep mask scaled by `1/(1-rate)`.
pub(crate) fn apply_dropout<R: Rng + ?Sized>(h: &mut [f64], rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    let mut mask = vec![0.0; h.len()];
    for (v, m) in h.iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() >= rate {
            *m = keep;
            *v *= keep;
        } else {
            *v = 0.0;
        }
    }
    mask
}
