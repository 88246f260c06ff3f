//! Versioned binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "BLOODMDL1"
//! u64 metadata length, then that many bytes of UTF-8 `key=value\n` lines
//! for each parameter tensor, in layer order then declaration order:
//!     u32 rank, rank × u64 dims, product(dims) × f64
//! ```
//!
//! Metadata keys: `format_version`, `architecture`, `num_classes`,
//! `pooled_slot`, `layers`, and one `layer.<i>` entry per layer holding its
//! kind and dimensions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::model::{Architecture, NetworkModel};
use crate::autodiff::{Activation, Dense, Embedding, EncoderBlock, Head, LayerFunction, LayerNorm, Pooling, Residual};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8] = b"BLOODMDL1";
const MAGIC_STEM: &[u8] = b"BLOODMDL";
const FORMAT_VERSION: &str = "1";

fn describe(layer: &LayerFunction) -> String {
    match layer {
        LayerFunction::Dense(d) => format!(
            "dense in={} out={} activation={} tokens={}",
            d.in_features(),
            d.out_features(),
            d.activation.name(),
            d.tokens
        ),
        LayerFunction::Residual(r) => format!(
            "residual in={} out={} activation={} tokens={}",
            r.inner.in_features(),
            r.inner.out_features(),
            r.inner.activation.name(),
            r.inner.tokens
        ),
        LayerFunction::LayerNorm(n) => format!("layer-norm width={} tokens={}", n.width(), n.tokens),
        LayerFunction::Embedding(e) => format!(
            "embedding tokens={} token_dim={} width={}",
            e.tokens,
            e.token_dim(),
            e.width()
        ),
        LayerFunction::SelfAttention(b) => format!(
            "self-attention tokens={} width={} hidden={}",
            b.tokens,
            b.width(),
            b.hidden()
        ),
        LayerFunction::SoftmaxHead(h) => format!(
            "softmax-head width={} classes={} hidden={} pooling={}",
            h.width(),
            h.classes(),
            h.hidden.as_ref().map_or("none", |d| d.activation.name()),
            h.pooling
                .map_or("none".to_string(), |p| format!("{}:{}", p.tokens, p.slot))
        ),
    }
}

/// Serialises a model to the container format.
pub fn encode_model(model: &NetworkModel) -> Vec<u8> {
    let mut meta = String::new();
    meta.push_str(&format!("format_version={FORMAT_VERSION}\n"));
    meta.push_str(&format!("architecture={}\n", model.architecture.name()));
    meta.push_str(&format!("num_classes={}\n", model.num_classes));
    meta.push_str(&format!(
        "pooled_slot={}\n",
        model.pooled_slot.map_or("none".to_string(), |s| s.to_string())
    ));
    meta.push_str(&format!("layers={}\n", model.layers.len()));
    for (i, layer) in model.layers.iter().enumerate() {
        meta.push_str(&format!("layer.{i}={}\n", describe(layer)));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    for layer in &model.layers {
        for p in layer.params() {
            out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    decode_model(&fs::read(path)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptModel(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn fields(desc: &str) -> (String, BTreeMap<String, String>) {
    let mut parts = desc.split_whitespace();
    let kind = parts.next().unwrap_or_default().to_string();
    let map = parts
        .filter_map(|p| p.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    (kind, map)
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, layer: &str) -> Result<T> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::CorruptModel(format!("{layer}: missing or invalid '{key}'")))
}

fn activation(map: &BTreeMap<String, String>, key: &str, layer: &str) -> Result<Activation> {
    let name: String = get(map, key, layer)?;
    name.parse()
        .map_err(|e: String| Error::CorruptModel(format!("{layer}: {e}")))
}

/// Builds a zero-parameter skeleton of the layer described by `desc`.
fn skeleton(desc: &str, name: &str) -> Result<LayerFunction> {
    let (kind, m) = fields(desc);
    let dense = |m: &BTreeMap<String, String>| -> Result<Dense> {
        let (i, o): (usize, usize) = (get(m, "in", name)?, get(m, "out", name)?);
        Ok(Dense {
            weight: Tensor::zeros(&[o, i]),
            bias: Tensor::zeros(&[o]),
            activation: activation(m, "activation", name)?,
            tokens: get(m, "tokens", name)?,
        })
    };
    Ok(match kind.as_str() {
        "dense" => LayerFunction::Dense(dense(&m)?),
        "residual" => LayerFunction::Residual(Residual { inner: dense(&m)? }),
        "layer-norm" => LayerFunction::LayerNorm(LayerNorm::new(get(&m, "width", name)?, get(&m, "tokens", name)?)),
        "embedding" => {
            let (t, k, w): (usize, usize, usize) = (
                get(&m, "tokens", name)?,
                get(&m, "token_dim", name)?,
                get(&m, "width", name)?,
            );
            LayerFunction::Embedding(Embedding {
                weight: Tensor::zeros(&[w, k]),
                bias: Tensor::zeros(&[w]),
                slot: Tensor::zeros(&[w]),
                positional: Tensor::zeros(&[t + 1, w]),
                tokens: t,
            })
        }
        "self-attention" => {
            let (t, w, h): (usize, usize, usize) = (
                get(&m, "tokens", name)?,
                get(&m, "width", name)?,
                get(&m, "hidden", name)?,
            );
            let sq = || Tensor::zeros(&[w, w]);
            let v = || Tensor::zeros(&[w]);
            LayerFunction::SelfAttention(EncoderBlock {
                ln1: LayerNorm::new(w, t),
                wq: sq(),
                bq: v(),
                wk: sq(),
                bk: v(),
                wv: sq(),
                bv: v(),
                wo: sq(),
                bo: v(),
                ln2: LayerNorm::new(w, t),
                w1: Tensor::zeros(&[h, w]),
                b1: Tensor::zeros(&[h]),
                w2: Tensor::zeros(&[w, h]),
                b2: v(),
                tokens: t,
            })
        }
        "softmax-head" => {
            let (w, c): (usize, usize) = (get(&m, "width", name)?, get(&m, "classes", name)?);
            let hidden_name: String = get(&m, "hidden", name)?;
            let hidden = if hidden_name == "none" {
                None
            } else {
                let act = hidden_name
                    .parse()
                    .map_err(|e: String| Error::CorruptModel(format!("{name}: {e}")))?;
                Some(Dense::new(Tensor::zeros(&[w, w]), Tensor::zeros(&[w]), act))
            };
            let pool_name: String = get(&m, "pooling", name)?;
            let pooling = if pool_name == "none" {
                None
            } else {
                let (t, s) = pool_name
                    .split_once(':')
                    .and_then(|(t, s)| Some((t.parse().ok()?, s.parse().ok()?)))
                    .ok_or_else(|| Error::CorruptModel(format!("{name}: bad pooling '{pool_name}'")))?;
                Some(Pooling { tokens: t, slot: s })
            };
            LayerFunction::SoftmaxHead(Head {
                hidden,
                weight: Tensor::zeros(&[c, w]),
                bias: Tensor::zeros(&[c]),
                pooling,
            })
        }
        other => return Err(Error::CorruptModel(format!("{name}: unknown layer kind '{other}'"))),
    })
}

pub fn decode_model(bytes: &[u8]) -> Result<NetworkModel> {
    if bytes.len() >= MAGIC.len() && bytes.starts_with(MAGIC_STEM) && !bytes.starts_with(MAGIC) {
        return Err(Error::FormatVersion {
            found: String::from_utf8_lossy(&bytes[MAGIC_STEM.len()..MAGIC.len()]).into_owned(),
            expected: FORMAT_VERSION.into(),
        });
    }
    if !bytes.starts_with(MAGIC) {
        return Err(Error::CorruptModel("missing BLOODMDL1 magic".into()));
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let meta_len = r.u64("metadata length")? as usize;
    let meta = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|_| Error::CorruptModel("metadata is not UTF-8".into()))?;
    let meta: BTreeMap<String, String> = meta
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();

    let version: String = get(&meta, "format_version", "metadata")?;
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: version,
            expected: FORMAT_VERSION.into(),
        });
    }
    let arch: String = get(&meta, "architecture", "metadata")?;
    let architecture: Architecture = arch.parse().map_err(Error::CorruptModel)?;
    let num_classes: usize = get(&meta, "num_classes", "metadata")?;
    let slot: String = get(&meta, "pooled_slot", "metadata")?;
    let pooled_slot = if slot == "none" {
        None
    } else {
        Some(
            slot.parse()
                .map_err(|_| Error::CorruptModel(format!("bad pooled_slot '{slot}'")))?,
        )
    };
    let n_layers: usize = get(&meta, "layers", "metadata")?;

    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let key = format!("layer.{i}");
        let desc: String = get(&meta, &key, "metadata")?;
        let mut layer = skeleton(&desc, &key)?;
        for p in layer.params_mut() {
            let rank = r.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("tensor dims")? as usize);
            }
            if shape != p.shape() {
                return Err(Error::CorruptModel(format!(
                    "{key}: parameter shape {shape:?} does not match declared {:?}",
                    p.shape()
                )));
            }
            for v in p.data_mut() {
                *v = f64::from_le_bytes(r.take(8, "tensor data")?.try_into().unwrap());
            }
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = NetworkModel::new(layers, architecture, pooled_slot)
        .map_err(|e| Error::CorruptModel(format!("inconsistent layers: {e}")))?;
    if model.num_classes != num_classes {
        return Err(Error::CorruptModel("num_classes disagrees with head".into()));
    }
    Ok(model)
}
