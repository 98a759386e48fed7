//! MAT-CENet, the XLCNet baseline, and their parameter/operation counter.
//!
//! Both networks map a packed LS estimate `[N, √M, √M, 2]` to a refined
//! estimate of the same shape by predicting the noise and subtracting it.

mod attention;
mod blocks;
mod encoder;
mod flops;
mod matcenet;
mod xlcnet;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};

pub use attention::{FeatureMapAttention, SpatialAttention};
pub use blocks::ConvBlock;
pub use encoder::{Encoder, EncoderTrace};
pub use flops::{count_params_flops, FlopsEntry, FlopsReport, LayerDims};
pub use matcenet::{MatCenet, MatCenetActivations, MatCenetConfig};
pub use xlcnet::{Xlcnet, XlcnetConfig};

use crate::nn::{Checkpoint, Layer, Mode, NnError, Parameterized, Role, Scalar, Tensor};

/// Prefix of the checkpoint pseudo-entry that carries the architecture descriptor.
pub const ARCH_ENTRY_PREFIX: &str = "@arch:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    MatCenet,
    Xlcnet,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MatCenet => "matcenet",
            ModelKind::Xlcnet => "xlcnet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matcenet" => Some(ModelKind::MatCenet),
            "xlcnet" => Some(ModelKind::Xlcnet),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A complete network description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    MatCenet(MatCenetConfig),
    Xlcnet(XlcnetConfig),
}

impl Architecture {
    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::MatCenet(_) => ModelKind::MatCenet,
            Architecture::Xlcnet(_) => ModelKind::Xlcnet,
        }
    }

    pub fn antennas(&self) -> usize {
        match self {
            Architecture::MatCenet(c) => c.antennas,
            Architecture::Xlcnet(c) => c.antennas,
        }
    }

    /// `key=value` pairs, e.g.
    /// `model=matcenet,M=64,F=32,h=4,ffn_hidden=128,n_encoders=2,residual=subtract`.
    pub fn descriptor(&self) -> String {
        match self {
            Architecture::MatCenet(c) => format!(
                "model=matcenet,M={},F={},h={},ffn_hidden={},n_encoders={},residual=subtract",
                c.antennas,
                c.features,
                c.heads,
                c.ffn_hidden,
                MatCenetConfig::N_ENCODERS
            ),
            Architecture::Xlcnet(c) => format!(
                "model=xlcnet,M={},F={},n_conv={},residual=subtract",
                c.antennas,
                c.features,
                XlcnetConfig::N_HIDDEN_CONV + 1
            ),
        }
    }

    pub fn parse_descriptor(s: &str) -> Result<Self, NnError> {
        let bad = |msg: String| NnError::Config(format!("architecture descriptor {s:?}: {msg}"));
        let mut kv = BTreeMap::new();
        for part in s.split(',') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("malformed pair {part:?}")))?;
            kv.insert(k.trim(), v.trim());
        }
        let num = |k: &str| -> Result<usize, NnError> {
            kv.get(k)
                .ok_or_else(|| bad(format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(format!("{k} is not an integer")))
        };
        if kv.get("residual").copied() != Some("subtract") {
            return Err(bad("only residual=subtract is supported".into()));
        }
        let arch = match kv.get("model").copied() {
            Some("matcenet") => {
                if num("n_encoders")? != MatCenetConfig::N_ENCODERS {
                    return Err(bad("n_encoders must be 2".into()));
                }
                let c = MatCenetConfig {
                    antennas: num("M")?,
                    features: num("F")?,
                    heads: num("h")?,
                    ffn_hidden: num("ffn_hidden")?,
                };
                c.validate()?;
                Architecture::MatCenet(c)
            }
            Some("xlcnet") => {
                if num("n_conv")? != XlcnetConfig::N_HIDDEN_CONV + 1 {
                    return Err(bad("n_conv must be 9".into()));
                }
                let c = XlcnetConfig {
                    antennas: num("M")?,
                    features: num("F")?,
                };
                c.validate()?;
                Architecture::Xlcnet(c)
            }
            other => return Err(bad(format!("unknown model {other:?}"))),
        };
        Ok(arch)
    }

    /// Reads the descriptor embedded in a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        let entry = ck
            .entries
            .iter()
            .find_map(|e| e.name.strip_prefix(ARCH_ENTRY_PREFIX))
            .ok_or_else(|| NnError::Checkpoint("no architecture descriptor".into()))?;
        Self::parse_descriptor(entry)
    }
}

/// Either network behind one type.
#[derive(Debug, Clone)]
pub enum Network<T: Scalar> {
    MatCenet(MatCenet<T>),
    Xlcnet(Xlcnet<T>),
}

impl<T: Scalar> Network<T> {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self, NnError> {
        Ok(match arch {
            Architecture::MatCenet(c) => Network::MatCenet(MatCenet::new(*c, rng)?),
            Architecture::Xlcnet(c) => Network::Xlcnet(Xlcnet::new(*c, rng)?),
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Network::MatCenet(n) => Architecture::MatCenet(n.cfg),
            Network::Xlcnet(n) => Architecture::Xlcnet(n.cfg),
        }
    }

    /// All weights and buffers plus the architecture descriptor.
    pub fn to_checkpoint(&mut self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push(format!("{ARCH_ENTRY_PREFIX}{}", self.architecture().descriptor()), &[0], Vec::new());
        ck.entries.extend(Checkpoint::from_model(self).entries);
        ck
    }

    /// Rebuilds a network from a checkpoint, validating every tensor.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        let arch = Architecture::from_checkpoint(ck)?;
        let mut rng = rand_chacha::ChaCha8Rng::from_seed([0; 32]);
        let mut net = Self::new(&arch, &mut rng)?;
        ck.load_into(&mut net)?;
        Ok(net)
    }

    /// Inference on a batch too large to process at once.
    pub fn predict_batched(&mut self, x: &Tensor<T>, batch: usize) -> Result<Tensor<T>, NnError> {
        let n = x.shape().first().copied().unwrap_or(0);
        let per = x.len() / n.max(1);
        let mut out = Vec::with_capacity(x.len());
        for start in (0..n).step_by(batch.max(1)) {
            let end = (start + batch.max(1)).min(n);
            let mut shape = x.shape().to_vec();
            shape[0] = end - start;
            let chunk = Tensor::from_vec(&shape, x.data()[start * per..end * per].to_vec())?;
            out.extend_from_slice(self.forward(&chunk, Mode::Infer)?.data());
        }
        Tensor::from_vec(x.shape(), out)
    }
}

impl<T: Scalar> Parameterized<T> for Network<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        match self {
            Network::MatCenet(n) => n.visit(f),
            Network::Xlcnet(n) => n.visit(f),
        }
    }
}

impl<T: Scalar> Layer<T> for Network<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        match self {
            Network::MatCenet(n) => n.forward(x, mode),
            Network::Xlcnet(n) => n.forward(x, mode),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Network::MatCenet(n) => n.backward(dy),
            Network::Xlcnet(n) => n.backward(dy),
        }
    }
}
