use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
        })
    }
}

/// How negative tokens are drawn for the skip-gram loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeSampler {
    Uniform,
    /// Unigram counts raised to 3/4.
    Unigram,
}

impl FromStr for NegativeSampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NegativeSampler::Uniform),
            "unigram" => Ok(NegativeSampler::Unigram),
            other => Err(Error::Config(format!("unknown negative sampler {other:?}"))),
        }
    }
}

impl fmt::Display for NegativeSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeSampler::Uniform => "uniform",
            NegativeSampler::Unigram => "unigram",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub dim: usize,
    pub gcn_layers: usize,
    pub gcn_enabled: bool,
    pub activation: Activation,
    /// Negatives per positive, shared by triples and tokens.
    pub neg_samples: usize,
    /// Context tokens taken on each side of the center token.
    pub context_radius: usize,
    pub bias_b: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub kg_loss: bool,
    pub text_loss: bool,
    pub negative_sampler: NegativeSampler,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            dim: 300,
            gcn_layers: 2,
            gcn_enabled: true,
            activation: Activation::Relu,
            neg_samples: 5,
            context_radius: 5,
            bias_b: 2.0,
            batch_size: 512,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 10,
            kg_loss: true,
            text_loss: true,
            negative_sampler: NegativeSampler::Uniform,
        }
    }
}

impl OptimizerConfig {
    /// Small profile that trains a 500-entity graph in well under a minute.
    ///
    /// At 32 dimensions a two-layer ReLU encoder trained at α = 0.001 barely
    /// moves off its initialization and its outputs lose rank, so this profile
    /// uses one linear layer and a tenfold step size.
    pub fn desk() -> Self {
        OptimizerConfig {
            dim: 32,
            batch_size: 64,
            epochs: 300,
            gcn_layers: 1,
            activation: Activation::Identity,
            lr: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.bias_b > 0.0 && self.bias_b.is_finite()) {
            return fail("bias_b must be positive");
        }
        if self.context_radius < 1 {
            return fail("context_radius must be at least 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        if self.neg_samples < 1 {
            return fail("neg_samples must be at least 1");
        }
        if self.gcn_enabled && self.gcn_layers < 1 {
            return fail("gcn_layers must be at least 1 when the GCN is enabled");
        }
        if !self.kg_loss && !self.text_loss {
            return fail("both the KG and the text loss are disabled; nothing to train");
        }
        Ok(())
    }
}
