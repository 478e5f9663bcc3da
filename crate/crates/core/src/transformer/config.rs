use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    /// Tanh approximation.
    Gelu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044715 * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Which position's output feeds the classifier head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// First prompt position (decoder style).
    FirstPrompt,
    /// A mask token appended after the input (encoder style).
    MaskToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding width `d`.
    pub d: usize,
    pub heads: usize,
    /// FFN inner width `M`.
    pub ffn_dim: usize,
    pub activation: Activation,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub readout: Readout,
    /// Standard deviation of the Gaussian weight init.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            heads: 2,
            ffn_dim: 128,
            activation: Activation::Gelu,
            vocab_size: 2048,
            num_classes: 2,
            readout: Readout::FirstPrompt,
            init_std: 0.02,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || !self.d.is_multiple_of(self.heads) {
            return Err(Error::InvalidInput(format!(
                "heads ({}) must divide d ({})",
                self.heads, self.d
            )));
        }
        if self.ffn_dim == 0 {
            return Err(Error::InvalidInput("ffn_dim must be at least 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidInput("vocab_size must be at least 2".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidInput("need at least two classes".into()));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::InvalidInput("init_std must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_derivatives_match_finite_differences() {
        for act in [Activation::Identity, Activation::Relu, Activation::Gelu] {
            for &x in &[-2.3, -0.4, 0.3, 1.7, 4.0] {
                let h = 1e-6;
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = ModelConfig {
            d: 10,
            heads: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
