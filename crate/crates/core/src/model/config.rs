use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::numerics::kernels;
use crate::wavelet::{self, WaveletFamily};

/// One encoder convolution; the decoder mirrors it with a transposed
/// convolution. Padding is `kernel / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub kernel: usize,
    pub features: usize,
    pub stride: usize,
}

impl ConvLayer {
    pub fn padding(&self) -> usize {
        self.kernel / 2
    }
}

/// Comma-separated `kernel:features:stride` triples, e.g. `7:32:2,5:64:2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec(pub Vec<ConvLayer>);

impl Default for ConvSpec {
    fn default() -> Self {
        ConvSpec(vec![
            ConvLayer {
                kernel: 7,
                features: 32,
                stride: 2,
            },
            ConvLayer {
                kernel: 5,
                features: 64,
                stride: 2,
            },
        ])
    }
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|l| format!("{}:{}:{}", l.kernel, l.features, l.stride))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ConvSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let layers = s
            .split(',')
            .map(|part| {
                let nums: Vec<usize> = part
                    .trim()
                    .split(':')
                    .map(|n| n.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("bad conv layer `{part}`")))?;
                match nums[..] {
                    [kernel, features, stride] => Ok(ConvLayer {
                        kernel,
                        features,
                        stride,
                    }),
                    _ => Err(Error::Config(format!(
                        "conv layer `{part}` must be kernel:features:stride"
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvSpec(layers))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub channels: usize,
    pub fragment_length: usize,
    pub levels: usize,
    pub family: WaveletFamily,
    pub conv: ConvSpec,
    pub lstm_hidden: usize,
    pub classifier: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults: `T = 512`, `L = 3`, Haar, two conv layers, `H = 32`.
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            fragment_length: 512,
            levels: 3,
            family: WaveletFamily::Haar,
            conv: ConvSpec::default(),
            lstm_hidden: 32,
            classifier: false,
            seed: 0,
        }
    }

    pub fn scales(&self) -> usize {
        self.levels + 1
    }

    pub fn code_len(&self) -> usize {
        self.scales() * self.lstm_hidden
    }

    /// Input length at scale `l` (scale 0 is the raw signal).
    pub fn scale_len(&self, scale: usize) -> usize {
        self.fragment_length >> scale
    }

    /// Lengths after each conv layer for one scale, starting with the input
    /// length.
    pub fn conv_lengths(&self, scale: usize) -> Result<Vec<usize>> {
        let mut lens = vec![self.scale_len(scale)];
        for (j, layer) in self.conv.0.iter().enumerate() {
            let n = *lens.last().unwrap();
            let out = kernels::conv_out_len(n, layer.kernel, layer.stride, layer.padding()).ok_or_else(|| {
                Error::Config(format!(
                    "conv layer {j} (kernel {}) does not fit scale {scale} input of length {n}",
                    layer.kernel
                ))
            })?;
            lens.push(out);
        }
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.channels >= 1, Config, "model needs at least one channel");
        ensure!(self.fragment_length >= 1, Config, "fragment length must be positive");
        ensure!(self.lstm_hidden >= 1, Config, "LSTM hidden size must be positive");
        ensure!(!self.conv.0.is_empty(), Config, "conv stack needs at least one layer");
        for l in &self.conv.0 {
            ensure!(
                l.kernel >= 1 && l.features >= 1 && l.stride >= 1,
                Config,
                "conv layer {l:?} has a zero entry"
            );
        }
        ensure!(
            self.fragment_length.is_multiple_of(1 << self.levels),
            Config,
            "fragment length {} not divisible by 2^{}",
            self.fragment_length,
            self.levels
        );
        if self.levels > 0 {
            wavelet::check_levels(self.fragment_length, self.levels, self.family)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        for scale in 0..self.scales() {
            self.conv_lengths(scale)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_spec_text() {
        let spec: ConvSpec = "7:32:2,5:64:2".parse().unwrap();
        assert_eq!(spec, ConvSpec::default());
        assert_eq!(spec.to_string(), "7:32:2,5:64:2");
        assert!("7:32".parse::<ConvSpec>().is_err());
        assert!("a:b:c".parse::<ConvSpec>().is_err());
    }

    #[test]
    fn default_lengths() {
        let cfg = ModelConfig::new(26);
        cfg.validate().unwrap();
        assert_eq!(cfg.code_len(), 128);
        assert_eq!(cfg.conv_lengths(0).unwrap(), vec![512, 256, 128]);
        assert_eq!(cfg.conv_lengths(3).unwrap(), vec![64, 32, 16]);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ModelConfig::new(2);
        cfg.fragment_length = 100;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ModelConfig::new(2);
        cfg.fragment_length = 16;
        cfg.levels = 4;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ModelConfig::new(2);
        cfg.lstm_hidden = 0;
        assert!(cfg.validate().is_err());
    }
}
