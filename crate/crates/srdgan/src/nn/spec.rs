//! Architecture descriptions for the four network roles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    H2lGen,
    L2hGen,
    Discriminator,
    FeatureExtractor,
}

/// Everything needed to rebuild a network's parameter shapes.
///
/// `input_size` is only meaningful for discriminators (they end in a dense
/// scalar logit, so the spatial size they classify is part of the shape).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub base_channels: usize,
    pub num_blocks: usize,
    pub scale_factor: usize,
    pub growth_channels: usize,
    #[serde(default)]
    pub input_size: usize,
}

impl NetworkSpec {
    /// Degradation generator, paper-scale defaults: 4 ResBlocks.
    pub fn h2l_default() -> Self {
        NetworkSpec {
            kind: NetworkKind::H2lGen,
            base_channels: 64,
            num_blocks: 4,
            scale_factor: 4,
            growth_channels: 0,
            input_size: 0,
        }
    }

    /// SR generator, paper-scale defaults: 25 RRDBs.
    pub fn l2h_default() -> Self {
        NetworkSpec {
            kind: NetworkKind::L2hGen,
            base_channels: 64,
            num_blocks: 25,
            scale_factor: 4,
            growth_channels: 32,
            input_size: 0,
        }
    }

    /// Strided-conv classifier for `input_size` x `input_size` patches.
    /// Stride-2 stages halve the spatial size until it is at most 6.
    pub fn discriminator_for(input_size: usize) -> Self {
        let mut size = input_size;
        let mut blocks = 0;
        while size > 6 {
            size = size.div_ceil(2);
            blocks += 1;
        }
        NetworkSpec {
            kind: NetworkKind::Discriminator,
            base_channels: 64,
            num_blocks: blocks.max(1),
            scale_factor: 1,
            growth_channels: 0,
            input_size,
        }
    }

    /// Fixed 5-layer conv feature network.
    pub fn feature_default() -> Self {
        NetworkSpec {
            kind: NetworkKind::FeatureExtractor,
            base_channels: 16,
            num_blocks: 5,
            scale_factor: 1,
            growth_channels: 0,
            input_size: 0,
        }
    }

    pub fn with_base_channels(mut self, c: usize) -> Self {
        self.base_channels = c;
        self
    }

    pub fn with_num_blocks(mut self, n: usize) -> Self {
        self.num_blocks = n;
        self
    }

    pub fn with_scale_factor(mut self, s: usize) -> Self {
        self.scale_factor = s;
        self
    }

    pub fn with_growth_channels(mut self, g: usize) -> Self {
        self.growth_channels = g;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 1 || self.num_blocks < 1 {
            return Err(Error::spec(format!(
                "base_channels and num_blocks must be >= 1, got {} / {}",
                self.base_channels, self.num_blocks
            )));
        }
        match self.kind {
            NetworkKind::H2lGen => {
                if self.scale_factor < 1 {
                    return Err(Error::spec("H2L scale_factor must be >= 1"));
                }
            }
            NetworkKind::L2hGen => {
                if !matches!(self.scale_factor, 1 | 2 | 4 | 8) {
                    return Err(Error::spec(format!(
                        "L2H scale_factor must be a power of two in 1..=8, got {}",
                        self.scale_factor
                    )));
                }
                if self.growth_channels < 1 {
                    return Err(Error::spec("L2H growth_channels must be >= 1"));
                }
            }
            NetworkKind::Discriminator => {
                if self.input_size < (1 << self.num_blocks) {
                    return Err(Error::spec(format!(
                        "discriminator input_size {} too small for {} stride-2 stages",
                        self.input_size, self.num_blocks
                    )));
                }
            }
            NetworkKind::FeatureExtractor => {
                if self.num_blocks != 5 {
                    return Err(Error::spec(
                        "feature extractor is a fixed 5-layer network",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_blocks_is_a_spec_error() {
        let bad = NetworkSpec { num_blocks: 0, ..NetworkSpec::h2l_default() };
        assert!(matches!(bad.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn discriminator_sizing_picks_stride_stages() {
        let d48 = NetworkSpec::discriminator_for(48);
        assert_eq!(d48.num_blocks, 3); // 48 -> 24 -> 12 -> 6
        let d192 = NetworkSpec::discriminator_for(192);
        assert_eq!(d192.num_blocks, 5); // 192 -> 96 -> 48 -> 24 -> 12 -> 6
        assert!(d48.validate().is_ok());
        assert!(d192.validate().is_ok());
    }
}
