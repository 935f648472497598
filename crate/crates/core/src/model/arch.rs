use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape of the encoder: stride-2 `kernel×kernel` convolutions with GELU,
/// global average pooling, then a linear projection to `d` dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub resolution: usize,
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub d: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            in_channels: 3,
            channels: vec![16, 32, 64],
            kernel: 3,
            d: 128,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(
                "encoder needs at least one block with non-zero width".into(),
            ));
        }
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(Error::Config(format!(
                "kernel size {} must be odd",
                self.kernel
            )));
        }
        if self.d == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "embedding dimension and input channels must be positive".into(),
            ));
        }
        let mut side = self.resolution;
        for _ in &self.channels {
            if side < 2 {
                return Err(Error::Config(format!(
                    "resolution {} too small for {} blocks",
                    self.resolution,
                    self.channels.len()
                )));
            }
            side = self.out_side(side);
        }
        Ok(())
    }

    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    /// Output side length of a stride-2 block with `same`-style padding.
    pub fn out_side(&self, side: usize) -> usize {
        (side + 2 * self.pad() - self.kernel) / 2 + 1
    }

    /// `(input side, output side, input channels, output channels)` per block.
    pub fn block_shapes(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut side = self.resolution;
        let mut cin = self.in_channels;
        self.channels
            .iter()
            .map(|&cout| {
                let out = self.out_side(side);
                let s = (side, out, cin, cout);
                side = out;
                cin = cout;
                s
            })
            .collect()
    }

    pub fn pooled_width(&self) -> usize {
        *self.channels.last().expect("validated")
    }
}
