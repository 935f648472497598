//! Channel-last image and binary mask buffers.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An `H×W×C` real image stored row-major, channel-last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{}×{}×{} image needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute per-element difference.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rounds every value to the nearest `f32`, the precision used on disk.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

/// An `H×W` binary mask, one byte (0 or 1) per pixel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    /// Replicates the mask into a 3-channel image with values in {0, 1}.
    pub fn to_rgb(&self) -> Image {
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for &b in &self.data {
            let v = f64::from(b);
            data.extend_from_slice(&[v, v, v]);
        }
        Image {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    /// Packs bits MSB-first; the final byte is zero-padded.
    pub fn pack_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.data.len().div_ceil(8)];
        for (i, &b) in self.data.iter().enumerate() {
            if b != 0 {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }

    pub fn unpack_bits(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let n = height * width;
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::Shape(format!(
                "packed {height}×{width} mask needs {} bytes, got {}",
                n.div_ceil(8),
                bytes.len()
            )));
        }
        let data = (0..n)
            .map(|i| u8::from(bytes[i / 8] & (0x80 >> (i % 8)) != 0))
            .collect();
        Ok(Self {
            height,
            width,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn mask_bit_packing_roundtrips(h in 1usize..20, w in 1usize..20, seed in any::<u64>()) {
            let mut m = Mask::zeros(h, w);
            for (i, b) in m.data.iter_mut().enumerate() {
                *b = ((crate::seed::derive(seed, i as u64) >> 7) & 1) as u8;
            }
            let packed = m.pack_bits();
            prop_assert_eq!(Mask::unpack_bits(h, w, &packed).unwrap(), m);
        }
    }

    #[test]
    fn rgb_replication() {
        let mut m = Mask::zeros(2, 2);
        m.data[3] = 1;
        let img = m.to_rgb();
        assert_eq!(&img.data[9..12], &[1.0, 1.0, 1.0]);
        assert!(img.data[..9].iter().all(|&v| v == 0.0));
    }
}
