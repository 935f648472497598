//! The shared encoder and classification head.

pub mod arch;
pub mod checkpoint;
pub mod encoder;
pub mod layers;
pub mod linear;
pub mod params;

pub use arch::ArchConfig;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingBlobs};
pub use encoder::{backward, classify, embed, encode, logits, sigmoid, EncoderGrads, ForwardCache};
pub use linear::LinearModel;
pub use params::{init_params, ConvBlock, EncoderParams, HeadParams, Linear, ModelParams};

use crate::{Image, Result};

/// A scalar-output model with input gradients; the interface used by
/// adversarial attacks and attribution.
pub trait Differentiable: Sync {
    /// Logit of the tumor class.
    fn logit(&self, x: &Image) -> Result<f64>;
    fn logit_and_grad(&self, x: &Image) -> Result<(f64, Image)>;
}

impl Differentiable for ModelParams {
    fn logit(&self, x: &Image) -> Result<f64> {
        ModelParams::logit(self, x)
    }

    fn logit_and_grad(&self, x: &Image) -> Result<(f64, Image)> {
        self.logit_and_input_grad(x)
    }
}

impl Differentiable for LinearModel {
    fn logit(&self, x: &Image) -> Result<f64> {
        LinearModel::logit(self, x)
    }

    fn logit_and_grad(&self, x: &Image) -> Result<(f64, Image)> {
        Ok((LinearModel::logit(self, x)?, self.weight.clone()))
    }
}
