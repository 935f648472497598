use crate::{Error, Image, Result};

/// `f(x) = w·x + b` over the pixels of an image; a reference model with
/// closed-form input gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weight: Image,
    pub bias: f64,
}

impl LinearModel {
    pub fn logit(&self, x: &Image) -> Result<f64> {
        if !self.weight.same_shape(x) {
            return Err(Error::Shape("linear model input shape".into()));
        }
        Ok(self.bias
            + self
                .weight
                .data
                .iter()
                .zip(&x.data)
                .map(|(w, v)| w * v)
                .sum::<f64>())
    }
}
