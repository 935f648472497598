//! Batch losses and gradients for both training objectives.

use ndarray::Array2;

use crate::losses::{
    bce_with_logits, total_loss, BatchEmbeddings, ContrastiveConfig, LogitBatch, LossBreakdown,
};
use crate::model::{backward, encode, logits, ModelParams};
use crate::{Error, Image, Result};

/// One MorphGen batch: raw patches, their augmentations and the masks
/// replicated to three channels.
#[derive(Debug, Clone, Copy)]
pub struct MorphgenBatch<'a> {
    pub images: &'a [Image],
    pub augmented: &'a [Image],
    pub masks: &'a [Image],
    pub labels: &'a [u8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads {
    pub images: Vec<Image>,
    pub augmented: Vec<Image>,
    pub masks: Vec<Image>,
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub breakdown: LossBreakdown,
    pub grads: ModelParams,
    pub input_grads: Option<InputGrads>,
}

fn head_grad(grads: &mut ModelParams, z: &Array2<f64>, dlogit: &[f64]) {
    for (row, &g) in z.rows().into_iter().zip(dlogit) {
        grads
            .head
            .weight
            .iter_mut()
            .zip(row)
            .for_each(|(w, &zi)| *w += g * zi);
        grads.head.bias += g;
    }
}

/// Adds `dlogit_i · w` to row `i` of `dz`.
fn through_head(dz: &mut Array2<f64>, weight: &[f64], dlogit: &[f64]) {
    for (mut row, &g) in dz.rows_mut().into_iter().zip(dlogit) {
        row.iter_mut().zip(weight).for_each(|(d, &w)| *d += g * w);
    }
}

/// `align + BCE(y, ŷ) + BCE(y, ŷ′)` where `ŷ` classifies the augmented patch
/// embedding and `ŷ′` the mask embedding, both with the shared head.
pub fn morphgen_batch(
    params: &ModelParams,
    batch: MorphgenBatch<'_>,
    cfg: &ContrastiveConfig,
    want_input: bool,
) -> Result<BatchOutcome> {
    let n = batch.labels.len();
    if batch.images.len() != n || batch.augmented.len() != n || batch.masks.len() != n {
        return Err(Error::Shape("batch components differ in length".into()));
    }
    let (enc, arch) = (&params.encoder, &params.arch);
    let (z_img, c_img) = encode(enc, arch, batch.images)?;
    let (z_aug, c_aug) = encode(enc, arch, batch.augmented)?;
    let (z_mask, c_mask) = encode(enc, arch, batch.masks)?;
    let lb = LogitBatch {
        y: batch.labels.to_vec(),
        logits: logits(&params.head, &z_aug),
        logits_prime: logits(&params.head, &z_mask),
    };
    let emb = BatchEmbeddings {
        z_mask,
        z_aug,
        z_img,
    };
    let (breakdown, lg) = total_loss(&emb, cfg, &lb)?;

    let mut grads = params.zeros_like();
    head_grad(&mut grads, &emb.z_aug, &lg.logits);
    head_grad(&mut grads, &emb.z_mask, &lg.logits_prime);
    let mut d = lg.embeddings;
    through_head(&mut d.z_aug, &params.head.weight, &lg.logits);
    through_head(&mut d.z_mask, &params.head.weight, &lg.logits_prime);

    let g_img = backward(enc, arch, c_img, &d.z_img, want_input)?;
    let g_aug = backward(enc, arch, c_aug, &d.z_aug, want_input)?;
    let g_mask = backward(enc, arch, c_mask, &d.z_mask, want_input)?;
    for g in [&g_img, &g_aug, &g_mask] {
        crate::model::encoder::add_encoder(&mut grads.encoder, &g.params);
    }
    let input_grads = match (g_img.inputs, g_aug.inputs, g_mask.inputs) {
        (Some(images), Some(augmented), Some(masks)) => Some(InputGrads {
            images,
            augmented,
            masks,
        }),
        _ => None,
    };
    Ok(BatchOutcome {
        breakdown,
        grads,
        input_grads,
    })
}

/// `BCE(y, ŷ)` on raw patches. The alignment columns are reported as zero.
pub fn erm_batch(
    params: &ModelParams,
    images: &[Image],
    labels: &[u8],
    want_input: bool,
) -> Result<BatchOutcome> {
    let (enc, arch) = (&params.encoder, &params.arch);
    let (z, cache) = encode(enc, arch, images)?;
    let (bce, dlogit) = bce_with_logits(labels, &logits(&params.head, &z))?;
    let mut grads = params.zeros_like();
    head_grad(&mut grads, &z, &dlogit);
    let mut dz = Array2::zeros(z.dim());
    through_head(&mut dz, &params.head.weight, &dlogit);
    let g = backward(enc, arch, cache, &dz, want_input)?;
    grads.encoder = g.params;
    Ok(BatchOutcome {
        breakdown: LossBreakdown {
            bce,
            total: bce,
            ..Default::default()
        },
        grads,
        input_grads: g.inputs.map(|images| InputGrads {
            images,
            augmented: Vec::new(),
            masks: Vec::new(),
        }),
    })
}
