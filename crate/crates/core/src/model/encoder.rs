//! Forward and backward passes of the shared encoder and the logistic head.

use ndarray::Array2;
use rayon::prelude::*;

use super::layers::{col2im, gelu, gelu_grad, gemm, im2col, ConvShape};
use super::params::{EncoderParams, HeadParams, ModelParams};
use super::ArchConfig;
use crate::{Error, Image, Result};

fn conv_shapes(arch: &ArchConfig) -> Vec<ConvShape> {
    arch.block_shapes()
        .into_iter()
        .map(|(side_in, side_out, cin, cout)| ConvShape {
            side_in,
            side_out,
            cin,
            cout,
            kernel: arch.kernel,
            pad: arch.pad(),
        })
        .collect()
}

/// Fixed input normalization `(x − INPUT_MEAN) / INPUT_STD` applied before
/// the first convolution.
pub const INPUT_MEAN: f64 = 0.5;
pub const INPUT_STD: f64 = 0.25;

fn check_input(arch: &ArchConfig, x: &Image) -> Result<()> {
    if x.height != arch.resolution || x.width != arch.resolution || x.channels != arch.in_channels {
        return Err(Error::Shape(format!(
            "encoder expects {r}×{r}×{c} input, got {}×{}×{}",
            x.height,
            x.width,
            x.channels,
            r = arch.resolution,
            c = arch.in_channels
        )));
    }
    Ok(())
}

/// Intermediate values of one sample's forward pass.
#[derive(Debug)]
pub struct SampleCache {
    cols: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

fn forward_impl(
    enc: &EncoderParams,
    arch: &ArchConfig,
    x: &Image,
    keep: bool,
) -> (Vec<f64>, Option<SampleCache>) {
    let shapes = conv_shapes(arch);
    let mut act: Vec<f64> = x
        .data
        .iter()
        .map(|v| (v - INPUT_MEAN) / INPUT_STD)
        .collect();
    let mut cols_cache = Vec::new();
    let mut pre_cache = Vec::new();
    for (block, s) in enc.blocks.iter().zip(&shapes) {
        let cols = im2col(&act, s);
        let p = s.positions();
        let mut pre = Vec::with_capacity(p * s.cout);
        for _ in 0..p {
            pre.extend_from_slice(&block.bias);
        }
        gemm(
            1.0,
            &cols,
            (p, s.patch_len()),
            false,
            &block.kernel,
            (s.patch_len(), s.cout),
            false,
            1.0,
            &mut pre,
        );
        act = pre.iter().map(|&v| gelu(v)).collect();
        if keep {
            cols_cache.push(cols);
            pre_cache.push(pre);
        }
    }
    let last = shapes.last().expect("at least one block");
    let p = last.positions();
    let mut pooled = vec![0.0; last.cout];
    for row in act.chunks_exact(last.cout) {
        pooled.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    pooled.iter_mut().for_each(|v| *v /= p as f64);

    let proj = &enc.projection;
    let mut z = proj.bias.clone();
    gemm(
        1.0,
        &pooled,
        (1, last.cout),
        false,
        &proj.weight,
        (last.cout, arch.d),
        false,
        1.0,
        &mut z,
    );
    let cache = keep.then_some(SampleCache {
        cols: cols_cache,
        pre: pre_cache,
        pooled,
    });
    (z, cache)
}

/// Embeds one image without keeping intermediates.
pub fn encode_one(enc: &EncoderParams, arch: &ArchConfig, x: &Image) -> Result<Vec<f64>> {
    check_input(arch, x)?;
    Ok(forward_impl(enc, arch, x, false).0)
}

/// Embeds one image and keeps what the backward pass needs.
pub fn encode_one_cached(
    enc: &EncoderParams,
    arch: &ArchConfig,
    x: &Image,
) -> Result<(Vec<f64>, SampleCache)> {
    check_input(arch, x)?;
    let (z, cache) = forward_impl(enc, arch, x, true);
    Ok((z, cache.expect("cache requested")))
}

/// Back-propagates `dz` through one cached sample.
///
/// Parameter gradients are added into `grads` when given; the input gradient
/// is returned when `want_input` is set. The cache is consumed.
pub fn backward_one(
    enc: &EncoderParams,
    arch: &ArchConfig,
    cache: SampleCache,
    dz: &[f64],
    mut grads: Option<&mut EncoderParams>,
    want_input: bool,
) -> Option<Image> {
    let shapes = conv_shapes(arch);
    let last = shapes.last().expect("at least one block");
    let pw = last.cout;

    if let Some(g) = grads.as_deref_mut() {
        gemm(
            1.0,
            &cache.pooled,
            (pw, 1),
            false,
            dz,
            (1, arch.d),
            false,
            1.0,
            &mut g.projection.weight,
        );
        g.projection
            .bias
            .iter_mut()
            .zip(dz)
            .for_each(|(b, d)| *b += d);
    }
    let mut dpooled = vec![0.0; pw];
    gemm(
        1.0,
        &enc.projection.weight,
        (pw, arch.d),
        false,
        dz,
        (arch.d, 1),
        false,
        0.0,
        &mut dpooled,
    );

    let p = last.positions() as f64;
    let mut dact: Vec<f64> = std::iter::repeat_n(dpooled.iter().map(|v| v / p), last.positions())
        .flatten()
        .collect();

    let mut input_grad = None;
    for (b, s) in shapes.iter().enumerate().rev() {
        let pre = &cache.pre[b];
        let dpre: Vec<f64> = dact
            .iter()
            .zip(pre)
            .map(|(d, &v)| d * gelu_grad(v))
            .collect();
        let positions = s.positions();
        if let Some(g) = grads.as_deref_mut() {
            let gb = &mut g.blocks[b];
            gemm(
                1.0,
                &cache.cols[b],
                (positions, s.patch_len()),
                true,
                &dpre,
                (positions, s.cout),
                false,
                1.0,
                &mut gb.kernel,
            );
            for row in dpre.chunks_exact(s.cout) {
                gb.bias.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
        }
        if b == 0 && !want_input {
            break;
        }
        let mut dcols = vec![0.0; positions * s.patch_len()];
        gemm(
            1.0,
            &dpre,
            (positions, s.cout),
            false,
            &enc.blocks[b].kernel,
            (s.patch_len(), s.cout),
            true,
            0.0,
            &mut dcols,
        );
        dact = col2im(&dcols, s);
        if b == 0 {
            dact.iter_mut().for_each(|v| *v /= INPUT_STD);
            input_grad = Some(Image {
                height: s.side_in,
                width: s.side_in,
                channels: s.cin,
                data: std::mem::take(&mut dact),
            });
        }
    }
    input_grad
}

/// Caches of one batched forward call. Consumed by [`backward`], so a cache
/// can never be replayed.
#[derive(Debug)]
pub struct ForwardCache {
    samples: Vec<SampleCache>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Embeds a batch, returning an `N×d` matrix and the cache.
pub fn encode(
    enc: &EncoderParams,
    arch: &ArchConfig,
    batch: &[Image],
) -> Result<(Array2<f64>, ForwardCache)> {
    let out: Vec<(Vec<f64>, SampleCache)> = batch
        .par_iter()
        .map(|x| encode_one_cached(enc, arch, x))
        .collect::<Result<_>>()?;
    let mut z = Array2::zeros((batch.len(), arch.d));
    let mut samples = Vec::with_capacity(batch.len());
    for (i, (row, cache)) in out.into_iter().enumerate() {
        z.row_mut(i).iter_mut().zip(&row).for_each(|(a, b)| *a = *b);
        samples.push(cache);
    }
    Ok((z, ForwardCache { samples }))
}

/// Embeds a batch without caches.
pub fn embed(enc: &EncoderParams, arch: &ArchConfig, batch: &[Image]) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|x| encode_one(enc, arch, x))
        .collect::<Result<_>>()?;
    let mut z = Array2::zeros((batch.len(), arch.d));
    for (i, row) in rows.iter().enumerate() {
        z.row_mut(i).iter_mut().zip(row).for_each(|(a, b)| *a = *b);
    }
    Ok(z)
}

/// Encoder gradients plus optional per-sample input gradients.
#[derive(Debug)]
pub struct EncoderGrads {
    pub params: EncoderParams,
    pub inputs: Option<Vec<Image>>,
}

/// Back-propagates upstream embedding gradients `dz` (`N×d`) through a batch.
///
/// Per-sample gradients are summed in sample order, so the result does not
/// depend on thread scheduling.
pub fn backward(
    enc: &EncoderParams,
    arch: &ArchConfig,
    cache: ForwardCache,
    dz: &Array2<f64>,
    want_input: bool,
) -> Result<EncoderGrads> {
    if dz.nrows() != cache.samples.len() || dz.ncols() != arch.d {
        return Err(Error::Shape(format!(
            "upstream gradient is {}×{}, cache holds {}×{}",
            dz.nrows(),
            dz.ncols(),
            cache.samples.len(),
            arch.d
        )));
    }
    let zero = ModelParams::zeros(arch).encoder;
    let per_sample: Vec<(EncoderParams, Option<Image>)> = cache
        .samples
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut g = zero.clone();
            let row: Vec<f64> = dz.row(i).to_vec();
            let gi = backward_one(enc, arch, c, &row, Some(&mut g), want_input);
            (g, gi)
        })
        .collect();
    let mut total = zero;
    let mut inputs = want_input.then(Vec::new);
    for (g, gi) in per_sample {
        add_encoder(&mut total, &g);
        if let (Some(v), Some(img)) = (inputs.as_mut(), gi) {
            v.push(img);
        }
    }
    Ok(EncoderGrads {
        params: total,
        inputs,
    })
}

pub(crate) fn add_encoder(acc: &mut EncoderParams, g: &EncoderParams) {
    for (a, b) in acc.blocks.iter_mut().zip(&g.blocks) {
        a.kernel
            .iter_mut()
            .zip(&b.kernel)
            .for_each(|(x, y)| *x += y);
        a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
    }
    let (a, b) = (&mut acc.projection, &g.projection);
    a.weight
        .iter_mut()
        .zip(&b.weight)
        .for_each(|(x, y)| *x += y);
    a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Head logits `w·z_i + b` for every embedding row.
pub fn logits(head: &HeadParams, z: &Array2<f64>) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|r| head.bias + r.iter().zip(&head.weight).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Probabilities `sigmoid(w·z_i + b)`.
pub fn classify(head: &HeadParams, z: &Array2<f64>) -> Vec<f64> {
    logits(head, z).into_iter().map(sigmoid).collect()
}

impl ModelParams {
    /// Logit of the tumor class for one image.
    pub fn logit(&self, x: &Image) -> Result<f64> {
        let z = encode_one(&self.encoder, &self.arch, x)?;
        Ok(self.head.bias
            + z.iter()
                .zip(&self.head.weight)
                .map(|(a, b)| a * b)
                .sum::<f64>())
    }

    /// Logit and its gradient with respect to the input pixels.
    pub fn logit_and_input_grad(&self, x: &Image) -> Result<(f64, Image)> {
        let (z, cache) = encode_one_cached(&self.encoder, &self.arch, x)?;
        let logit = self.head.bias
            + z.iter()
                .zip(&self.head.weight)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let g = backward_one(
            &self.encoder,
            &self.arch,
            cache,
            &self.head.weight,
            None,
            true,
        )
        .expect("input gradient requested");
        Ok((logit, g))
    }
}
