use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::arch::ArchConfig;
use crate::seed::{self, stream};
use crate::{Error, Result};

/// One convolution block. `kernel` is laid out `K×K×Cin×Cout`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Dense layer with `weight` laid out `in×out`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub blocks: Vec<ConvBlock>,
    pub projection: Linear,
}

/// Logistic head shared by image and mask embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub weight: Vec<f64>,
    pub bias: f64,
}

/// The full model: one encoder and one head. The same value doubles as a
/// gradient accumulator of identical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: ArchConfig,
    pub encoder: EncoderParams,
    pub head: HeadParams,
}

/// One named tensor in the flat parameter ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

fn he_normal(rng: &mut rand_chacha::ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive fan-in");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// He-normal weights (variance `2 / fan_in`) and zero biases.
pub fn init_params(arch: &ArchConfig, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = seed::rng(seed::derive(seed, stream::INIT));
    let k2 = arch.kernel * arch.kernel;
    let blocks = arch
        .block_shapes()
        .into_iter()
        .map(|(_, _, cin, cout)| ConvBlock {
            kernel: he_normal(&mut rng, k2 * cin, k2 * cin * cout),
            bias: vec![0.0; cout],
        })
        .collect();
    let pooled = arch.pooled_width();
    let projection = Linear {
        weight: he_normal(&mut rng, pooled, pooled * arch.d),
        bias: vec![0.0; arch.d],
    };
    let head = HeadParams {
        weight: he_normal(&mut rng, arch.d, arch.d),
        bias: 0.0,
    };
    Ok(ModelParams {
        arch: arch.clone(),
        encoder: EncoderParams { blocks, projection },
        head,
    })
}

impl ModelParams {
    pub fn zeros(arch: &ArchConfig) -> Self {
        let k2 = arch.kernel * arch.kernel;
        let blocks = arch
            .block_shapes()
            .into_iter()
            .map(|(_, _, cin, cout)| ConvBlock {
                kernel: vec![0.0; k2 * cin * cout],
                bias: vec![0.0; cout],
            })
            .collect();
        let pooled = arch.pooled_width();
        Self {
            arch: arch.clone(),
            encoder: EncoderParams {
                blocks,
                projection: Linear {
                    weight: vec![0.0; pooled * arch.d],
                    bias: vec![0.0; arch.d],
                },
            },
            head: HeadParams {
                weight: vec![0.0; arch.d],
                bias: 0.0,
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch)
    }

    /// Names and shapes in flat order: conv kernels and biases block by
    /// block, projection, then head.
    pub fn layout(&self) -> Vec<ParamEntry> {
        let k = self.arch.kernel;
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len = shape.iter().product();
            entries.push(ParamEntry {
                name,
                shape,
                offset,
                len,
            });
            offset += len;
        };
        for (i, (_, _, cin, cout)) in self.arch.block_shapes().into_iter().enumerate() {
            push(format!("conv{i}.kernel"), vec![k, k, cin, cout]);
            push(format!("conv{i}.bias"), vec![cout]);
        }
        let pooled = self.arch.pooled_width();
        push("projection.weight".into(), vec![pooled, self.arch.d]);
        push("projection.bias".into(), vec![self.arch.d]);
        push("head.weight".into(), vec![self.arch.d]);
        push("head.bias".into(), vec![]);
        entries
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut s: Vec<&[f64]> = Vec::new();
        for b in &self.encoder.blocks {
            s.push(&b.kernel);
            s.push(&b.bias);
        }
        s.push(&self.encoder.projection.weight);
        s.push(&self.encoder.projection.bias);
        s.push(&self.head.weight);
        s.push(std::slice::from_ref(&self.head.bias));
        s
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.encoder.blocks {
            s.push(&mut b.kernel);
            s.push(&mut b.bias);
        }
        s.push(&mut self.encoder.projection.weight);
        s.push(&mut self.encoder.projection.bias);
        s.push(&mut self.head.weight);
        s.push(std::slice::from_mut(&mut self.head.bias));
        s
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} values, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn from_flat(arch: &ArchConfig, flat: &[f64]) -> Result<Self> {
        arch.validate()?;
        let mut p = Self::zeros(arch);
        p.assign_flat(flat)?;
        Ok(p)
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter to `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}
