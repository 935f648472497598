use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::Differentiable;
use crate::{seed, Error, Image, Result};

/// L∞ PGD parameters; `epsilon` and `alpha` are in image units (`[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub epsilon: f64,
    pub steps: u32,
    pub alpha: f64,
    pub random_start: bool,
}

impl AttackSpec {
    pub const DEFAULT_STEPS: u32 = 20;

    /// 20 steps of size `2.5·ε/20` from a random start.
    pub fn with_defaults(epsilon: f64) -> Self {
        Self {
            epsilon,
            steps: Self::DEFAULT_STEPS,
            alpha: 2.5 * epsilon / Self::DEFAULT_STEPS as f64,
            random_start: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon {} must be ≥ 0",
                self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("PGD needs at least one step".into()));
        }
        if !(self.alpha > 0.0) && self.epsilon > 0.0 {
            return Err(Error::Config(format!(
                "alpha {} must be positive",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projected gradient ascent on the BCE of `model` at label `y`.
///
/// The random start draws one `u ∈ [−1, 1]^D` from `seed` and scales it by ε,
/// so the same seed gives nested starting points across budgets.
pub fn pgd_attack<M: Differentiable + ?Sized>(
    model: &M,
    x0: &Image,
    y: u8,
    spec: &AttackSpec,
    seed: u64,
) -> Result<Image> {
    spec.validate()?;
    if y > 1 {
        return Err(Error::Config(format!("label {y} is not binary")));
    }
    if spec.epsilon == 0.0 {
        return Ok(x0.clone());
    }
    let eps = spec.epsilon;
    let project = |x: &mut Image| {
        for (v, &o) in x.data.iter_mut().zip(&x0.data) {
            *v = v.clamp(o - eps, o + eps).clamp(0.0, 1.0);
        }
    };
    let mut x = x0.clone();
    if spec.random_start {
        let mut rng = seed::rng(seed);
        for v in x.data.iter_mut() {
            *v += eps * rng.random_range(-1.0..=1.0);
        }
        project(&mut x);
    }
    for _ in 0..spec.steps {
        let (_, grad) = model.logit_and_grad(&x)?;
        // d BCE / d logit = σ(logit) − y is negative for y = 1 and positive
        // for y = 0. Using that sign directly keeps the step alive when σ
        // rounds to exactly 0 or 1 on a confident model.
        let dl = if y == 1 { -1.0 } else { 1.0 };
        for (v, g) in x.data.iter_mut().zip(&grad.data) {
            *v += spec.alpha * sign(dl * g);
        }
        project(&mut x);
    }
    Ok(x)
}
