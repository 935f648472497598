//! Mask-anchored contrastive alignment and dual binary cross-entropy.
//!
//! For a batch of `N` triples the alignment loss is
//!
//! ```text
//! attract = 1/N · Σ_i (1 − cos(z_mask_i, z_aug_i))
//! repel   = λ/(N(N−1)) · Σ_i Σ_{j≠i} max(0, cos(z_img_j, z_mask_i) − η)²
//! align   = attract + repel
//! ```
//!
//! and the classification loss is `BCE(y, ŷ) + BCE(y, ŷ′)`, where `ŷ` comes
//! from patch embeddings and `ŷ′` from mask embeddings. Every term returns its
//! gradient alongside its value. Zero-norm rows are reported as errors rather
//! than regularised, so cosine terms stay exactly scale invariant.

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::model::sigmoid;
use crate::{Error, Result};

/// Probability clamp keeping BCE finite.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchEmbeddings {
    /// Anchors: mask embeddings.
    pub z_mask: Array2<f64>,
    /// Positives: augmented patch embeddings.
    pub z_aug: Array2<f64>,
    /// Negatives: patch embeddings.
    pub z_img: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub lambda: f64,
    pub eta: f64,
    /// Also attract each anchor to its un-augmented patch.
    pub include_original_positive: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            eta: 0.3,
            include_original_positive: false,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be ≥ 0", self.lambda)));
        }
        if !(-1.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta {} outside [-1, 1]", self.eta)));
        }
        Ok(())
    }
}

/// Labels with primary and secondary probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBatch {
    pub y: Vec<u8>,
    pub y_hat: Vec<f64>,
    pub y_hat_prime: Vec<f64>,
}

/// Labels with the logits behind `ŷ` and `ŷ′`; used where gradients are needed.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    pub y: Vec<u8>,
    pub logits: Vec<f64>,
    pub logits_prime: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub attract: f64,
    pub repel: f64,
    pub align: f64,
    pub bce: f64,
    pub total: f64,
}

/// Gradients with respect to the three embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub z_mask: Array2<f64>,
    pub z_aug: Array2<f64>,
    pub z_img: Array2<f64>,
}

impl EmbeddingGrads {
    fn zeros(n: usize, d: usize) -> Self {
        Self {
            z_mask: Array2::zeros((n, d)),
            z_aug: Array2::zeros((n, d)),
            z_img: Array2::zeros((n, d)),
        }
    }

    fn add(&mut self, other: &EmbeddingGrads) {
        self.z_mask += &other.z_mask;
        self.z_aug += &other.z_aug;
        self.z_img += &other.z_img;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub embeddings: EmbeddingGrads,
    pub logits: Vec<f64>,
    pub logits_prime: Vec<f64>,
}

fn check_embeddings(emb: &BatchEmbeddings) -> Result<(usize, usize)> {
    let dim = emb.z_mask.dim();
    if emb.z_aug.dim() != dim || emb.z_img.dim() != dim {
        return Err(Error::Shape(format!(
            "embedding matrices disagree: {:?}, {:?}, {:?}",
            dim,
            emb.z_aug.dim(),
            emb.z_img.dim()
        )));
    }
    if dim.0 == 0 {
        return Err(Error::BatchTooSmall("empty batch".into()));
    }
    for (name, m) in [
        ("z_mask", &emb.z_mask),
        ("z_aug", &emb.z_aug),
        ("z_img", &emb.z_img),
    ] {
        if let Some(row) = m
            .rows()
            .into_iter()
            .position(|r| r.iter().all(|&v| v == 0.0))
        {
            return Err(Error::ZeroNorm { matrix: name, row });
        }
    }
    Ok(dim)
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Cosine similarity and its gradients with respect to both arguments.
fn cosine_with_grads(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
) -> (f64, ndarray::Array1<f64>, ndarray::Array1<f64>) {
    let na = norm(a);
    let nb = norm(b);
    let c = a.dot(&b) / (na * nb);
    let da = &b / (na * nb) - &a * (c / (na * na));
    let db = &a / (na * nb) - &b * (c / (nb * nb));
    (c, da, db)
}

/// Plain cosine similarity.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b) / (norm(a) * norm(b))
}

fn axpy(mut dst: ArrayViewMut1<f64>, alpha: f64, x: &ndarray::Array1<f64>) {
    dst.scaled_add(alpha, x);
}

fn attract_pairs(
    a: &Array2<f64>,
    b: &Array2<f64>,
    grads_a: &mut Array2<f64>,
    grads_b: &mut Array2<f64>,
) -> f64 {
    let n = a.nrows() as f64;
    let mut value = 0.0;
    for i in 0..a.nrows() {
        let (c, da, db) = cosine_with_grads(a.row(i), b.row(i));
        value += 1.0 - c;
        axpy(grads_a.row_mut(i), -1.0 / n, &da);
        axpy(grads_b.row_mut(i), -1.0 / n, &db);
    }
    value / n
}

/// Attraction between each anchor and its positive.
pub fn attract_loss(emb: &BatchEmbeddings) -> Result<(f64, EmbeddingGrads)> {
    attract_loss_with(emb, false)
}

fn attract_loss_with(
    emb: &BatchEmbeddings,
    include_original: bool,
) -> Result<(f64, EmbeddingGrads)> {
    let (n, d) = check_embeddings(emb)?;
    let mut g = EmbeddingGrads::zeros(n, d);
    let mut value = attract_pairs(&emb.z_mask, &emb.z_aug, &mut g.z_mask, &mut g.z_aug);
    if include_original {
        value += attract_pairs(&emb.z_mask, &emb.z_img, &mut g.z_mask, &mut g.z_img);
    }
    Ok((value, g))
}

/// Squared-hinge repulsion between each anchor and the other patches.
///
/// At `cos = η` exactly the hinge is inactive and contributes zero gradient.
pub fn repel_loss(emb: &BatchEmbeddings, cfg: &ContrastiveConfig) -> Result<(f64, EmbeddingGrads)> {
    let (n, d) = check_embeddings(emb)?;
    if n < 2 {
        return Err(Error::BatchTooSmall(format!(
            "repulsion needs at least 2 samples, got {n}"
        )));
    }
    let scale = cfg.lambda / (n * (n - 1)) as f64;
    let mut g = EmbeddingGrads::zeros(n, d);
    let mut sum = 0.0;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let (c, d_img, d_mask) = cosine_with_grads(emb.z_img.row(j), emb.z_mask.row(i));
            let h = c - cfg.eta;
            if h > 0.0 {
                sum += h * h;
                axpy(g.z_img.row_mut(j), scale * 2.0 * h, &d_img);
                axpy(g.z_mask.row_mut(i), scale * 2.0 * h, &d_mask);
            }
        }
    }
    Ok((scale * sum, g))
}

/// `attract + repel` with summed gradients.
pub fn align_loss(
    emb: &BatchEmbeddings,
    cfg: &ContrastiveConfig,
) -> Result<(f64, f64, EmbeddingGrads)> {
    let (attract, mut g) = attract_loss_with(emb, cfg.include_original_positive)?;
    let (repel, gr) = repel_loss(emb, cfg)?;
    g.add(&gr);
    Ok((attract, repel, g))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_labels(y: &[u8], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for {} predictions",
            y.len(),
            n
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Config("labels must be binary".into()));
    }
    if n == 0 {
        return Err(Error::BatchTooSmall("empty batch".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1 − ε]`.
pub fn bce(y: &[u8], p: &[f64]) -> Result<f64> {
    check_labels(y, p.len())?;
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let q = clamp_prob(pi);
            if yi == 1 {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    Ok(sum / p.len() as f64)
}

/// BCE of `sigmoid(logits)` with the gradient with respect to the logits.
///
/// Where the clamp is active the loss is flat, so the gradient there is 0.
pub fn bce_with_logits(y: &[u8], logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_labels(y, logits.len())?;
    let n = logits.len() as f64;
    let p: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
    let value = bce(y, &p)?;
    let grad = y
        .iter()
        .zip(&p)
        .map(|(&yi, &pi)| {
            if clamp_prob(pi) != pi {
                0.0
            } else {
                (pi - f64::from(yi)) / n
            }
        })
        .collect();
    Ok((value, grad))
}

/// `BCE(y, ŷ) + BCE(y, ŷ′)`.
pub fn dual_bce(batch: &LabelBatch) -> Result<f64> {
    if batch.y_hat.len() != batch.y_hat_prime.len() {
        return Err(Error::Shape(
            "primary and secondary predictions differ in length".into(),
        ));
    }
    Ok(bce(&batch.y, &batch.y_hat)? + bce(&batch.y, &batch.y_hat_prime)?)
}

/// Alignment plus dual BCE, with gradients for every embedding and logit.
pub fn total_loss(
    emb: &BatchEmbeddings,
    cfg: &ContrastiveConfig,
    batch: &LogitBatch,
) -> Result<(LossBreakdown, LossGrads)> {
    let n = emb.z_mask.nrows();
    if batch.y.len() != n || batch.logits.len() != n || batch.logits_prime.len() != n {
        return Err(Error::Shape(format!(
            "batch size mismatch: {n} embeddings, {} labels, {} logits, {} secondary logits",
            batch.y.len(),
            batch.logits.len(),
            batch.logits_prime.len()
        )));
    }
    let (attract, repel, embeddings) = align_loss(emb, cfg)?;
    let (b1, g1) = bce_with_logits(&batch.y, &batch.logits)?;
    let (b2, g2) = bce_with_logits(&batch.y, &batch.logits_prime)?;
    let align = attract + repel;
    let bce = b1 + b2;
    Ok((
        LossBreakdown {
            attract,
            repel,
            align,
            bce,
            total: align + bce,
        },
        LossGrads {
            embeddings,
            logits: g1,
            logits_prime: g2,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    // 40-digit mpmath evaluations of the defining sums
    const ATTRACT_N1: f64 = 0.292_893_218_813_452_48;
    const ATTRACT_N2: f64 = 0.146_446_609_406_726_24;
    const REPEL_N2: f64 = 0.052_236_652_351_681_56;
    const BCE_EXAMPLE: f64 = 0.164_252_033_486_018_03;
    const BCE_EXAMPLE_PRIME: f64 = 0.289_909_247_626_471_07;

    fn emb(mask: Array2<f64>, aug: Array2<f64>, img: Array2<f64>) -> BatchEmbeddings {
        BatchEmbeddings {
            z_mask: mask,
            z_aug: aug,
            z_img: img,
        }
    }

    #[test]
    fn attract_examples() {
        let e = emb(array![[1.0, 0.0]], array![[1.0, 1.0]], array![[1.0, 0.0]]);
        assert!((attract_loss(&e).unwrap().0 - ATTRACT_N1).abs() <= 1e-10);
        let e = emb(
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[1.0, 1.0], [0.0, 1.0]],
            array![[1.0, 0.0], [1.0, 1.0]],
        );
        assert!((attract_loss(&e).unwrap().0 - ATTRACT_N2).abs() <= 1e-10);
        let same = emb(array![[0.3, -2.0]], array![[0.3, -2.0]], array![[1.0, 1.0]]);
        assert_eq!(attract_loss(&same).unwrap().0, 0.0);
    }

    #[test]
    fn repel_examples() {
        let cfg = ContrastiveConfig {
            lambda: 0.5,
            eta: 0.25,
            ..Default::default()
        };
        let e = emb(
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[1.0, 1.0], [0.0, 1.0]],
            array![[1.0, 0.0], [1.0, 1.0]],
        );
        let (r, _) = repel_loss(&e, &cfg).unwrap();
        assert!((r - REPEL_N2).abs() <= 1e-10);
        let doubled = ContrastiveConfig {
            lambda: 1.0,
            ..cfg.clone()
        };
        assert_eq!(repel_loss(&e, &doubled).unwrap().0, 2.0 * r);
        let (attract, repel, _) = align_loss(&e, &cfg).unwrap();
        assert!((attract + repel - (ATTRACT_N2 + REPEL_N2)).abs() <= 1e-10);

        // orthogonal negatives sit below any positive margin
        let quiet = emb(
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[1.0, 0.0], [0.0, 1.0]],
        );
        assert_eq!(repel_loss(&quiet, &cfg).unwrap().0, 0.0);
    }

    #[test]
    fn repel_needs_two_rows_and_nonzero_norms() {
        let e = emb(array![[1.0, 0.0]], array![[1.0, 0.0]], array![[1.0, 0.0]]);
        assert!(matches!(
            repel_loss(&e, &ContrastiveConfig::default()),
            Err(Error::BatchTooSmall(_))
        ));
        let z = emb(
            array![[1.0, 0.0], [0.0, 0.0]],
            array![[1.0, 0.0], [1.0, 0.0]],
            array![[1.0, 0.0], [1.0, 0.0]],
        );
        assert!(matches!(
            attract_loss(&z),
            Err(Error::ZeroNorm {
                matrix: "z_mask",
                row: 1
            })
        ));
    }

    #[test]
    fn hinge_at_margin_has_zero_gradient() {
        // cos((1,0),(1,1)) = 1/√2; set η to exactly that value
        let cfg = ContrastiveConfig {
            lambda: 1.0,
            eta: cosine(array![1.0, 1.0].view(), array![1.0, 0.0].view()),
            ..Default::default()
        };
        let e = emb(
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[1.0, 0.0], [0.0, 1.0]],
            array![[0.0, -1.0], [1.0, 1.0]],
        );
        let (v, g) = repel_loss(&e, &cfg).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.z_mask.iter().chain(g.z_img.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn bce_examples() {
        assert!((bce(&[1, 0], &[0.9, 0.2]).unwrap() - BCE_EXAMPLE).abs() <= 1e-10);
        assert!((bce(&[1, 0, 1], &[0.5; 3]).unwrap() - std::f64::consts::LN_2).abs() <= 1e-15);
        assert!(bce(&[1], &[1.0]).unwrap() < 1e-6);
        assert!(bce(&[0], &[1.0]).unwrap().is_finite());
        assert!(bce(&[2], &[0.5]).is_err());
    }

    #[test]
    fn dual_bce_examples() {
        let b = LabelBatch {
            y: vec![1, 0],
            y_hat: vec![0.9, 0.2],
            y_hat_prime: vec![0.8, 0.3],
        };
        assert!((dual_bce(&b).unwrap() - (BCE_EXAMPLE + BCE_EXAMPLE_PRIME)).abs() <= 1e-10);
        let same = LabelBatch {
            y_hat_prime: b.y_hat.clone(),
            ..b.clone()
        };
        assert_eq!(dual_bce(&same).unwrap(), 2.0 * bce(&b.y, &b.y_hat).unwrap());
        let chance = LabelBatch {
            y: vec![1, 0],
            y_hat: vec![1.0, 0.0],
            y_hat_prime: vec![0.5, 0.5],
        };
        assert!((dual_bce(&chance).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
    }

    fn random_batch(seed: u64, n: usize, d: usize) -> (BatchEmbeddings, LogitBatch) {
        let mut k = 0u64;
        let mut next = || {
            k += 1;
            ((crate::seed::derive(seed, k) >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut m = || Array2::from_shape_fn((n, d), |_| next());
        let e = emb(m(), m(), m());
        let labels = LogitBatch {
            y: (0..n).map(|i| (i % 2) as u8).collect(),
            logits: (0..n).map(|i| (i as f64 - 1.5) * 0.7).collect(),
            logits_prime: (0..n).map(|i| 0.4 - i as f64 * 0.3).collect(),
        };
        (e, labels)
    }

    #[test]
    fn total_gradient_matches_finite_differences() {
        for seed in [1u64, 2, 3] {
            for eta in [0.1, 0.3, 0.8] {
                let cfg = ContrastiveConfig {
                    lambda: 1.0,
                    eta,
                    include_original_positive: seed == 3,
                };
                let (e, lb) = random_batch(seed, 4, 8);
                let (_, g) = total_loss(&e, &cfg, &lb).unwrap();
                let h = 1e-5;
                let f = |e: &BatchEmbeddings| total_loss(e, &cfg, &lb).unwrap().0.total;
                for which in 0..3 {
                    for idx in 0..32 {
                        let (r, c) = (idx / 8, idx % 8);
                        let mut ep = e.clone();
                        let mut em = e.clone();
                        let (mp, mm, an) = match which {
                            0 => (&mut ep.z_mask, &mut em.z_mask, g.embeddings.z_mask[[r, c]]),
                            1 => (&mut ep.z_aug, &mut em.z_aug, g.embeddings.z_aug[[r, c]]),
                            _ => (&mut ep.z_img, &mut em.z_img, g.embeddings.z_img[[r, c]]),
                        };
                        mp[[r, c]] += h;
                        mm[[r, c]] -= h;
                        let fd = (f(&ep) - f(&em)) / (2.0 * h);
                        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                        assert!(
                            rel < 1e-6,
                            "seed {seed} eta {eta} m{which}[{r},{c}]: {an} vs {fd}"
                        );
                    }
                }
                for i in 0..4 {
                    let mut lp = lb.clone();
                    let mut lm = lb.clone();
                    lp.logits[i] += h;
                    lm.logits[i] -= h;
                    let fd = (total_loss(&e, &cfg, &lp).unwrap().0.total
                        - total_loss(&e, &cfg, &lm).unwrap().0.total)
                        / (2.0 * h);
                    assert!((fd - g.logits[i]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn breakdown_sums_and_reduces_to_bce() {
        let (e, lb) = random_batch(4, 5, 6);
        let (b, _) = total_loss(&e, &ContrastiveConfig::default(), &lb).unwrap();
        assert_eq!(b.align, b.attract + b.repel);
        assert_eq!(b.total, b.align + b.bce);
        let cfg0 = ContrastiveConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let same = BatchEmbeddings {
            z_aug: e.z_mask.clone(),
            ..e.clone()
        };
        let (b0, _) = total_loss(&same, &cfg0, &lb).unwrap();
        let probs = |ls: &[f64]| ls.iter().map(|&l| sigmoid(l)).collect::<Vec<_>>();
        let dual = dual_bce(&LabelBatch {
            y: lb.y.clone(),
            y_hat: probs(&lb.logits),
            y_hat_prime: probs(&lb.logits_prime),
        })
        .unwrap();
        assert!((b0.total - dual).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_batch_rejected() {
        let (e, mut lb) = random_batch(4, 5, 6);
        lb.logits.pop();
        assert!(total_loss(&e, &ContrastiveConfig::default(), &lb).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bounds_scale_and_permutation(seed in any::<u64>(), row in 0usize..5, which in 0usize..3,
                                        c in prop::sample::select(vec![0.01, 1.0, 100.0, 3.7]),
                                        eta in -0.5f64..0.9, lambda in 0.0f64..3.0) {
            let cfg = ContrastiveConfig { lambda, eta, include_original_positive: false };
            let (e, lb) = random_batch(seed, 5, 7);
            let (attract, repel, _) = align_loss(&e, &cfg).unwrap();
            prop_assert!((0.0..=2.0).contains(&attract));
            prop_assert!(repel >= 0.0 && repel <= lambda * (1.0 - eta).powi(2) + 1e-12);

            let mut scaled = e.clone();
            let m = match which { 0 => &mut scaled.z_mask, 1 => &mut scaled.z_aug, _ => &mut scaled.z_img };
            m.row_mut(row).mapv_inplace(|v| v * c);
            let (a2, r2, _) = align_loss(&scaled, &cfg).unwrap();
            prop_assert!((a2 - attract).abs() <= 1e-9);
            prop_assert!((r2 - repel).abs() <= 1e-9);

            let perm = [3usize, 0, 4, 1, 2];
            let pick = |m: &Array2<f64>| Array2::from_shape_fn(m.dim(), |(i, j)| m[[perm[i], j]]);
            let pe = emb(pick(&e.z_mask), pick(&e.z_aug), pick(&e.z_img));
            let pl = LogitBatch {
                y: perm.iter().map(|&i| lb.y[i]).collect(),
                logits: perm.iter().map(|&i| lb.logits[i]).collect(),
                logits_prime: perm.iter().map(|&i| lb.logits_prime[i]).collect(),
            };
            let (b1, _) = total_loss(&e, &cfg, &lb).unwrap();
            let (b2, _) = total_loss(&pe, &cfg, &pl).unwrap();
            for (x, y) in [(b1.attract, b2.attract), (b1.repel, b2.repel), (b1.bce, b2.bce), (b1.total, b2.total)] {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
