//! Synthetic acquisition domains.
//!
//! Each domain is a fixed colour transform, per-channel gamma, background
//! tint, optical blur and sensor noise. The table is a constant so runs are
//! comparable across machines.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: u8,
    /// Row-major 3×3 matrix applied to each RGB pixel.
    pub color_matrix: [[f64; 3]; 3],
    pub gamma: [f64; 3],
    /// Base background (stroma) colour used when painting the patch.
    pub background_hue: [f64; 3],
    pub noise_sigma: f64,
    pub blur_sigma: f64,
}

/// Background colour of the reference domain.
pub const REFERENCE_BACKGROUND: [f64; 3] = [0.92, 0.76, 0.86];

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl DomainSpec {
    /// The reference rendering: no colour change, no blur, no noise.
    pub fn identity(domain_id: u8) -> Self {
        Self {
            domain_id,
            color_matrix: IDENTITY,
            gamma: [1.0; 3],
            background_hue: REFERENCE_BACKGROUND,
            noise_sigma: 0.0,
            blur_sigma: 0.0,
        }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.color_matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn is_identity_color(&self) -> bool {
        self.color_matrix == IDENTITY
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.color_matrix.iter().flatten().all(|v| v.is_finite());
        if !finite || self.determinant().abs() < 1e-6 {
            return Err(Error::Config(format!(
                "domain {}: colour matrix is not invertible",
                self.domain_id
            )));
        }
        if self.gamma.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Config(format!(
                "domain {}: gamma must be positive",
                self.domain_id
            )));
        }
        if self
            .background_hue
            .iter()
            .any(|&c| !(0.0..=1.0).contains(&c))
        {
            return Err(Error::Config(format!(
                "domain {}: background hue outside [0, 1]",
                self.domain_id
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.blur_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "domain {}: noise and blur must be non-negative",
                self.domain_id
            )));
        }
        Ok(())
    }
}

/// The five shipped domains. Domain 0 is the reference.
pub fn standard_domains() -> Vec<DomainSpec> {
    vec![
        DomainSpec::identity(0),
        // dark, blue-shifted stain, mild blur
        DomainSpec {
            domain_id: 1,
            color_matrix: [[0.78, 0.12, 0.05], [0.05, 0.70, 0.08], [0.04, 0.14, 0.96]],
            gamma: [1.45, 1.30, 1.05],
            background_hue: [0.86, 0.68, 0.90],
            noise_sigma: 0.015,
            blur_sigma: 0.6,
        },
        // washed-out, low-contrast scan
        DomainSpec {
            domain_id: 2,
            color_matrix: [[0.90, 0.08, 0.02], [0.08, 0.88, 0.04], [0.04, 0.06, 0.86]],
            gamma: [0.62, 0.70, 0.72],
            background_hue: [0.95, 0.86, 0.90],
            noise_sigma: 0.010,
            blur_sigma: 0.9,
        },
        // warm scanner with channel crosstalk
        DomainSpec {
            domain_id: 3,
            color_matrix: [[1.02, 0.06, -0.04], [0.02, 0.84, 0.10], [-0.05, 0.12, 0.80]],
            gamma: [0.95, 1.20, 1.35],
            background_hue: [0.94, 0.74, 0.78],
            noise_sigma: 0.025,
            blur_sigma: 0.0,
        },
        // high-contrast, noisy, defocused
        DomainSpec {
            domain_id: 4,
            color_matrix: [[0.92, 0.00, 0.10], [0.06, 0.95, 0.00], [0.00, 0.10, 0.92]],
            gamma: [1.60, 1.55, 1.40],
            background_hue: [0.90, 0.80, 0.88],
            noise_sigma: 0.035,
            blur_sigma: 1.1,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_is_valid() {
        let ds = standard_domains();
        assert_eq!(ds.len(), 5);
        for (i, d) in ds.iter().enumerate() {
            assert_eq!(usize::from(d.domain_id), i);
            d.validate().unwrap();
        }
        assert!(ds[0].is_identity_color());
        assert_eq!(ds[0].gamma, [1.0; 3]);
    }

    #[test]
    fn singular_matrix_rejected() {
        let mut d = DomainSpec::identity(1);
        d.color_matrix = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]];
        assert!(d.validate().is_err());
    }
}
