//! Convolution via im2col + GEMM, and the tanh-form GELU.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[inline]
pub fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Geometry of one stride-2 convolution on a square channel-last input.
#[derive(Debug, Clone, Copy)]
pub struct ConvShape {
    pub side_in: usize,
    pub side_out: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn positions(&self) -> usize {
        self.side_out * self.side_out
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.cin
    }
}

/// Unfolds `input` (`side_in²×cin`) into a `positions×patch_len` matrix;
/// out-of-bounds taps read zero.
pub fn im2col(input: &[f64], s: &ConvShape) -> Vec<f64> {
    let plen = s.patch_len();
    let mut cols = vec![0.0; s.positions() * plen];
    for oy in 0..s.side_out {
        for ox in 0..s.side_out {
            let row = &mut cols[(oy * s.side_out + ox) * plen..][..plen];
            for ky in 0..s.kernel {
                let iy = (oy * 2 + ky) as isize - s.pad as isize;
                if iy < 0 || iy >= s.side_in as isize {
                    continue;
                }
                for kx in 0..s.kernel {
                    let ix = (ox * 2 + kx) as isize - s.pad as isize;
                    if ix < 0 || ix >= s.side_in as isize {
                        continue;
                    }
                    let src = (iy as usize * s.side_in + ix as usize) * s.cin;
                    let dst = (ky * s.kernel + kx) * s.cin;
                    row[dst..dst + s.cin].copy_from_slice(&input[src..src + s.cin]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
pub fn col2im(dcols: &[f64], s: &ConvShape) -> Vec<f64> {
    let plen = s.patch_len();
    let mut dx = vec![0.0; s.side_in * s.side_in * s.cin];
    for oy in 0..s.side_out {
        for ox in 0..s.side_out {
            let row = &dcols[(oy * s.side_out + ox) * plen..][..plen];
            for ky in 0..s.kernel {
                let iy = (oy * 2 + ky) as isize - s.pad as isize;
                if iy < 0 || iy >= s.side_in as isize {
                    continue;
                }
                for kx in 0..s.kernel {
                    let ix = (ox * 2 + kx) as isize - s.pad as isize;
                    if ix < 0 || ix >= s.side_in as isize {
                        continue;
                    }
                    let dst = (iy as usize * s.side_in + ix as usize) * s.cin;
                    let src = (ky * s.kernel + kx) * s.cin;
                    for c in 0..s.cin {
                        dx[dst + c] += row[src + c];
                    }
                }
            }
        }
    }
    dx
}

/// `c = alpha · a·b + beta · c` on row-major slices, with optional transposes.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    alpha: f64,
    a: &[f64],
    a_shape: (usize, usize),
    transpose_a: bool,
    b: &[f64],
    b_shape: (usize, usize),
    transpose_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    let av = ArrayView2::from_shape(a_shape, a).expect("gemm: a shape");
    let bv = ArrayView2::from_shape(b_shape, b).expect("gemm: b shape");
    let av = if transpose_a { av.reversed_axes() } else { av };
    let bv = if transpose_b { bv.reversed_axes() } else { bv };
    let mut cv = ArrayViewMut2::from_shape((av.nrows(), bv.ncols()), c).expect("gemm: c shape");
    general_mat_mul(alpha, &av, &bv, beta, &mut cv);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -1.2, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let s = ConvShape {
            side_in: 6,
            side_out: 3,
            cin: 2,
            cout: 1,
            kernel: 3,
            pad: 1,
        };
        let x: Vec<f64> = (0..72).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..s.positions() * s.patch_len())
            .map(|i| ((i * 13) % 7) as f64 - 3.0)
            .collect();
        let lhs: f64 = im2col(&x, &s).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, &s)).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn gemm_with_transposes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3×2
        let mut c = [0.0; 4];
        gemm(1.0, &a, (2, 3), false, &b, (3, 2), false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        let mut ct = [0.0; 9];
        gemm(1.0, &a, (2, 3), true, &a, (2, 3), false, 0.0, &mut ct);
        assert_eq!(ct[0], 17.0);
        assert_eq!(ct[8], 45.0);
    }
}
