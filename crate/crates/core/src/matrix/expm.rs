use super::Matrix;
use crate::error::{Error, Result};

const TAYLOR_ORDER: usize = 18;

/// Matrix exponential by scaling and squaring around a fixed-order Taylor
/// polynomial. The scaled argument has 1-norm at most 1/2, where the order-18
/// remainder is below `2^-53`.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("expm input"));
    }
    let n = a.nrows();
    let norm = one_norm(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);

    // Horner evaluation of sum_k X^k / k!
    let eye = Matrix::identity(n, n);
    let mut acc = eye.clone();
    for k in (1..=TAYLOR_ORDER).rev() {
        acc = &eye + (&scaled * acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    Ok(acc)
}

/// Returns `(e^{Ah}, ∫₀ʰ e^{Aτ} dτ)` from one exponential of the augmented
/// matrix `[[A, I], [0, 0]]·h`.
pub fn expm_with_integral(a: &Matrix, h: f64) -> Result<(Matrix, Matrix)> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {h}")));
    }
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let n = a.nrows();
    let mut aug = Matrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    for i in 0..n {
        aug[(i, n + i)] = h;
    }
    let e = expm(&aug)?;
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, n)).into_owned();
    Ok((phi, gamma))
}

fn one_norm(a: &Matrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_generator() {
        let (phi, gamma) = expm_with_integral(&Matrix::zeros(3, 3), 0.25).unwrap();
        assert_abs_diff_eq!(phi, Matrix::identity(3, 3), epsilon = 1e-15);
        assert_abs_diff_eq!(gamma, Matrix::identity(3, 3) * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_closed_form() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 0.7]));
        let h = 0.4;
        let (phi, gamma) = expm_with_integral(&a, h).unwrap();
        for (i, ai) in [-3.0f64, 0.7].iter().enumerate() {
            assert_abs_diff_eq!(phi[(i, i)], (ai * h).exp(), epsilon = 1e-14);
            assert_abs_diff_eq!(gamma[(i, i)], ((ai * h).exp() - 1.0) / ai, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(phi[(0, 1)], 0.0);
    }

    #[test]
    fn quarter_rotation() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (phi, gamma) = expm_with_integral(&a, FRAC_PI_2).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_abs_diff_eq!(phi, expected, epsilon = 1e-13);
        // ∫ [[cos, sin], [-sin, cos]] over [0, π/2]
        let integral = Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        assert_abs_diff_eq!(gamma, integral, epsilon = 1e-13);
    }

    #[test]
    fn derivative_matches_generator() {
        let a = Matrix::from_row_slice(2, 2, &[-2.0, 100.0, -400.0, -80.0]);
        let h = 1e-3;
        let dh = 1e-7;
        let (p_plus, _) = expm_with_integral(&a, h + dh).unwrap();
        let (p_minus, _) = expm_with_integral(&a, h - dh).unwrap();
        let (p, _) = expm_with_integral(&a, h).unwrap();
        let fd = (p_plus - p_minus) / (2.0 * dh);
        let exact = &a * &p;
        let rel = (&fd - &exact).norm() / exact.norm();
        assert!(rel < 1e-6, "relative residual {rel}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(expm_with_integral(&Matrix::zeros(1, 1), 0.0).is_err());
        assert!(expm_with_integral(&Matrix::zeros(1, 1), -1.0).is_err());
    }

    #[test]
    fn agrees_with_nalgebra_pade() {
        let a = Matrix::from_row_slice(3, 3, &[0.3, -1.2, 4.0, 0.0, -2.5, 0.1, 1.0, 7.0, -0.4]);
        let ours = expm(&a).unwrap();
        let theirs = a.exp();
        assert!((&ours - &theirs).norm() <= 1e-11 * theirs.norm());
    }
}
