//! Re-discretization of the native five-year transition coefficients.
//!
//! Both the carbon-cycle and the temperature transition matrices are
//! tridiagonal with positive off-diagonal products, so a diagonal similarity
//! makes them symmetric. Real powers are then taken on the eigenvalues.

use nalgebra::{DMatrix, DVector};

use crate::error::DiceError;

/// Real power `a^p` of a tridiagonal matrix whose off-diagonal pairs have a
/// positive product and whose eigenvalues are positive.
pub fn tridiagonal_power(a: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>, DiceError> {
    let n = a.nrows();
    if n != a.ncols() || n == 0 {
        return Err(DiceError::Discretization("matrix must be square".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if i.abs_diff(j) > 1 && a[(i, j)] != 0.0 {
                return Err(DiceError::Discretization(format!(
                    "entry ({i}, {j}) breaks tridiagonal structure"
                )));
            }
        }
    }
    let mut scale = vec![1.0; n];
    for i in 0..n - 1 {
        let (up, down) = (a[(i, i + 1)], a[(i + 1, i)]);
        if up * down <= 0.0 {
            return Err(DiceError::Discretization(format!(
                "off-diagonal pair ({i}, {}) must have a positive product",
                i + 1
            )));
        }
        scale[i + 1] = scale[i] * (down / up).sqrt();
    }
    // S = D^-1 A D is symmetric.
    let s = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[j] / scale[i]);
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l <= 0.0) {
        return Err(DiceError::Discretization(format!(
            "non-positive eigenvalue {bad}"
        )));
    }
    let powered = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| l.powf(p)));
    let q = &eig.eigenvectors;
    let sp = q * DMatrix::from_diagonal(&powered) * q.transpose();
    Ok(DMatrix::from_fn(n, n, |i, j| sp[(i, j)] * scale[i] / scale[j]))
}

/// Per-step input gain `b_step` for `x' = A_step x + b_step u` such that, for
/// a constant input, `native_steps` steps reproduce one native step
/// `x' = A x + b u`; that is `b_step = (I - A_step)(I - A)^-1 b`.
pub fn step_input_gain(
    native: &DMatrix<f64>,
    step: &DMatrix<f64>,
    gain: &DVector<f64>,
) -> Result<DVector<f64>, DiceError> {
    let n = native.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let lhs = (&id - native)
        .lu()
        .solve(gain)
        .ok_or_else(|| DiceError::Discretization("I - A is singular".into()))?;
    Ok((&id - step) * lhs)
}
