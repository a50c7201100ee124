//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

/// Spectral norm ‖A‖₂ via deterministic power iteration on AᵀA.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    if rows == 1 && cols == 1 {
        return a[(0, 0)].abs();
    }
    // deterministic start with all directions populated
    let mut v = DVector::from_fn(cols, |i, _| 1.0 + (i as f64 + 1.0).sqrt());
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..200 {
        let w = a.transpose() * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_sigma = norm.sqrt();
        let delta = (new_sigma - sigma).abs();
        sigma = new_sigma;
        v = next;
        if delta <= 1e-13 * sigma.max(1.0) {
            break;
        }
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_known_norms() {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, -4.0, 1.0]));
        assert!((spectral_norm(&d) - 4.0).abs() < 1e-10);
        let one = DMatrix::from_element(1, 1, -0.5);
        assert_eq!(spectral_norm(&one), 0.5);
        let ones = DMatrix::from_element(3, 3, 1.0);
        assert!((spectral_norm(&ones) - 3.0).abs() < 1e-10);
    }
}
