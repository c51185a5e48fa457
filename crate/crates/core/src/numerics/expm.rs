use nalgebra::SymmetricEigen;

use super::hermitian_deviation;
use crate::{CMat, Error, Result, C64};

/// Largest matrix dimension accepted by the dense kernels.
pub const MAX_DIM: usize = 64;

/// Computes `exp(scale · a)`.
///
/// Hermitian and anti-Hermitian arguments (the collision generator is always
/// the latter) go through an eigendecomposition, which keeps unitaries unitary
/// to machine precision. Everything else, the non-normal effective generator
/// in particular, uses scaling-and-squaring with a Padé approximant.
pub fn matrix_exponential(a: &CMat, scale: f64) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix exponential of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if n > MAX_DIM {
        return Err(Error::DimensionTooLarge(n));
    }
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let b = a * C64::from(scale);
    let size = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if size == 0.0 {
        return Ok(CMat::identity(n, n));
    }
    let tol = 1e-14 * size.max(1.0);

    if hermitian_deviation(&b) <= tol {
        let eig = SymmetricEigen::new(hermitian_part(&b));
        return Ok(from_eigen(&eig.eigenvectors, eig.eigenvalues.iter().map(|&l| C64::from(l.exp()))));
    }
    // anti-Hermitian: b = -i k with k = i b Hermitian
    let k = &b * C64::new(0.0, 1.0);
    if hermitian_deviation(&k) <= tol {
        let eig = SymmetricEigen::new(hermitian_part(&k));
        return Ok(from_eigen(
            &eig.eigenvectors,
            eig.eigenvalues.iter().map(|&l| C64::new(0.0, -l).exp()),
        ));
    }
    Ok(b.exp())
}

fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::from(0.5)
}

fn from_eigen(vectors: &CMat, diag: impl Iterator<Item = C64>) -> CMat {
    let mut scaled = vectors.clone();
    for (j, d) in diag.enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= d;
        }
    }
    scaled * vectors.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{max_abs_diff, spectral_norm};

    fn sigma_z() -> CMat {
        CMat::from_row_slice(2, 2, &[C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from(-1.0)])
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let e = matrix_exponential(&CMat::zeros(3, 3), 2.0).unwrap();
        assert!(max_abs_diff(&e, &CMat::identity(3, 3)) == 0.0);
    }

    #[test]
    fn rotation_by_pi_is_minus_identity() {
        let a = sigma_z() * C64::new(0.0, -1.0);
        let e = matrix_exponential(&a, std::f64::consts::PI).unwrap();
        assert!(max_abs_diff(&e, &(-CMat::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn decaying_upper_level() {
        // -iG for a resonant two-level atom with total rate 1
        let mut g = CMat::zeros(2, 2);
        g[(1, 1)] = C64::new(0.0, -0.5);
        let a = g * C64::new(0.0, -1.0);
        for t in [0.1, 1.0, 3.7] {
            let e = matrix_exponential(&a, t).unwrap();
            assert!((e[(1, 1)] - C64::from((-t / 2.0).exp())).norm() < 1e-15);
            assert!((e[(0, 0)] - C64::from(1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn non_normal_matches_series() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[C64::new(-0.3, 0.2), C64::new(1.1, -0.4), C64::new(0.0, 0.0), C64::new(-0.7, -0.1)],
        );
        // upper triangular: exp has a closed form
        let (l1, l2, b) = (a[(0, 0)], a[(1, 1)], a[(0, 1)]);
        let expected = CMat::from_row_slice(
            2,
            2,
            &[l1.exp(), b * (l1.exp() - l2.exp()) / (l1 - l2), C64::from(0.0), l2.exp()],
        );
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert!(spectral_norm(&(e - expected)) < 1e-13);
    }

    #[test]
    fn rejects_large_dimension() {
        assert!(matches!(
            matrix_exponential(&CMat::zeros(65, 65), 1.0),
            Err(Error::DimensionTooLarge(65))
        ));
    }
}
