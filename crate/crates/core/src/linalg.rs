//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::linalg::{Cholesky, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Matrix, Vector};

/// Relative tolerance for the symmetry invariant on covariances.
pub const SYMMETRY_RTOL: f64 = 1e-12;
/// Relative eigenvalue tolerance for the PSD invariant on state covariances.
pub const PSD_RTOL: f64 = 1e-10;

/// Replace `m` by `(m + mᵀ) / 2` in place.
pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(mut m: Matrix) -> Matrix {
    symmetrize(&mut m);
    m
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &Matrix, rtol: f64) -> bool {
    m.is_square() && max_asymmetry(m) <= rtol * max_abs(m)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(symmetrized(m.clone()))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// `(min, max)` eigenvalue of the symmetric part of `m`. Empty matrices give `(0, 0)`.
pub fn eig_range(m: &Matrix) -> (f64, f64) {
    let vals = sym_eigenvalues(m);
    match (vals.first(), vals.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0.0, 0.0),
    }
}

/// PSD up to a relative eigenvalue tolerance: `λ_min ≥ -rtol · max|λ|`.
pub fn is_psd(m: &Matrix, rtol: f64) -> bool {
    let (lo, hi) = eig_range(m);
    lo >= -rtol * hi.abs().max(lo.abs())
}

/// Strictly invertible in the relative sense `λ_min > rtol · λ_max`.
/// The zero matrix is singular.
pub fn is_well_conditioned_spd(m: &Matrix, rtol: f64) -> bool {
    let (lo, hi) = eig_range(m);
    hi > 0.0 && lo > rtol * hi
}

/// Solve `X · A = B` for symmetric positive-definite `A`, i.e. `X = B A⁻¹`,
/// without forming the inverse. Returns `None` when `A` has no Cholesky factor.
pub fn solve_right_spd(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let chol = Cholesky::new(a.clone())?;
    // (B A⁻¹)ᵀ = A⁻¹ Bᵀ since A is symmetric.
    Some(chol.solve(&b.transpose()).transpose())
}

/// Project a nearly-PSD symmetric matrix onto the PSD cone by zeroing
/// negative eigenvalues.
pub fn clamp_psd(m: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(symmetrized(m.clone()));
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let recon = &eig.eigenvectors * Matrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrized(recon)
}

/// Square-root factor `L` with `L Lᵀ = cov`: Cholesky when it exists,
/// otherwise a symmetric eigendecomposition with negative eigenvalues
/// clamped to zero. The fallback covers PSD-but-singular covariances such as
/// a zero process noise.
pub fn sqrt_factor(cov: &Matrix) -> Matrix {
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return chol.l();
    }
    let eig = SymmetricEigen::new(symmetrized(cov.clone()));
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots)
}

/// Draws from `N(mean, cov)` through a precomputed square-root factor.
///
/// Every draw consumes exactly `n` standard normals from the stream, also for
/// degenerate covariances, so that seeds stay aligned across configurations.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: Vector,
    factor: Matrix,
}

impl GaussianSampler {
    pub fn new(mean: Vector, cov: &Matrix) -> Self {
        Self {
            factor: sqrt_factor(cov),
            mean,
        }
    }

    pub fn zero_mean(cov: &Matrix) -> Self {
        Self::new(Vector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Write one draw into `out`, using `normals` as scratch (both length `n`).
    #[allow(clippy::needless_range_loop)]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, normals: &mut [f64], out: &mut [f64]) {
        let n = self.dim();
        for v in normals.iter_mut().take(n) {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..n {
            // Eigen-based factors are full, not lower triangular.
            let mut acc = self.mean[i];
            for (j, z) in normals.iter().enumerate().take(n) {
                acc += self.factor[(i, j)] * z;
            }
            out[i] = acc;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n = self.dim();
        let mut normals = vec![0.0; n];
        let mut out = Vector::zeros(n);
        self.sample_into(rng, &mut normals, out.as_mut_slice());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let mut m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        symmetrize(&mut m);
        assert_eq!(m, Matrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 3.0]));
    }

    #[test]
    fn psd_checks() {
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!is_psd(&indefinite, PSD_RTOL));
        assert!(is_psd(&Matrix::zeros(3, 3), PSD_RTOL));
        assert!(!is_well_conditioned_spd(&Matrix::zeros(3, 3), 1e-10));
        assert!(is_well_conditioned_spd(&Matrix::identity(3, 3), 1e-10));
    }

    #[test]
    fn right_solve_matches_inverse() {
        let a = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let x = solve_right_spd(&a, &b).unwrap();
        let expected = &b * a.clone().try_inverse().unwrap();
        assert!((x - expected).abs().max() < 1e-14);
    }

    #[test]
    fn clamp_removes_tiny_negative_eigenvalues() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-13]);
        let c = clamp_psd(&m);
        assert!(eig_range(&c).0 >= 0.0);
        assert!((c - m).abs().max() < 1e-12);
    }

    #[test]
    fn singular_covariance_factor_reconstructs() {
        let cov = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = sqrt_factor(&cov);
        assert!((&l * l.transpose() - &cov).abs().max() < 1e-12);
        let zero = sqrt_factor(&Matrix::zeros(2, 2));
        assert_eq!(zero, Matrix::zeros(2, 2));
    }

    #[test]
    fn sampler_with_zero_cov_returns_mean() {
        let mean = Vector::from_vec(vec![1.0, -2.0]);
        let s = GaussianSampler::new(mean.clone(), &Matrix::zeros(2, 2));
        let mut rng = seeded(3);
        assert_eq!(s.sample(&mut rng), mean);
    }
}
