//! Small dense linear-algebra helpers shared by the operator modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; the matrices we deal
//! with are desk-scale (a few hundred rows at most on the dense paths).

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 100_000;

/// All eigenvalues of a square matrix (real Schur form, complex pairs
/// included). Returns `None` when the QR sweep fails to converge.
///
/// The sweep can stall on exactly structured input such as nilpotent
/// matrices; it is then retried on `m + sI` and on the transpose.
pub fn eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    let n = m.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    let eig = |a: DMatrix<f64>, shift: f64| {
        Schur::try_new(a, f64::EPSILON, SCHUR_MAX_ITER)
            .map(|s| s.complex_eigenvalues().iter().map(|z| z - shift).collect::<Vec<_>>())
    };
    if let Some(e) = eig(m.clone(), 0.0) {
        return Some(e);
    }
    let norm = m.amax().max(f64::MIN_POSITIVE);
    for s in [0.5 * norm, 1.3 * norm] {
        let shifted = m + DMatrix::identity(n, n) * s;
        if let Some(e) = eig(shifted.clone(), s).or_else(|| eig(shifted.transpose(), s)) {
            return Some(e);
        }
    }
    eig(m.transpose(), 0.0)
}

/// Spectral radius by a dense eigen-decomposition.
///
/// For nonnegative matrices the Perron root is real and attains this modulus,
/// so the value doubles as the Perron root.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 || m.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let eig = eigenvalues(m)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Largest real eigenvalue with nonnegative real part close to the spectral
/// radius, plus the number of eigenvalues numerically equal to it.
pub fn perron_root(m: &DMatrix<f64>) -> Result<(f64, usize)> {
    if m.nrows() == 0 || m.iter().all(|&x| x == 0.0) {
        return Ok((0.0, 0));
    }
    let eig = eigenvalues(m)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = radius.max(1e-300);
    let mult = eig
        .iter()
        .filter(|z| (z.re - radius).abs() <= 1e-9 * scale && z.im.abs() <= 1e-9 * scale)
        .count();
    Ok((radius, mult.max(1)))
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))
}

/// Solve `a X = B` for a matrix right-hand side, with one step of iterative
/// refinement.
pub fn solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let lu = a.clone().lu();
    let singular = || Error::Numerical("singular linear system".into());
    let x = lu.solve(b).ok_or_else(singular)?;
    let dx = lu.solve(&(b - a * &x)).ok_or_else(singular)?;
    Ok(x + dx)
}

/// Eigenvector for a (numerically) known real eigenvalue by shifted inverse
/// iteration. The shift sits just above `eigenvalue`, so for nonnegative
/// matrices and the Perron root the iteration cannot be captured by any other
/// eigenvalue unless it lies within the shift offset.
pub fn inverse_iteration(m: &DMatrix<f64>, eigenvalue: f64) -> Result<DVector<f64>> {
    let n = m.nrows();
    let scale = eigenvalue.abs().max(m.amax()).max(1e-300);
    let mut offset = 1e-12 * scale;
    for _attempt in 0..6 {
        let shift = eigenvalue + offset;
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut ok = true;
        for _ in 0..8 {
            let Some(mut y) = lu.solve(&x) else {
                ok = false;
                break;
            };
            let norm = y.amax();
            if !norm.is_finite() || norm == 0.0 {
                ok = false;
                break;
            }
            // orient so the largest entry is positive
            let imax = y.iamax();
            if y[imax] < 0.0 {
                y.neg_mut();
            }
            y /= norm;
            let change = (&y - &x).amax();
            x = y;
            if change < 1e-15 {
                break;
            }
        }
        if ok {
            return Ok(x);
        }
        offset *= 100.0;
    }
    Err(Error::Numerical(format!(
        "inverse iteration failed near eigenvalue {eigenvalue}"
    )))
}

/// Max-norm of a matrix (largest absolute entry).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.amax()
}

/// Induced infinity norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Sub-matrix on the given row and column index lists.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Compensated dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nilpotent_spectrum() {
        let mut m = DMatrix::zeros(4, 4);
        m[(1, 0)] = 0.57;
        m[(3, 0)] = 0.98;
        m[(2, 1)] = 0.67;
        m[(3, 2)] = 0.43;
        let e = eigenvalues(&m).unwrap();
        assert_eq!(e.len(), 4);
        assert!(e.iter().all(|z| z.norm() < 1e-4), "{e:?}");
        assert!(spectral_radius(&m).unwrap() < 1e-4);
    }

    #[test]
    fn radius_of_golden_mean() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let r = spectral_radius(&m).unwrap();
        assert!((r - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn radius_of_rotation_is_one() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((spectral_radius(&m).unwrap() - 1.0).abs() < 1e-14);
        let (root, mult) = perron_root(&m).unwrap();
        assert!((root - 1.0).abs() < 1e-14);
        assert_eq!(mult, 1);
    }

    #[test]
    fn inverse_iteration_finds_perron_vector() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let v = inverse_iteration(&m, g).unwrap();
        assert!((v[0] / v[1] - g).abs() < 1e-12);
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let s = neumaier_sum([1.0, 1e-17, -1.0]);
        assert!((s - 1e-17).abs() < 1e-30);
    }
}
