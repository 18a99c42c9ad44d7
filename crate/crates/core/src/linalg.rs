//! Small dense helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

/// Solves `a x = b` by LU with partial pivoting. Returns `None` when the
/// factorization is singular or the solution is not finite.
pub fn solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = a.lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Submatrix on the given row and column index lists.
pub fn restrict(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Option<Vec<Complex<f64>>> {
    if m.nrows() == 0 {
        return Some(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus; `0` for an empty matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Option<f64> {
    let ev = eigenvalues(m)?;
    Some(ev.iter().map(modulus).fold(0.0, f64::max))
}

/// `|z|` without the std-only complex methods.
pub fn modulus(z: &Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

/// Eigenvalues of a symmetric matrix in ascending order. The input is
/// symmetrized as `(m + m^T) / 2` first.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `max_x sum_y |a(x,y) - b(x,y)|`, the sup-L1 distance between kernels.
pub fn sup_row_l1(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| (a[(i, j)] - b[(i, j)]).abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Sum of `terms` with Neumaier compensation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve(a, &DVector::from_vec(alloc::vec![1.0, 1.0])).is_none());
    }

    #[test]
    fn radius_of_rotation_is_one() {
        let r = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!((spectral_radius(&r).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let s = compensated_sum([1.0, 1e-17, -1.0]);
        assert_eq!(s, 1e-17);
    }
}
