//! Eigenvalue counting by Sylvester inertia.
//!
//! For a symmetric tridiagonal `T`, the number of negative pivots in the LDLᵀ
//! factorization of `T - σ` equals the number of eigenvalues below `σ`; the
//! count in `(α, β)` is a difference of two such counts. Dense symmetric
//! matrices are counted from a full eigendecomposition instead.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix, Tridiagonal};
use crate::operators::TruncatedMatrix;
use crate::scalar::Scalar;

/// Whether an endpoint lies within `tol` of an eigenvalue (or the factorization broke down there).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BoundaryFlags {
    pub lower: bool,
    pub upper: bool,
}

impl BoundaryFlags {
    pub fn any(&self) -> bool {
        self.lower || self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountResult<T> {
    pub interval: (T, T),
    pub count: usize,
    pub boundary_flags: BoundaryFlags,
}

/// `1e-10 · ‖T‖`, the default counting tolerance.
pub fn default_tol<T: Scalar>(t: &Tridiagonal<T>) -> T {
    T::lit(1e-10) * t.norm_inf().max(T::min_positive_value())
}

fn check_interval<T: Scalar>(alpha: T, beta: T) -> Result<()> {
    if !(alpha < beta) {
        return Err(Error::InvalidInput(format!("empty interval ({alpha}, {beta})")));
    }
    Ok(())
}

/// Count of eigenvalues below `shift`; on pivot breakdown the shift is moved
/// by `nudge` and the flag is raised.
fn robust_below<T: Scalar>(t: &Tridiagonal<T>, shift: T, nudge: T) -> (usize, bool) {
    let s = t.sturm(shift);
    if s.breakdown {
        (t.count_below(shift + nudge), true)
    } else {
        (s.below, false)
    }
}

/// Number of eigenvalues of a symmetric tridiagonal matrix in `(α, β)`.
pub fn count_tridiagonal<T: Scalar>(t: &Tridiagonal<T>, interval: (T, T), tol: T) -> Result<CountResult<T>> {
    let (alpha, beta) = interval;
    check_interval(alpha, beta)?;
    let (lo, lo_breakdown) = robust_below(t, alpha, tol);
    let (hi, hi_breakdown) = robust_below(t, beta, -tol);
    let near = |x: T| t.count_below(x - tol) != t.count_below(x + tol);
    let boundary_flags = BoundaryFlags { lower: lo_breakdown || near(alpha), upper: hi_breakdown || near(beta) };
    Ok(CountResult { interval, count: hi.saturating_sub(lo), boundary_flags })
}

/// Number of eigenvalues of a truncation in the open interval `(α, β)`.
pub fn count_in_interval<T: Scalar>(t: &TruncatedMatrix<T>, interval: (T, T), tol: T) -> Result<CountResult<T>> {
    count_tridiagonal(t.tridiagonal(), interval, tol)
}

/// Eigenvalues of a symmetric tridiagonal matrix in `(α, β)`, each located
/// to within `tol` by bisection on inertia counts.
pub fn eigs_tridiagonal<T: Scalar>(t: &Tridiagonal<T>, interval: (T, T), tol: T) -> Result<Vec<T>> {
    let (alpha, beta) = interval;
    check_interval(alpha, beta)?;
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("bisection tolerance must be positive".into()));
    }
    let first = t.count_below(alpha);
    let last = t.count_below(beta);
    let half = T::lit(0.5);
    let mut out: Vec<T> = (first..last)
        .into_par_iter()
        .map(|k| {
            // k-th eigenvalue (0-based) lies where count_below jumps past k
            let (mut lo, mut hi) = (alpha, beta);
            while hi - lo > tol {
                let mid = half * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if t.count_below(mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            half * (lo + hi)
        })
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(out)
}

pub fn eigs_in_interval<T: Scalar>(t: &TruncatedMatrix<T>, interval: (T, T), tol: T) -> Result<Vec<T>> {
    eigs_tridiagonal(t.tridiagonal(), interval, tol)
}

/// Number of eigenvalues of a dense symmetric matrix that are `>= threshold`.
pub fn dense_count_ge<T: Scalar>(s: &Matrix<T>, threshold: T) -> Result<usize> {
    s.check_symmetric(T::lit(1e-12))?;
    Ok(s.symmetric_eigenvalues()?.iter().filter(|&&x| x >= threshold).count())
}

/// Count in `(α, β)` for any finite symmetric matrix.
pub fn count_sym<T: Scalar>(m: &SymMatrix<T>, interval: (T, T), tol: T) -> Result<CountResult<T>> {
    match m {
        SymMatrix::Tridiagonal(t) => count_tridiagonal(t, interval, tol),
        _ => {
            let (alpha, beta) = interval;
            check_interval(alpha, beta)?;
            let ev = m.eigenvalues()?;
            Ok(count_from_eigenvalues(&ev, interval, tol))
        }
    }
}

/// Count in `(α, β)` from a precomputed spectrum.
pub fn count_from_eigenvalues<T: Scalar>(ev: &[T], interval: (T, T), tol: T) -> CountResult<T> {
    let (alpha, beta) = interval;
    let count = ev.iter().filter(|&&x| alpha < x && x < beta).count();
    let boundary_flags = BoundaryFlags {
        lower: ev.iter().any(|&x| (x - alpha).abs() <= tol),
        upper: ev.iter().any(|&x| (x - beta).abs() <= tol),
    };
    CountResult { interval, count, boundary_flags }
}

/// Distance from `e` to the spectrum of `m`, probed by inertia: returns
/// `true` when some eigenvalue lies within `tol` of `e`.
pub fn near_spectrum<T: Scalar>(m: &SymMatrix<T>, e: T, tol: T) -> Result<bool> {
    match m {
        SymMatrix::Tridiagonal(t) => Ok(t.count_below(e - tol) != t.count_below(e + tol)),
        _ => Ok(m.eigenvalues()?.iter().any(|&x| (x - e).abs() <= tol)),
    }
}

/// Distance from `e` to the nearest eigenvalue of `m` (dense path).
pub fn spectral_distance<T: Scalar>(m: &SymMatrix<T>, e: T) -> Result<T> {
    Ok(m.eigenvalues()?.iter().fold(T::infinity(), |d, &x| d.min((x - e).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag123() -> TruncatedMatrix<f64> {
        TruncatedMatrix::from_entries(vec![1.0, 2.0, 3.0], vec![1e-30, 1e-30]).unwrap()
    }

    #[test]
    fn counts_nearly_diagonal() {
        let r = count_in_interval(&diag123(), (1.5, 3.5), 1e-10).unwrap();
        assert_eq!(r.count, 2);
        assert!(!r.boundary_flags.any());
    }

    #[test]
    fn eigs_nearly_diagonal() {
        let ev = eigs_in_interval(&diag123(), (1.5, 2.5), 1e-12).unwrap();
        assert_eq!(ev.len(), 1);
        assert!((ev[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_flag_raised_near_endpoint() {
        let r = count_in_interval(&diag123(), (2.0 - 1e-14, 2.5), 1e-10).unwrap();
        assert!(r.boundary_flags.lower);
        assert!(!r.boundary_flags.upper);
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(count_in_interval(&diag123(), (2.0, 2.0), 1e-10).is_err());
        assert!(eigs_in_interval(&diag123(), (3.0, 1.0), 1e-10).is_err());
    }

    #[test]
    fn dense_threshold_counts() {
        assert_eq!(dense_count_ge(&Matrix::<f64>::identity(3), 1.0).unwrap(), 3);
        assert_eq!(dense_count_ge(&Matrix::from_diagonal(&[1.0, 0.0]), 1.0).unwrap(), 1);
        let skew = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert!(matches!(dense_count_ge(&skew, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sym_count_matches_between_paths() {
        let t = Tridiagonal::new(vec![0.3, -1.0, 2.0, 0.7], vec![0.5, 0.9, -0.4]).unwrap();
        let tri = count_sym(&SymMatrix::Tridiagonal(t.clone()), (-0.5, 1.0), 1e-10).unwrap();
        let dense = count_sym(&SymMatrix::Dense(t.to_dense()), (-0.5, 1.0), 1e-10).unwrap();
        assert_eq!(tri.count, dense.count);
    }
}
