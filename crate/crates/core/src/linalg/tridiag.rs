//! Symmetric tridiagonal matrices.
//!
//! Storage is a main diagonal `d[0..n]` and a single off-diagonal `e[0..n-1]`,
//! so symmetry holds by construction. Off-diagonal signs are unrestricted here;
//! Jacobi truncations add the positivity constraint on top.

use crate::error::{Error, Result};
use crate::linalg::dense::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    diag: Vec<T>,
    off: Vec<T>,
}

/// Negative-pivot count of `T - shift` together with a breakdown marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SturmCount {
    pub below: usize,
    /// Some pivot was within `pivmin` of zero and was replaced.
    pub breakdown: bool,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn new(diag: Vec<T>, off: Vec<T>) -> Result<Self> {
        if diag.is_empty() {
            if !off.is_empty() {
                return Err(Error::InvalidInput("empty diagonal with off-diagonal entries".into()));
            }
        } else if off.len() + 1 != diag.len() {
            return Err(Error::InvalidInput(format!(
                "off-diagonal length {} does not match diagonal length {}",
                off.len(),
                diag.len()
            )));
        }
        if diag.iter().chain(off.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite tridiagonal entry".into()));
        }
        Ok(Self { diag, off })
    }

    pub fn from_diagonal(diag: Vec<T>) -> Self {
        let n = diag.len();
        Self { diag, off: vec![T::zero(); n.saturating_sub(1)] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_diagonal(vec![T::zero(); n])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    #[inline]
    pub fn off(&self) -> &[T] {
        &self.off
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.off[i]
        } else if j + 1 == i {
            self.off[j]
        } else {
            T::zero()
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for (i, &e) in self.off.iter().enumerate() {
            m[(i, i + 1)] = e;
            m[(i + 1, i)] = e;
        }
        m
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(x.len(), n, "matvec dimension mismatch");
        let mut y: Vec<T> = self.diag.iter().zip(x).map(|(&d, &xi)| d * xi).collect();
        for (i, &e) in self.off.iter().enumerate() {
            y[i] += e * x[i + 1];
            y[i + 1] += e * x[i];
        }
        y
    }

    /// Entrywise sum; both operands must have the same dimension.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self {
            diag: self.diag.iter().zip(&other.diag).map(|(&a, &b)| a + b).collect(),
            off: self.off.iter().zip(&other.off).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim());
        Self {
            diag: self.diag.iter().zip(&other.diag).map(|(&a, &b)| a - b).collect(),
            off: self.off.iter().zip(&other.off).map(|(&a, &b)| a - b).collect(),
        }
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> T {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { T::zero() };
                let right = if i + 1 < n { self.off[i].abs() } else { T::zero() };
                self.diag[i].abs() + left + right
            })
            .fold(T::zero(), T::max)
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum.
    pub fn gershgorin(&self) -> (T, T) {
        let n = self.dim();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { T::zero() };
            let right = if i + 1 < n { self.off[i].abs() } else { T::zero() };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        (lo, hi)
    }

    /// Smallest pivot magnitude admitted by the shifted factorization.
    pub fn pivmin(&self) -> T {
        T::epsilon() * T::epsilon() * self.norm_inf().max(T::one())
    }

    /// Number of eigenvalues strictly below `shift` (Sylvester inertia of the
    /// LDLᵀ factorization of `T - shift`).
    ///
    /// A pivot smaller than [`Self::pivmin`] in magnitude is replaced by
    /// `-pivmin`, which keeps the count exact for shifts off the spectrum.
    pub fn sturm(&self, shift: T) -> SturmCount {
        let n = self.dim();
        let pivmin = self.pivmin();
        let mut below = 0;
        let mut breakdown = false;
        let mut q = T::zero();
        for i in 0..n {
            q = if i == 0 {
                self.diag[0] - shift
            } else {
                (self.diag[i] - shift) - self.off[i - 1] * self.off[i - 1] / q
            };
            if q.abs() < pivmin {
                q = -pivmin;
                breakdown = true;
            }
            if q < T::zero() {
                below += 1;
            }
        }
        SturmCount { below, breakdown }
    }

    #[inline]
    pub fn count_below(&self, shift: T) -> usize {
        self.sturm(shift).below
    }

    /// LU factorization with partial pivoting of `T - shift`.
    pub fn shifted_lu(&self, shift: T) -> Result<ShiftedLu<T>> {
        ShiftedLu::new(self, shift)
    }

    /// Solves `(T - shift) x = rhs`.
    pub fn solve_shifted(&self, shift: T, rhs: &[T]) -> Result<Vec<T>> {
        let lu = self.shifted_lu(shift)?;
        Ok(lu.solve(rhs))
    }

    /// Diagonal of `(T - shift)^{-1}` in O(n), from the downward and upward pivot sequences.
    pub fn inverse_diagonal(&self, shift: T) -> Result<Vec<T>> {
        let n = self.dim();
        if n == 0 {
            return Ok(Vec::new());
        }
        let pivmin = self.pivmin();
        let guard = |q: T| if q.abs() < pivmin { -pivmin } else { q };
        let mut down = vec![T::zero(); n];
        down[0] = guard(self.diag[0] - shift);
        for i in 1..n {
            down[i] = guard((self.diag[i] - shift) - self.off[i - 1] * self.off[i - 1] / down[i - 1]);
        }
        let mut up = vec![T::zero(); n];
        up[n - 1] = guard(self.diag[n - 1] - shift);
        for i in (0..n - 1).rev() {
            up[i] = guard((self.diag[i] - shift) - self.off[i] * self.off[i] / up[i + 1]);
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let denom = down[i] + up[i] - (self.diag[i] - shift);
            if denom == T::zero() || !denom.is_finite() {
                return Err(Error::NumericalFailure {
                    message: format!("singular shifted matrix at row {i}"),
                    lo: shift.to_f64_lossy(),
                    hi: shift.to_f64_lossy(),
                });
            }
            out.push(T::one() / denom);
        }
        Ok(out)
    }

    /// All eigenvalues in ascending order by implicit QL iteration.
    ///
    /// Independent of the Sturm-count path; used for full-spectrum checks.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        let mut d = self.diag.clone();
        let n = d.len();
        let mut e = vec![T::zero(); n];
        e[..n.saturating_sub(1)].copy_from_slice(&self.off);
        crate::linalg::dense::tql(&mut d, &mut e, None)?;
        Ok(d)
    }
}

/// Partial-pivoting LU of a shifted tridiagonal matrix (the `gttrf` layout).
#[derive(Debug, Clone)]
pub struct ShiftedLu<T> {
    dl: Vec<T>,
    d: Vec<T>,
    du: Vec<T>,
    du2: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Scalar> ShiftedLu<T> {
    fn new(t: &Tridiagonal<T>, shift: T) -> Result<Self> {
        let n = t.dim();
        let mut d: Vec<T> = t.diag.iter().map(|&x| x - shift).collect();
        let mut dl = t.off.clone();
        let mut du = t.off.clone();
        let mut du2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != T::zero() {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if let Some(i) = d.iter().position(|&x| x == T::zero()) {
            return Err(Error::NumericalFailure {
                message: format!("exactly singular shifted tridiagonal matrix (zero pivot at {i})"),
                lo: shift.to_f64_lossy(),
                hi: shift.to_f64_lossy(),
            });
        }
        Ok(Self { dl, d, du, du2, swapped })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(rhs.len(), n, "rhs dimension mismatch");
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let t = b[i];
                b[i] = b[i + 1];
                b[i + 1] = t - self.dl[i] * b[i];
            } else {
                b[i + 1] = b[i + 1] - self.dl[i] * b[i];
            }
        }
        if n == 0 {
            return b;
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tridiagonal<f64> {
        Tridiagonal::new(vec![2.0, -1.0, 0.5, 3.0, 0.0], vec![1.0, -0.7, 2.0, 0.3]).unwrap()
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(Tridiagonal::<f64>::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(Tridiagonal::<f64>::new(vec![1.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn solve_shifted_matches_residual() {
        let t = sample();
        let rhs = vec![1.0, -2.0, 0.25, 4.0, 1.5];
        for &shift in &[0.1, -2.5, 1.3, 3.9] {
            let x = t.solve_shifted(shift, &rhs).unwrap();
            let y = t.matvec(&x);
            for i in 0..5 {
                let r = y[i] - shift * x[i] - rhs[i];
                assert!(r.abs() < 1e-12, "shift {shift} row {i} residual {r}");
            }
        }
    }

    #[test]
    fn inverse_diagonal_matches_columns() {
        let t = sample();
        let shift = 0.37;
        let diag = t.inverse_diagonal(shift).unwrap();
        for i in 0..5 {
            let mut e = vec![0.0; 5];
            e[i] = 1.0;
            let col = t.solve_shifted(shift, &e).unwrap();
            assert!((col[i] - diag[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_counts_two_by_two() {
        // [[1, -1], [-1, 3]] has eigenvalues 2 ± √2.
        let t = Tridiagonal::new(vec![1.0, 3.0], vec![-1.0]).unwrap();
        assert_eq!(t.count_below(0.0), 0);
        assert_eq!(t.count_below(1.0), 1);
        assert_eq!(t.count_below(4.0), 2);
    }

    #[test]
    fn ql_eigenvalues_of_free_chain() {
        let n = 40;
        let t = Tridiagonal::new(vec![0.0; n], vec![1.0; n - 1]).unwrap();
        let ev = t.eigenvalues().unwrap();
        for (k, &l) in ev.iter().enumerate() {
            let exact = -2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((l - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_shift_is_reported() {
        let t = Tridiagonal::from_diagonal(vec![1.0, 2.0]);
        assert!(matches!(t.solve_shifted(1.0, &[1.0, 1.0]), Err(Error::NumericalFailure { .. })));
    }
}
