use crate::error::{Error, Result};
use crate::linalg::dense::{Matrix, SymmetricEigen};
use crate::linalg::tridiag::Tridiagonal;
use crate::scalar::Scalar;

/// A finite symmetric matrix in the sparsest representation that holds it.
#[derive(Debug, Clone, PartialEq)]
pub enum SymMatrix<T> {
    Diagonal(Vec<T>),
    Tridiagonal(Tridiagonal<T>),
    Dense(Matrix<T>),
}

impl<T: Scalar> From<Tridiagonal<T>> for SymMatrix<T> {
    fn from(t: Tridiagonal<T>) -> Self {
        SymMatrix::Tridiagonal(t)
    }
}

impl<T: Scalar> From<Matrix<T>> for SymMatrix<T> {
    fn from(m: Matrix<T>) -> Self {
        SymMatrix::Dense(m)
    }
}

/// Columns `S` with `S Sᵀ = B` for a positive semidefinite `B`, restricted to
/// the directions where `B` is nonzero.
#[derive(Debug, Clone)]
pub struct PsdFactor<T> {
    pub factor: Matrix<T>,
    /// Site indices (diagonal input) or eigenmode indices (otherwise) of the kept columns.
    pub support: Vec<usize>,
    pub basis: FactorBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorBasis {
    Sites,
    Eigenmodes,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix::Diagonal(vec![T::zero(); n])
    }

    pub fn dim(&self) -> usize {
        match self {
            SymMatrix::Diagonal(d) => d.len(),
            SymMatrix::Tridiagonal(t) => t.dim(),
            SymMatrix::Dense(m) => m.rows(),
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        match self {
            SymMatrix::Diagonal(d) => Matrix::from_diagonal(d),
            SymMatrix::Tridiagonal(t) => t.to_dense(),
            SymMatrix::Dense(m) => m.clone(),
        }
    }

    fn to_tridiagonal(&self) -> Option<Tridiagonal<T>> {
        match self {
            SymMatrix::Diagonal(d) => Some(Tridiagonal::from_diagonal(d.clone())),
            SymMatrix::Tridiagonal(t) => Some(t.clone()),
            SymMatrix::Dense(_) => None,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self {
            SymMatrix::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    T::zero()
                }
            }
            SymMatrix::Tridiagonal(t) => t.get(i, j),
            SymMatrix::Dense(m) => m[(i, j)],
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, true)
    }

    fn combine(&self, other: &Self, negate: bool) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        let op = |a: T, b: T| if negate { a - b } else { a + b };
        match (self, other) {
            (SymMatrix::Diagonal(a), SymMatrix::Diagonal(b)) => {
                SymMatrix::Diagonal(a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect())
            }
            (SymMatrix::Dense(_), _) | (_, SymMatrix::Dense(_)) => {
                let (a, b) = (self.to_dense(), other.to_dense());
                SymMatrix::Dense(if negate { a.sub(&b) } else { a.add(&b) })
            }
            _ => {
                let a = self.to_tridiagonal().expect("banded");
                let b = other.to_tridiagonal().expect("banded");
                SymMatrix::Tridiagonal(if negate { a.sub(&b) } else { a.add(&b) })
            }
        }
    }

    pub fn scale(&self, s: T) -> Self {
        match self {
            SymMatrix::Diagonal(d) => SymMatrix::Diagonal(d.iter().map(|&x| x * s).collect()),
            SymMatrix::Tridiagonal(t) => SymMatrix::Tridiagonal(
                Tridiagonal::new(t.diag().iter().map(|&x| x * s).collect(), t.off().iter().map(|&x| x * s).collect())
                    .expect("scaled tridiagonal stays valid"),
            ),
            SymMatrix::Dense(m) => SymMatrix::Dense(m.scale(s)),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        match self {
            SymMatrix::Diagonal(d) => d.iter().zip(x).map(|(&a, &b)| a * b).collect(),
            SymMatrix::Tridiagonal(t) => t.matvec(x),
            SymMatrix::Dense(m) => m.matvec(x),
        }
    }

    /// Max absolute entry, used as the matrix scale in relative thresholds.
    pub fn max_abs(&self) -> T {
        match self {
            SymMatrix::Diagonal(d) => d.iter().fold(T::zero(), |m, &x| m.max(x.abs())),
            SymMatrix::Tridiagonal(t) => t.diag().iter().chain(t.off()).fold(T::zero(), |m, &x| m.max(x.abs())),
            SymMatrix::Dense(m) => m.max_abs(),
        }
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        match self {
            SymMatrix::Diagonal(d) => {
                let mut v = d.clone();
                v.sort_by(|a, b| a.partial_cmp(b).expect("finite entries"));
                Ok(v)
            }
            SymMatrix::Tridiagonal(t) => t.eigenvalues(),
            SymMatrix::Dense(m) => m.symmetric_eigenvalues(),
        }
    }

    pub fn eigen(&self) -> Result<SymmetricEigen<T>> {
        self.to_dense().symmetric_eigen()
    }

    /// Number of eigenvalues strictly below `shift`.
    pub fn count_below(&self, shift: T) -> Result<usize> {
        match self {
            SymMatrix::Diagonal(d) => Ok(d.iter().filter(|&&x| x < shift).count()),
            SymMatrix::Tridiagonal(t) => Ok(t.count_below(shift)),
            SymMatrix::Dense(m) => Ok(m.symmetric_eigenvalues()?.iter().filter(|&&x| x < shift).count()),
        }
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(T::zero()))
    }

    /// Solves `(M - shift) X = rhs` column by column.
    pub fn solve_shifted(&self, shift: T, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.dim();
        assert_eq!(rhs.rows(), n, "rhs dimension mismatch");
        let mut out = Matrix::zeros(n, rhs.cols());
        match self {
            SymMatrix::Diagonal(d) => {
                for i in 0..n {
                    let p = d[i] - shift;
                    if p == T::zero() {
                        return Err(Error::NumericalFailure {
                            message: format!("singular shifted diagonal at {i}"),
                            lo: shift.to_f64_lossy(),
                            hi: shift.to_f64_lossy(),
                        });
                    }
                    for j in 0..rhs.cols() {
                        out[(i, j)] = rhs[(i, j)] / p;
                    }
                }
            }
            SymMatrix::Tridiagonal(t) => {
                let lu = t.shifted_lu(shift)?;
                for j in 0..rhs.cols() {
                    out.set_column(j, &lu.solve(&rhs.column(j)));
                }
            }
            SymMatrix::Dense(m) => {
                let eig = m.symmetric_eigen()?;
                let w = eig.vectors.transpose().matmul(rhs);
                for k in 0..n {
                    let p = eig.values[k] - shift;
                    for j in 0..rhs.cols() {
                        let c = w[(k, j)] / p;
                        for i in 0..n {
                            out[(i, j)] += eig.vectors[(i, k)] * c;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Square-root factor of a positive semidefinite matrix.
    ///
    /// Diagonal input keeps sites with `b_i` above the threshold; otherwise the
    /// spectral decomposition is used with negative round-off clamped to zero.
    /// Directions with weight below `1e-14 · ‖B‖` are dropped.
    pub fn psd_factor(&self) -> Result<PsdFactor<T>> {
        let n = self.dim();
        let scale = self.max_abs();
        let threshold = T::lit(1e-14) * scale;
        if let SymMatrix::Diagonal(d) = self {
            if let Some(i) = d.iter().position(|&x| x < -threshold) {
                return Err(Error::InvalidInput(format!("diagonal entry {i} is negative; matrix is not PSD")));
            }
            let support: Vec<usize> = (0..n).filter(|&i| d[i] > threshold).collect();
            let mut f = Matrix::zeros(n, support.len());
            for (c, &i) in support.iter().enumerate() {
                f[(i, c)] = d[i].sqrt();
            }
            return Ok(PsdFactor { factor: f, support, basis: FactorBasis::Sites });
        }
        let eig = self.eigen()?;
        let min = eig.values.first().copied().unwrap_or(T::zero());
        if min < -T::lit(1e-10) * scale.max(T::one()) {
            return Err(Error::InvalidInput(format!("matrix is not PSD (min eigenvalue {:e})", min.to_f64_lossy())));
        }
        let support: Vec<usize> = (0..n).filter(|&k| eig.values[k] > threshold).collect();
        let mut f = Matrix::zeros(n, support.len());
        for (c, &k) in support.iter().enumerate() {
            let s = eig.values[k].sqrt();
            for i in 0..n {
                f[(i, c)] = eig.vectors[(i, k)] * s;
            }
        }
        Ok(PsdFactor { factor: f, support, basis: FactorBasis::Eigenmodes })
    }

    /// Full symmetric square root `B^{1/2}` of a PSD matrix (negative round-off clamped).
    pub fn psd_sqrt(&self) -> Result<Matrix<T>> {
        if let SymMatrix::Diagonal(d) = self {
            return Ok(Matrix::from_diagonal(&d.iter().map(|&x| x.max(T::zero()).sqrt()).collect::<Vec<_>>()));
        }
        let eig = self.eigen()?;
        Ok(eig.spectral_function(|l| l.max(T::zero()).sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_sum_promotes_representation() {
        let d = SymMatrix::Diagonal(vec![1.0, 2.0, 3.0]);
        let t = SymMatrix::Tridiagonal(Tridiagonal::new(vec![0.0; 3], vec![0.5, 0.5]).unwrap());
        let s = d.add(&t);
        assert!(matches!(s, SymMatrix::Tridiagonal(_)));
        assert_eq!(s.get(0, 1), 0.5);
        let dense = SymMatrix::Dense(Matrix::identity(3));
        assert!(matches!(s.sub(&dense), SymMatrix::Dense(_)));
    }

    #[test]
    fn psd_factor_reproduces_matrix() {
        let b = Matrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let f = SymMatrix::Dense(b.clone()).psd_factor().unwrap();
        assert_eq!(f.factor.cols(), 2);
        let rebuilt = f.factor.matmul(&f.factor.transpose());
        assert!(rebuilt.sub(&b).max_abs() < 1e-12);
    }

    #[test]
    fn diagonal_factor_keeps_support_sites() {
        let f = SymMatrix::Diagonal(vec![0.0, 4.0, 0.0, 1.0]).psd_factor().unwrap();
        assert_eq!(f.support, vec![1, 3]);
        assert_eq!(f.factor[(1, 0)], 2.0);
        assert_eq!(f.basis, FactorBasis::Sites);
    }

    #[test]
    fn solve_shifted_agrees_across_representations() {
        let t = Tridiagonal::new(vec![1.0, -0.5, 2.0], vec![0.3, 0.7]).unwrap();
        let rhs = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![-1.0]]).unwrap();
        let a = SymMatrix::Tridiagonal(t.clone()).solve_shifted(0.2, &rhs).unwrap();
        let b = SymMatrix::Dense(t.to_dense()).solve_shifted(0.2, &rhs).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-12);
    }
}
