//! Seeded random test instances: symmetric matrices with a prescribed spectral
//! gap and random positive semidefinite perturbations of random rank.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{Matrix, SymMatrix};
use crate::scalar::Scalar;

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal<T: Scalar>(rng: &mut impl Rng) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

/// Haar-ish random orthogonal matrix from the Householder QR of a Gaussian matrix.
pub fn random_orthogonal<T: Scalar>(n: usize, rng: &mut impl Rng) -> Matrix<T> {
    let mut q = Matrix::identity(n);
    for k in 0..n.saturating_sub(1) {
        let mut v: Vec<T> = (k..n).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if v[0] >= T::zero() { -norm } else { norm };
        v[0] -= alpha;
        let vv = v.iter().map(|&x| x * x).sum::<T>();
        if vv == T::zero() {
            continue;
        }
        // Q <- Q (I - 2 v vᵀ / vᵀv), acting on columns k..n
        for i in 0..n {
            let dot = (k..n).map(|j| q[(i, j)] * v[j - k]).sum::<T>();
            let s = T::lit(2.0) * dot / vv;
            for j in k..n {
                q[(i, j)] -= s * v[j - k];
            }
        }
    }
    q
}

/// `Q diag(values) Qᵀ`, symmetrized.
pub fn assemble<T: Scalar>(q: &Matrix<T>, values: &[T]) -> Matrix<T> {
    let n = values.len();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = (0..n).map(|k| q[(i, k)] * values[k] * q[(j, k)]).sum::<T>();
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    a
}

/// `G Gᵀ` for an `n × rank` Gaussian `G` scaled by `scale / sqrt(rank)`.
pub fn random_psd<T: Scalar>(n: usize, rank: usize, scale: T, rng: &mut impl Rng) -> Matrix<T> {
    if rank == 0 {
        return Matrix::zeros(n, n);
    }
    let s = scale / T::from_count(rank).sqrt();
    let g = Matrix::from_fn(n, rank, |_, _| normal::<T>(rng) * s);
    g.matmul(&g.transpose()).symmetrize()
}

/// A dense symmetric `A` whose spectrum avoids `(x, y)` and contains both `x` and `y`.
#[derive(Debug, Clone)]
pub struct GapInstance<T> {
    pub seed: u64,
    pub a: Matrix<T>,
    pub spectrum: Vec<T>,
    pub gap: (T, T),
}

impl<T: Scalar> GapInstance<T> {
    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn a_sym(&self) -> SymMatrix<T> {
        SymMatrix::Dense(self.a.clone())
    }
}

/// Random instance of dimension `dim` with gap `(x, y)`, `x ∈ [-1, 0]`,
/// `y - x ∈ [0.5, 2]`, and eigenvalues spread over `[x-3, x] ∪ [y, y+3]`.
pub fn engineered_gap<T: Scalar>(dim: usize, rng: &mut impl Rng, seed: u64) -> GapInstance<T> {
    assert!(dim >= 2, "an engineered gap needs at least two eigenvalues");
    let x: f64 = rng.random_range(-1.0..=0.0);
    let y = x + rng.random_range(0.5..=2.0);
    let below = rng.random_range(1..dim);
    let mut spectrum = Vec::with_capacity(dim);
    spectrum.push(T::lit(x));
    for _ in 1..below {
        spectrum.push(T::lit(x - rng.random_range(0.0..3.0)));
    }
    spectrum.push(T::lit(y));
    for _ in below + 1..dim {
        spectrum.push(T::lit(y + rng.random_range(0.0..3.0)));
    }
    let q = random_orthogonal(dim, rng);
    let a = assemble(&q, &spectrum);
    spectrum.sort_by(|u, v| u.partial_cmp(v).expect("finite spectrum"));
    GapInstance { seed, a, spectrum, gap: (T::lit(x), T::lit(y)) }
}

/// Instance of a random dimension in `dims` for `seed`, with a random PSD
/// pair `(B₊, B₋)` of ranks up to 5 and scales comparable to the gap width.
#[derive(Debug, Clone)]
pub struct BoundInstance<T> {
    pub base: GapInstance<T>,
    pub b_plus: Matrix<T>,
    pub b_minus: Matrix<T>,
    /// Uniform draw in `(0, 1)` placing `e₀` inside its admissible half-gap.
    pub e0_fraction: T,
}

pub fn bound_instance<T: Scalar>(seed: u64, dims: (usize, usize)) -> BoundInstance<T> {
    let mut rng = rng_for(seed);
    let dim = rng.random_range(dims.0.max(2)..=dims.1.max(dims.0.max(2)));
    let base = engineered_gap::<T>(dim, &mut rng, seed);
    let width = (base.gap.1 - base.gap.0).to_f64_lossy();
    let max_rank = dim.min(5);
    let rp = rng.random_range(0..=max_rank);
    let rm = rng.random_range(0..=max_rank);
    let sp = T::lit(width * rng.random_range(0.1..3.0));
    let sm = T::lit(width * rng.random_range(0.1..3.0));
    let b_plus = random_psd(dim, rp, sp, &mut rng);
    let b_minus = random_psd(dim, rm, sm, &mut rng);
    let e0_fraction = T::lit(rng.random_range(0.05..0.95));
    BoundInstance { base, b_plus, b_minus, e0_fraction }
}

/// Instance for the gap principle: one PSD `B` of rank 1..=4 and an energy in the gap.
#[derive(Debug, Clone)]
pub struct PrincipleInstance<T> {
    pub base: GapInstance<T>,
    pub b: Matrix<T>,
    pub energy: T,
}

pub fn principle_instance<T: Scalar>(seed: u64, dims: (usize, usize)) -> PrincipleInstance<T> {
    let mut rng = rng_for(seed);
    let dim = rng.random_range(dims.0.max(2)..=dims.1.max(dims.0.max(2)));
    let base = engineered_gap::<T>(dim, &mut rng, seed);
    let (x, y) = (base.gap.0.to_f64_lossy(), base.gap.1.to_f64_lossy());
    let rank = rng.random_range(1..=dim.min(4));
    let b = random_psd(dim, rank, T::lit((y - x) * rng.random_range(0.5..3.0)), &mut rng);
    let energy = T::lit(x + (y - x) * rng.random_range(0.1..0.9));
    PrincipleInstance { base, b, energy }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_is_orthogonal() {
        let q = random_orthogonal::<f64>(12, &mut rng_for(3));
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.sub(&Matrix::identity(12)).max_abs() < 1e-13);
    }

    #[test]
    fn engineered_gap_has_its_spectrum() {
        let inst = engineered_gap::<f64>(15, &mut rng_for(7), 7);
        let ev = inst.a.symmetric_eigenvalues().unwrap();
        for (u, v) in ev.iter().zip(&inst.spectrum) {
            assert!((u - v).abs() < 1e-12);
        }
        let (x, y) = inst.gap;
        assert!(ev.iter().all(|&l| l <= x + 1e-12 || l >= y - 1e-12));
        assert!(ev.iter().any(|&l| (l - x).abs() < 1e-12) && ev.iter().any(|&l| (l - y).abs() < 1e-12));
    }

    #[test]
    fn instances_are_reproducible() {
        let a = bound_instance::<f64>(11, (10, 40));
        let b = bound_instance::<f64>(11, (10, 40));
        assert_eq!(a.base.a, b.base.a);
        assert_eq!(a.b_minus, b.b_minus);
    }

    #[test]
    fn psd_has_requested_rank() {
        let b = random_psd::<f64>(10, 3, 1.0, &mut rng_for(1));
        let ev = b.symmetric_eigenvalues().unwrap();
        assert!(ev[0] > -1e-14);
        assert_eq!(ev.iter().filter(|&&l| l > 1e-12).count(), 3);
    }
}
