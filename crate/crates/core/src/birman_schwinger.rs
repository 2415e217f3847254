//! Birman–Schwinger kernels at energies in spectral gaps and the eigenvalue
//! counting bounds built from them.
//!
//! For `B ⪰ 0` with factor `S Sᵀ = B` and `e ∉ σ(A)`, the kernel is
//! `K(e) = Sᵀ (e - A)^{-1} S`. For `e` in a gap of `A` and `μ ≠ 0`, `e` is an
//! eigenvalue of `A + μB` exactly when `1/μ` is an eigenvalue of `K(e)`, with
//! equal multiplicity.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inertia::{count_sym, eigs_tridiagonal, near_spectrum, spectral_distance};
use crate::linalg::{FactorBasis, Matrix, SymMatrix, SymmetricEigen};
use crate::scalar::Scalar;

/// `Sᵀ (e - A)^{-1} S` restricted to the support of `B₊`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BSOperator<T> {
    #[serde(skip)]
    pub kernel: Matrix<T>,
    #[serde(skip)]
    pub factor: Matrix<T>,
    /// Sites (diagonal `B₊`) or eigenmodes of `B₊` spanned by the kernel.
    pub support: Vec<usize>,
    pub basis: FactorBasis,
    pub energy: T,
    /// Relative asymmetry of the kernel before symmetrization (0 on the eigen path).
    pub raw_asymmetry: T,
}

impl<T: Scalar> BSOperator<T> {
    pub fn dim(&self) -> usize {
        self.kernel.rows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        self.kernel.symmetric_eigenvalues()
    }

    /// `#(K >= threshold)`.
    pub fn count_ge(&self, threshold: T) -> Result<usize> {
        crate::inertia::dense_count_ge(&self.kernel, threshold)
    }
}

/// Default distance below which an energy counts as touching the spectrum: `1e-6 · (y - x)`.
pub fn default_guard<T: Scalar>(gap: (T, T)) -> T {
    T::lit(1e-6) * (gap.1 - gap.0)
}

fn proximity_error<T: Scalar>(a: &SymMatrix<T>, e: T, tol: T) -> Result<()> {
    if !near_spectrum(a, e, tol)? {
        return Ok(());
    }
    let distance = match a {
        SymMatrix::Tridiagonal(t) => {
            let ev = eigs_tridiagonal(t, (e - tol, e + tol), tol * T::lit(1e-3))?;
            ev.iter().fold(tol, |d, &x| d.min((x - e).abs()))
        }
        _ => spectral_distance(a, e)?,
    };
    Err(Error::ResolventProximity {
        energy: e.to_f64_lossy(),
        distance: distance.to_f64_lossy(),
        tol: tol.to_f64_lossy(),
    })
}

/// `Xᵀ (e - A)^{-1} X` and the asymmetry of the unsymmetrized product.
fn resolvent_sandwich<T: Scalar>(
    a: &SymMatrix<T>,
    eig: Option<&SymmetricEigen<T>>,
    x: &Matrix<T>,
    e: T,
) -> Result<(Matrix<T>, T)> {
    if let Some(eig) = eig {
        return Ok((eig.sandwich(x, |l| T::one() / (e - l)), T::zero()));
    }
    let y = a.solve_shifted(e, x)?;
    let k = x.transpose().matmul(&y).scale(-T::one());
    let asym = k.asymmetry();
    Ok((k.symmetrize(), asym))
}

/// Birman–Schwinger kernel of `B₊ ⪰ 0` against `A` at energy `e`.
///
/// Dense `A` is handled through its eigendecomposition, which yields an exactly
/// symmetric kernel; banded `A` through one shifted solve per support column.
pub fn bs_operator<T: Scalar>(a: &SymMatrix<T>, b_plus: &SymMatrix<T>, e: T, tol: T) -> Result<BSOperator<T>> {
    let eig = match a {
        SymMatrix::Dense(m) => Some(m.symmetric_eigen()?),
        _ => None,
    };
    bs_operator_with(a, eig.as_ref(), b_plus, e, tol)
}

fn bs_operator_with<T: Scalar>(
    a: &SymMatrix<T>,
    eig: Option<&SymmetricEigen<T>>,
    b_plus: &SymMatrix<T>,
    e: T,
    tol: T,
) -> Result<BSOperator<T>> {
    if a.dim() != b_plus.dim() {
        return Err(Error::InvalidInput(format!(
            "A is {}-dimensional but B₊ is {}-dimensional",
            a.dim(),
            b_plus.dim()
        )));
    }
    match eig {
        Some(eig) => {
            let d = eig.values.iter().fold(T::infinity(), |d, &x| d.min((x - e).abs()));
            if d <= tol {
                return Err(Error::ResolventProximity {
                    energy: e.to_f64_lossy(),
                    distance: d.to_f64_lossy(),
                    tol: tol.to_f64_lossy(),
                });
            }
        }
        None => proximity_error(a, e, tol)?,
    }
    let f = b_plus.psd_factor()?;
    let (kernel, raw_asymmetry) =
        if f.factor.cols() == 0 { (Matrix::zeros(0, 0), T::zero()) } else { resolvent_sandwich(a, eig, &f.factor, e)? };
    Ok(BSOperator { kernel, factor: f.factor, support: f.support, basis: f.basis, energy: e, raw_asymmetry })
}

fn check_gap<T: Scalar>(a: &SymMatrix<T>, gap: (T, T)) -> Result<()> {
    let (x, y) = gap;
    if !(x < y) {
        return Err(Error::InvalidInput(format!("gap ({x}, {y}) is empty")));
    }
    // endpoints that are themselves eigenvalues come back from the eigensolver off by rounding
    let slack = T::lit(1e-10) * T::one().max(x.abs()).max(y.abs());
    if !(x + slack < y - slack) {
        return Err(Error::InvalidInput(format!("gap ({x}, {y}) is narrower than the rounding slack")));
    }
    let inside = count_sym(a, (x + slack, y - slack), T::lit(1e-12) * (y - x))?.count;
    if inside > 0 {
        return Err(Error::InvalidInput(format!("A has {inside} eigenvalues inside the gap ({x}, {y})")));
    }
    Ok(())
}

fn check_dims<T: Scalar>(a: &SymMatrix<T>, others: &[(&str, &SymMatrix<T>)]) -> Result<()> {
    for (name, m) in others {
        if m.dim() != a.dim() {
            return Err(Error::InvalidInput(format!(
                "A is {}-dimensional but {name} is {}-dimensional",
                a.dim(),
                m.dim()
            )));
        }
    }
    Ok(())
}

/// One test point of the gap principle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrinciplePoint<T> {
    pub mu: T,
    /// `μ = 1/κ` for a kernel eigenvalue `κ` (as opposed to a grid point).
    pub from_kernel: bool,
    /// Eigenvalues of `A + μB` within `tol · max(1, ‖A + μB‖)` of `e`.
    pub operator_multiplicity: usize,
    /// Kernel eigenvalues `κ` with `|μκ - 1| <= tol`.
    pub kernel_multiplicity: usize,
    /// Away from crossings: `(#eigenvalues of A + tμB that crossed e for t ∈ (0,1], #kernel eigenvalues beyond 1/μ)`.
    pub crossings: Option<(usize, usize)>,
    /// `max ‖(A + μB - e) ψ‖ / ‖Sφ‖` over `ψ = (e - A)^{-1} S φ`, `φ` a matching kernel eigenvector.
    pub eigenvector_residual: Option<T>,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipleReport<T> {
    pub energy: T,
    pub gap: (T, T),
    pub kernel_eigenvalues: Vec<T>,
    pub points: Vec<PrinciplePoint<T>>,
    pub violations: usize,
}

/// Checks the gap Birman–Schwinger correspondence for every `μ` in `mu_grid`
/// and at each `μ = 1/κ` for the nonzero kernel eigenvalues `κ`.
///
/// At each point the multiplicity of `e` in `σ(A + μB)` must equal the
/// multiplicity of `1/μ` in `σ(K(e))`. Away from crossings the number of
/// eigenvalues that moved through `e` between `A` and `A + μB` must equal
/// the number of kernel eigenvalues past `1/μ`; at crossings the lifted
/// kernel eigenvectors must be eigenvectors of `A + μB`.
pub fn verify_principle<T: Scalar>(
    a: &SymMatrix<T>,
    b: &SymMatrix<T>,
    gap: (T, T),
    e: T,
    mu_grid: &[T],
    tol: T,
) -> Result<PrincipleReport<T>> {
    check_dims(a, &[("B", b)])?;
    check_gap(a, gap)?;
    if !(gap.0 < e && e < gap.1) {
        return Err(Error::InvalidInput(format!("energy {e} is not inside the gap ({}, {})", gap.0, gap.1)));
    }
    let bs = bs_operator(a, b, e, T::zero())?;
    let keig = bs.kernel.symmetric_eigen()?;
    let kmax = keig.values.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let a_dense = a.to_dense();
    let b_dense = b.to_dense();
    let base_below = count_below_dense(&a_dense, e)?;

    let mut mus: Vec<(T, bool)> = mu_grid.iter().map(|&m| (m, false)).collect();
    for &k in &keig.values {
        if k.abs() > T::lit(1e-8) * kmax {
            mus.push((T::one() / k, true));
        }
    }
    let mut points = Vec::with_capacity(mus.len());
    for (mu, from_kernel) in mus {
        if mu == T::zero() {
            return Err(Error::InvalidInput("μ = 0 has no kernel counterpart".into()));
        }
        let m = a_dense.add(&b_dense.scale(mu));
        let scale = m.max_abs().max(T::one());
        let ev = m.symmetric_eigenvalues()?;
        let operator_multiplicity = ev.iter().filter(|&&l| (l - e).abs() <= tol * scale).count();
        let hits: Vec<usize> =
            (0..keig.values.len()).filter(|&k| (mu * keig.values[k] - T::one()).abs() <= tol).collect();
        let kernel_multiplicity = hits.len();
        let mut consistent = operator_multiplicity == kernel_multiplicity;
        let mut crossings = None;
        if operator_multiplicity == 0 && kernel_multiplicity == 0 {
            let below = ev.iter().filter(|&&l| l < e).count();
            let inv = T::one() / mu;
            let (moved, beyond) = if mu > T::zero() {
                (base_below.saturating_sub(below), keig.values.iter().filter(|&&k| k > inv).count())
            } else {
                (below.saturating_sub(base_below), keig.values.iter().filter(|&&k| k < inv).count())
            };
            consistent &= moved == beyond;
            crossings = Some((moved, beyond));
        }
        let mut eigenvector_residual = None;
        if !hits.is_empty() {
            let mut worst = T::zero();
            for &k in &hits {
                let phi = keig.vectors.column(k);
                let s_phi = bs.factor.matvec(&phi);
                let rhs = Matrix::from_fn(s_phi.len(), 1, |i, _| s_phi[i]);
                let psi = a.solve_shifted(e, &rhs)?.scale(-T::one()).column(0);
                let r = m.matvec(&psi);
                let res = r.iter().zip(&psi).map(|(&ri, &pi)| (ri - e * pi) * (ri - e * pi)).sum::<T>().sqrt();
                let norm = s_phi.iter().map(|&x| x * x).sum::<T>().sqrt();
                worst = worst.max(res / norm);
            }
            consistent &= worst <= T::lit(10.0) * tol;
            eigenvector_residual = Some(worst);
        }
        points.push(PrinciplePoint {
            mu,
            from_kernel,
            operator_multiplicity,
            kernel_multiplicity,
            crossings,
            eigenvector_residual,
            consistent,
        });
    }
    let violations = points.iter().filter(|p| !p.consistent).count();
    Ok(PrincipleReport { energy: e, gap, kernel_eigenvalues: keig.values, points, violations })
}

fn count_below_dense<T: Scalar>(m: &Matrix<T>, e: T) -> Result<usize> {
    Ok(m.symmetric_eigenvalues()?.iter().filter(|&&l| l < e).count())
}

/// Which counting inequality to evaluate.
///
/// The command-line names are `t11`, `t31` and `t32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum BoundVariant {
    /// Lower half-gap, bounded perturbations: `#(C ∈ (e₀,e₁)) <= #(K₊(e₀) >= 1) + #(B₋ >= (y-x)/2)`.
    #[serde(rename = "t11")]
    Bounded,
    /// Lower half-gap, semibounded form: the `B₋` term is measured against `(A - q + 1)^{-1}`.
    #[serde(rename = "t31")]
    LowerSemibounded,
    /// Upper half-gap, semibounded form, with a `B₊`/`B₋` cross term.
    #[serde(rename = "t32")]
    UpperSemibounded,
}

impl FromStr for BoundVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t11" => Ok(BoundVariant::Bounded),
            "t31" => Ok(BoundVariant::LowerSemibounded),
            "t32" => Ok(BoundVariant::UpperSemibounded),
            _ => Err(Error::InvalidInput(format!("unknown bound variant `{s}` (expected t11, t31 or t32)"))),
        }
    }
}

impl fmt::Display for BoundVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundVariant::Bounded => "t11",
            BoundVariant::LowerSemibounded => "t31",
            BoundVariant::UpperSemibounded => "t32",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundTerm<T> {
    pub name: String,
    pub count: usize,
    /// Eigenvalues `>= threshold` of the term's operator were counted.
    pub threshold: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs<T> {
    pub x: T,
    pub y: T,
    pub e0: T,
    pub e1: T,
    /// `min σ(A)`, for the semibounded variants.
    pub q: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub variant: BoundVariant,
    /// Eigenvalues of `C = A + B₊ - B₋` in the target half-gap.
    pub lhs: usize,
    pub rhs: usize,
    pub terms: Vec<BoundTerm<T>>,
    pub satisfied: bool,
    pub inputs: BoundInputs<T>,
    /// `#(A + B₊ ∈ (e₀, e₁))` and `#(A + B₊ ∈ (e₁, y))` (lower half-gap variants).
    pub n1: Option<usize>,
    pub n2: Option<usize>,
}

/// Evaluates both sides of a counting inequality for `C = A + B₊ - B₋` in the
/// gap `(x, y)` of `A`.
///
/// Checks, in order: the gap, the distance of `e₀` from `σ(A)` against
/// `guard`, then the placement of `e₀` in the half-gap the variant requires.
pub fn gap_bound<T: Scalar>(
    variant: BoundVariant,
    a: &SymMatrix<T>,
    b_plus: &SymMatrix<T>,
    b_minus: &SymMatrix<T>,
    gap: (T, T),
    e0: T,
    guard: T,
) -> Result<BoundReport<T>> {
    check_dims(a, &[("B₊", b_plus), ("B₋", b_minus)])?;
    check_gap(a, gap)?;
    let (x, y) = gap;
    let e1 = T::lit(0.5) * (x + y);
    let eig = match a {
        SymMatrix::Dense(m) => Some(m.symmetric_eigen()?),
        _ => None,
    };
    let k_plus = match variant {
        BoundVariant::Bounded | BoundVariant::LowerSemibounded => {
            Some(bs_operator_with(a, eig.as_ref(), b_plus, e0, guard)?)
        }
        BoundVariant::UpperSemibounded => None,
    };
    let k_minus = match variant {
        BoundVariant::UpperSemibounded => Some(bs_operator_with(a, eig.as_ref(), b_minus, e0, guard)?),
        _ => None,
    };
    let ordered = match variant {
        BoundVariant::Bounded | BoundVariant::LowerSemibounded => x < e0 && e0 < e1,
        BoundVariant::UpperSemibounded => e1 < e0 && e0 < y,
    };
    if !ordered {
        return Err(Error::InvalidInput(format!(
            "e₀ = {e0} is outside the half-gap required by {variant} (x = {x}, e₁ = {e1}, y = {y})"
        )));
    }
    let c = a.add(b_plus).sub(b_minus);
    let count_tol = T::lit(1e-12) * (y - x);
    let target = match variant {
        BoundVariant::UpperSemibounded => (e1, e0),
        _ => (e0, e1),
    };
    let lhs = count_sym(&c, target, count_tol)?.count;
    let one = T::one();
    let mut terms = Vec::new();
    let mut q = None;
    let (mut n1, mut n2) = (None, None);
    match variant {
        BoundVariant::Bounded | BoundVariant::LowerSemibounded => {
            let kp = k_plus.expect("built above");
            terms.push(BoundTerm { name: "bs_plus".into(), count: kp.count_ge(one)?, threshold: one });
            let c_plus = a.add(b_plus);
            n1 = Some(count_sym(&c_plus, (e0, e1), count_tol)?.count);
            n2 = Some(count_sym(&c_plus, (e1, y), count_tol)?.count);
            if variant == BoundVariant::Bounded {
                let half = T::lit(0.5) * (y - x);
                let count = b_minus.eigenvalues()?.iter().filter(|&&l| l >= half).count();
                terms.push(BoundTerm { name: "b_minus".into(), count, threshold: half });
            } else {
                let qv = match &eig {
                    Some(eig) => eig.values[0],
                    None => a.min_eigenvalue()?,
                };
                q = Some(qv);
                // (A - q + 1)^{-1} = -(e - A)^{-1} at e = q - 1
                let km = bs_operator_with(a, eig.as_ref(), b_minus, qv - one, T::zero())?;
                let threshold = T::lit(0.5) * (y - x) / (y - qv + one);
                let neg = km.kernel.scale(-one);
                terms.push(BoundTerm {
                    name: "b_minus_semibounded".into(),
                    count: crate::inertia::dense_count_ge(&neg, threshold)?,
                    threshold,
                });
            }
        }
        BoundVariant::UpperSemibounded => {
            let km = k_minus.expect("built above");
            let neg = km.kernel.scale(-one);
            terms.push(BoundTerm {
                name: "bs_minus".into(),
                count: crate::inertia::dense_count_ge(&neg, one)?,
                threshold: one,
            });
            terms.push(BoundTerm {
                name: "cross".into(),
                count: cross_term(a, b_plus, b_minus, x, e1)?,
                threshold: one,
            });
        }
    }
    let rhs = terms.iter().map(|t| t.count).sum();
    Ok(BoundReport { variant, lhs, rhs, terms, satisfied: lhs <= rhs, inputs: BoundInputs { x, y, e0, e1, q }, n1, n2 })
}

/// `#(S₊ᵀ (e₁ - (A - B₋))^{-1} E_{(-∞, x]}(A - B₋) S₊ >= 1)`.
fn cross_term<T: Scalar>(
    a: &SymMatrix<T>,
    b_plus: &SymMatrix<T>,
    b_minus: &SymMatrix<T>,
    x: T,
    e1: T,
) -> Result<usize> {
    let f = b_plus.psd_factor()?;
    if f.factor.cols() == 0 {
        return Ok(0);
    }
    let d = a.sub(b_minus).to_dense();
    let eig = d.symmetric_eigen()?;
    let cut = x + T::lit(64.0) * T::epsilon() * d.max_abs().max(T::one());
    let k = eig.sandwich(&f.factor, |l| if l <= cut { T::one() / (e1 - l) } else { T::zero() });
    crate::inertia::dense_count_ge(&k, T::one())
}

/// `B₋^{1/2} (C₊ - e₁)^{-1} B₋^{1/2}` split by the spectral projections of `C₊`
/// onto `(-∞, e₁)`, `(e₁, y)` and `[y, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<T> {
    pub d1: Matrix<T>,
    pub d2: Matrix<T>,
    pub d3: Matrix<T>,
    pub checks: DecompositionChecks<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionChecks<T> {
    /// Largest eigenvalue of `D₁`; `D₁ ⪯ 0` up to `tol`.
    pub d1_max: T,
    pub d1_nonpositive: bool,
    pub d2_rank: usize,
    /// `#(C₊ ∈ (e₁, y))`.
    pub n2: usize,
    pub d2_rank_ok: bool,
    /// Largest eigenvalue of `D₃ - B₋ / ((y-x)/2)`, when `x` is given.
    pub d3_excess: Option<T>,
    pub d3_ok: bool,
    /// `‖D₁ + D₂ + D₃ - B₋^{1/2}(C₊ - e₁)^{-1}B₋^{1/2}‖ / ‖·‖`, the whole product from a separate solve.
    pub completeness: T,
}

impl<T: Scalar> DecompositionChecks<T> {
    pub fn all_pass(&self) -> bool {
        self.d1_nonpositive && self.d2_rank_ok && self.d3_ok
    }
}

pub fn bs_decompose<T: Scalar>(
    b_minus: &SymMatrix<T>,
    c_plus: &SymMatrix<T>,
    e1: T,
    y: T,
    x: Option<T>,
    tol: T,
) -> Result<Decomposition<T>> {
    check_dims(c_plus, &[("B₋", b_minus)])?;
    if !(e1 < y) {
        return Err(Error::InvalidInput(format!("e₁ = {e1} must be below y = {y}")));
    }
    let eig = c_plus.eigen()?;
    if let Some(&l) = eig.values.iter().find(|&&l| (l - e1).abs() <= tol) {
        return Err(Error::ResolventProximity {
            energy: e1.to_f64_lossy(),
            distance: (l - e1).abs().to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    let root = b_minus.psd_sqrt()?;
    let upper = y - tol;
    let part =
        |keep: &dyn Fn(T) -> bool| eig.sandwich(&root, |l| if keep(l) { T::one() / (l - e1) } else { T::zero() });
    let d1 = part(&|l| l < e1);
    let d2 = part(&|l| e1 < l && l < upper);
    let d3 = part(&|l| l >= upper);
    let n2 = eig.values.iter().filter(|&&l| e1 < l && l < upper).count();

    let scale = d1.max_abs().max(d2.max_abs()).max(d3.max_abs()).max(T::one());
    let d1_max = d1.symmetric_eigenvalues()?.last().copied().unwrap_or(T::zero());
    let ev2 = d2.symmetric_eigenvalues()?;
    let rank_floor = T::lit(1e-10) * ev2.iter().fold(T::zero(), |m, &x| m.max(x.abs())).max(T::min_positive_value());
    let d2_rank = ev2.iter().filter(|&&l| l.abs() > rank_floor).count();
    let d3_excess = match x {
        Some(x) => {
            let bound = b_minus.to_dense().scale(T::lit(2.0) / (y - x));
            Some(d3.sub(&bound).symmetric_eigenvalues()?.last().copied().unwrap_or(T::zero()))
        }
        None => None,
    };
    let whole = {
        let y = c_plus.solve_shifted(e1, &root)?;
        root.transpose().matmul(&y).symmetrize()
    };
    let sum = d1.add(&d2).add(&d3);
    let completeness = sum.sub(&whole).max_abs() / whole.max_abs().max(T::min_positive_value());
    let checks = DecompositionChecks {
        d1_max,
        d1_nonpositive: d1_max <= tol * scale,
        d2_rank,
        n2,
        d2_rank_ok: d2_rank <= n2,
        d3_excess,
        d3_ok: d3_excess.is_none_or(|v| v <= tol * scale),
        completeness,
    };
    Ok(Decomposition { d1, d2, d3, checks })
}
