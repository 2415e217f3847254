//! Sign splitting `δJ = δJ₊ - δJ₋` of a Jacobi perturbation into a diagonal
//! positive part and a tridiagonal positive part.
//!
//! Each coupling `δa_n` is moved onto the diagonal of both parts:
//!
//! ```text
//! (δJ₊)_nn      = (δb_n)₊ + |δa_{n-1}| + |δa_n|
//! (δJ₋)_nn      = (δb_n)₋ + |δa_{n-1}| + |δa_n|
//! (δJ₋)_{n,n+1} = -δa_n
//! ```
//!
//! `δJ₋` is diagonally dominant with a nonnegative diagonal, hence PSD, for
//! either sign of `δa_n`.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{SymMatrix, Tridiagonal};
use crate::operators::{Perturbation, Window};
use crate::scalar::{neg_part, pos_part, ulp, Scalar};

/// Both halves of the splitting, materialized on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPerturbation<T> {
    window: Window,
    plus: Vec<T>,
    minus: Tridiagonal<T>,
}

/// Numerical checks of a splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitChecks<T> {
    /// Largest entrywise `|plus - minus - δJ|`, in ulps of the larger part.
    pub reconstruction_ulps: T,
    pub plus_min_eigenvalue: T,
    pub minus_min_eigenvalue: T,
    pub minus_norm: T,
    /// Both minima `>= -1e-12 · norm`.
    pub psd: bool,
    pub trace_sum: T,
    /// `Σ (|δa_n| + |δb_n|)` over the window, including the coupling into the window from the left.
    pub window_l1: T,
    /// `trace_sum <= 4 · window_l1`.
    pub trace_bound: bool,
}

/// Splits `pert` on `window`.
///
/// Sites at the window edge keep the `|δa|` weight of couplings that leave the
/// window, so both parts are PSD independently of where the window is cut.
pub fn split<T: Scalar>(pert: &Perturbation<T>, window: Window) -> SplitPerturbation<T> {
    let n = window.len();
    let mut plus = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut left = pert.at(window.lo() - 1).da.abs();
    for site in window.sites() {
        let s = pert.at(site);
        let couple = left + s.da.abs();
        plus.push(pos_part(s.db) + couple);
        diag.push(neg_part(s.db) + couple);
        if site < window.hi() {
            off.push(T::zero() - s.da);
        }
        left = s.da.abs();
    }
    let minus = Tridiagonal::new(diag, off).expect("lengths match by construction");
    SplitPerturbation { window, plus, minus }
}

/// `δJ` restricted to `window` as a symmetric tridiagonal matrix.
pub fn perturbation_matrix<T: Scalar>(pert: &Perturbation<T>, window: Window) -> Tridiagonal<T> {
    let diag = window.sites().map(|n| pert.at(n).db).collect();
    let off = window.sites().take(window.len() - 1).map(|n| pert.at(n).da).collect();
    Tridiagonal::new(diag, off).expect("lengths match by construction")
}

impl<T: Scalar> SplitPerturbation<T> {
    pub fn window(&self) -> Window {
        self.window
    }

    /// Diagonal of `δJ₊`.
    pub fn plus(&self) -> &[T] {
        &self.plus
    }

    pub fn minus(&self) -> &Tridiagonal<T> {
        &self.minus
    }

    pub fn plus_matrix(&self) -> SymMatrix<T> {
        SymMatrix::Diagonal(self.plus.clone())
    }

    pub fn minus_matrix(&self) -> SymMatrix<T> {
        SymMatrix::Tridiagonal(self.minus.clone())
    }

    /// `plus - minus` as a tridiagonal matrix.
    pub fn reconstruct(&self) -> Tridiagonal<T> {
        Tridiagonal::from_diagonal(self.plus.clone()).sub(&self.minus)
    }

    /// Largest reconstruction error in ulps of `max(|plus|, |minus|)` entrywise.
    pub fn reconstruction_ulps(&self, pert: &Perturbation<T>) -> T {
        let dj = perturbation_matrix(pert, self.window);
        let mut worst = T::zero();
        for i in 0..self.plus.len() {
            let p = self.plus[i];
            let m = self.minus.diag()[i];
            let err = (p - m - dj.diag()[i]).abs();
            worst = worst.max(ulps(err, p.abs().max(m.abs())));
        }
        for i in 0..self.minus.off().len() {
            let m = self.minus.off()[i];
            let err = (-m - dj.off()[i]).abs();
            worst = worst.max(ulps(err, m.abs()));
        }
        worst
    }

    pub fn checks(&self, pert: &Perturbation<T>) -> Result<SplitChecks<T>> {
        let plus_min = self.plus.iter().copied().fold(T::infinity(), T::min);
        let minus_min = self.minus.eigenvalues()?.first().copied().unwrap_or(T::zero());
        let minus_norm = self.minus.norm_inf();
        let plus_norm = self.plus.iter().copied().fold(T::zero(), |m, x| m.max(x.abs()));
        let floor = T::lit(-1e-12);
        let psd = plus_min >= floor * plus_norm && minus_min >= floor * minus_norm;
        let trace_sum = self.plus.iter().copied().sum::<T>() + self.minus.diag().iter().copied().sum::<T>();
        let mut window_l1 = pert.at(self.window.lo() - 1).da.abs();
        for n in self.window.sites() {
            let s = pert.at(n);
            window_l1 += s.da.abs() + s.db.abs();
        }
        let slack = T::one() + T::lit(64.0) * T::epsilon();
        Ok(SplitChecks {
            reconstruction_ulps: self.reconstruction_ulps(pert),
            plus_min_eigenvalue: plus_min,
            minus_min_eigenvalue: minus_min,
            minus_norm,
            psd,
            trace_sum,
            window_l1,
            trace_bound: trace_sum <= T::lit(4.0) * window_l1 * slack,
        })
    }
}

fn ulps<T: Scalar>(err: T, magnitude: T) -> T {
    if err == T::zero() {
        return T::zero();
    }
    let unit = if magnitude > T::zero() { ulp(magnitude) } else { T::min_positive_value() };
    err / unit
}
