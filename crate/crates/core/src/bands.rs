//! Floquet band structure of a periodic Jacobi background.
//!
//! With state vector `(u_n, u_{n-1})`, one lattice step of
//! `a_{n-1} u_{n-1} + b_n u_n + a_n u_{n+1} = λ u_n` is the transfer matrix
//! `[[(λ-b_n)/a_n, -a_{n-1}/a_n], [1, 0]]`. The monodromy `M(λ)` is the product
//! over one period, `det M = 1`, and the discriminant is `Δ(λ) = tr M(λ)`.
//! Bands are exactly `{λ : |Δ(λ)| <= 2}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::PeriodicBackground;
use crate::scalar::Scalar;

type Mat2<T> = [[T; 2]; 2];

fn mul2<T: Scalar>(x: &Mat2<T>, y: &Mat2<T>) -> Mat2<T> {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

/// One-period monodromy matrix and its λ-derivative.
pub fn monodromy<T: Scalar>(bg: &PeriodicBackground<T>, lambda: T) -> (Mat2<T>, Mat2<T>) {
    let zero = T::zero();
    let one = T::one();
    let mut m = [[one, zero], [zero, one]];
    let mut dm = [[zero, zero], [zero, zero]];
    for n in 0..bg.period() as i64 {
        let an = bg.a_at(n);
        let t = [[(lambda - bg.b_at(n)) / an, -bg.a_at(n - 1) / an], [one, zero]];
        let dt = [[one / an, zero], [zero, zero]];
        let dtm = mul2(&dt, &m);
        let tdm = mul2(&t, &dm);
        dm = [[dtm[0][0] + tdm[0][0], dtm[0][1] + tdm[0][1]], [dtm[1][0] + tdm[1][0], dtm[1][1] + tdm[1][1]]];
        m = mul2(&t, &m);
    }
    (m, dm)
}

/// Floquet discriminant `Δ(λ)`.
pub fn discriminant<T: Scalar>(bg: &PeriodicBackground<T>, lambda: T) -> T {
    let (m, _) = monodromy(bg, lambda);
    m[0][0] + m[1][1]
}

/// `(Δ(λ), Δ'(λ))`.
pub fn discriminant_with_derivative<T: Scalar>(bg: &PeriodicBackground<T>, lambda: T) -> (T, T) {
    let (m, dm) = monodromy(bg, lambda);
    (m[0][0] + m[1][1], dm[0][0] + dm[1][1])
}

/// Per-site decay rate `|x|^{1/p}` of the decaying Floquet solution at `λ`
/// (1 inside the bands).
pub fn floquet_decay_rate<T: Scalar>(bg: &PeriodicBackground<T>, lambda: T) -> T {
    let d = discriminant(bg, lambda);
    let two = T::lit(2.0);
    if d.abs() <= two {
        return T::one();
    }
    let root = (d * d - T::lit(4.0)).sqrt();
    // x + 1/x = Δ with |x| < 1; avoid cancellation by taking the large root first
    let big = (d.abs() + root) / two;
    (T::one() / big).powf(T::one() / T::from_count(bg.period()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeSide {
    Left,
    Right,
}

/// A band endpoint with the discriminant slope there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandEdge<T> {
    pub band: usize,
    pub side: EdgeSide,
    pub lambda: T,
    pub derivative: T,
}

/// Closed bands `[l_j, r_j]`, strictly ordered, and the closed gaps that were merged.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSet<T> {
    bands: Vec<(T, T)>,
    degenerate: Vec<T>,
    edges: Vec<BandEdge<T>>,
}

/// A connected component of `ℝ \ E`. Unbounded ends are `±∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapComponent<T> {
    /// 0 below the spectrum, `1..=g` for the interior gaps, `g+1` above.
    pub index: usize,
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> GapComponent<T> {
    pub fn is_interior(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo < x && x < self.hi
    }
}

impl<T: Scalar> BandSet<T> {
    pub fn bands(&self) -> &[(T, T)] {
        &self.bands
    }

    /// Touching points of bands (zero-width gaps), excluded from the gap list.
    pub fn degenerate_edges(&self) -> &[T] {
        &self.degenerate
    }

    pub fn edges(&self) -> &[BandEdge<T>] {
        &self.edges
    }

    /// Open interior gaps `(r_j, l_{j+1})`.
    pub fn gaps(&self) -> Vec<(T, T)> {
        self.bands.windows(2).map(|w| (w[0].1, w[1].0)).collect()
    }

    /// Interior gaps together with the two unbounded complements.
    pub fn components(&self) -> Vec<GapComponent<T>> {
        let mut out = Vec::with_capacity(self.bands.len() + 1);
        out.push(GapComponent { index: 0, lo: T::neg_infinity(), hi: self.bands[0].0 });
        for (k, (lo, hi)) in self.gaps().into_iter().enumerate() {
            out.push(GapComponent { index: k + 1, lo, hi });
        }
        out.push(GapComponent { index: self.bands.len(), lo: self.bands[self.bands.len() - 1].1, hi: T::infinity() });
        out
    }

    pub fn spectrum_min(&self) -> T {
        self.bands[0].0
    }

    pub fn spectrum_max(&self) -> T {
        self.bands[self.bands.len() - 1].1
    }

    pub fn contains(&self, x: T) -> bool {
        self.bands.iter().any(|&(l, r)| l <= x && x <= r)
    }

    /// `dist(x, E)`.
    pub fn distance(&self, x: T) -> T {
        self.bands
            .iter()
            .map(|&(l, r)| {
                if x < l {
                    l - x
                } else if x > r {
                    x - r
                } else {
                    T::zero()
                }
            })
            .fold(T::infinity(), T::min)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`, run to machine resolution.
fn bisect<T: Scalar>(mut lo: T, mut hi: T, mut f: impl FnMut(T) -> T) -> Result<T> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NumericalFailure {
            message: "bracket does not contain a sign change".into(),
            lo: lo.to_f64_lossy(),
            hi: hi.to_f64_lossy(),
        });
    }
    for _ in 0..200 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NumericalFailure {
        message: "bisection did not converge".into(),
        lo: lo.to_f64_lossy(),
        hi: hi.to_f64_lossy(),
    })
}

/// Relative level below which `|Δ(c)| - 2` at a critical point counts as a touching (closed) gap.
const DEGENERATE_LEVEL: f64 = 1e3;

/// Computes the band set of `bg` with edges located to within `tol`.
///
/// The spectrum range is scanned on a grid of 1000 steps for critical points of
/// `Δ`; between consecutive critical points `Δ` is monotone, so each piece holds
/// at most one root of `Δ - 2` and one of `Δ + 2`, found by bisection. The total
/// must be `2p` roots counted with multiplicity; otherwise the grid is refined
/// and, failing that, a numerical failure is reported.
pub fn compute_bands<T: Scalar>(bg: &PeriodicBackground<T>, tol: T) -> Result<BandSet<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("band tolerance must be positive".into()));
    }
    let p = bg.period();
    let max_a = bg.a().iter().copied().fold(T::zero(), T::max);
    let min_b = bg.b().iter().copied().fold(T::infinity(), T::min);
    let max_b = bg.b().iter().copied().fold(T::neg_infinity(), T::max);
    let two = T::lit(2.0);
    let pad = T::lit(1e-2) * (max_b - min_b + T::lit(4.0) * max_a) + T::one();
    let lo = min_b - two * max_a - pad;
    let hi = max_b + two * max_a + pad;

    let delta = |x: T| discriminant(bg, x);
    let ddelta = |x: T| discriminant_with_derivative(bg, x).1;
    let deg_level = T::lit(DEGENERATE_LEVEL) * T::epsilon();

    let mut last_bracket = (lo, hi);
    for level in 0..4u32 {
        let steps = 1000usize * 10usize.pow(level);
        let h = (hi - lo) / T::from_count(steps);
        let grid: Vec<T> = (0..=steps).map(|i| lo + h * T::from_count(i)).collect();

        // critical points of Δ
        let mut crit = Vec::new();
        let mut prev = ddelta(grid[0]);
        for i in 1..grid.len() {
            let cur = ddelta(grid[i]);
            if cur == T::zero() {
                crit.push(grid[i]);
            } else if prev != T::zero() && prev.signum() != cur.signum() {
                crit.push(bisect(grid[i - 1], grid[i], ddelta)?);
            }
            prev = cur;
        }
        crit.dedup();

        // a critical value at ±2 (to rounding) is a double root: a closed gap
        let mut pinned: Vec<(T, Option<T>)> = Vec::with_capacity(crit.len());
        let mut degenerate = Vec::new();
        for &c in &crit {
            let d = delta(c);
            let excess = d.abs() - two;
            if excess.abs() <= deg_level * d.abs().max(T::one()) {
                let level_hit = two * d.signum();
                pinned.push((c, Some(level_hit)));
                degenerate.push(c);
            } else {
                pinned.push((c, None));
            }
        }

        let mut breaks: Vec<(T, Option<T>)> = vec![(lo, None)];
        breaks.extend(pinned.iter().copied());
        breaks.push((hi, None));

        let mut roots: Vec<T> = Vec::new();
        for w in breaks.windows(2) {
            let (u, pu) = w[0];
            let (v, pv) = w[1];
            for s in [-two, two] {
                let fu = if pu == Some(s) { T::zero() } else { delta(u) - s };
                let fv = if pv == Some(s) { T::zero() } else { delta(v) - s };
                if fu != T::zero() && fv != T::zero() && fu.signum() != fv.signum() {
                    roots.push(bisect(u, v, |x| delta(x) - s)?);
                }
            }
        }
        let total = roots.len() + 2 * degenerate.len();
        if total == 2 * p {
            let mut all: Vec<(T, bool)> = roots.into_iter().map(|r| (r, false)).collect();
            for &c in &degenerate {
                all.push((c, true));
                all.push((c, true));
            }
            all.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite edges"));
            let mut bands: Vec<(T, T)> = Vec::new();
            for pair in all.chunks(2) {
                let (l, r) = (pair[0], pair[1]);
                match bands.last_mut() {
                    // closed gap: the previous band ends where this one starts
                    Some(last) if l.1 && last.1 == l.0 => last.1 = r.0,
                    _ => bands.push((l.0, r.0)),
                }
            }
            let edges = bands
                .iter()
                .enumerate()
                .flat_map(|(j, &(l, r))| {
                    [
                        BandEdge { band: j, side: EdgeSide::Left, lambda: l, derivative: ddelta(l) },
                        BandEdge { band: j, side: EdgeSide::Right, lambda: r, derivative: ddelta(r) },
                    ]
                })
                .collect();
            return Ok(BandSet { bands, degenerate, edges });
        }
        last_bracket = (roots.iter().copied().fold(hi, T::min), roots.iter().copied().fold(lo, T::max));
    }
    Err(Error::NumericalFailure {
        message: format!("could not resolve all {} band edges of the period-{p} background", 2 * p),
        lo: last_bracket.0.to_f64_lossy(),
        hi: last_bracket.1.to_f64_lossy(),
    })
}

/// Default relative threshold for flagging a resonance site.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-8;

/// The bounded (anti)periodic solution of `(J₀ - λ₀)u = 0` at a band edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandEdgeSolution<T> {
    pub edge: T,
    /// `u_0, …, u_p`, scaled so `max |u_n| = 1`.
    pub u: Vec<T>,
    /// `+1` (periodic) or `-1` (antiperiodic).
    pub floquet_multiplier: T,
    /// Sites `n ∈ [0, p]` with `|u_n| < tol · max |u|`.
    pub resonance_sites: Vec<usize>,
}

impl<T: Scalar> BandEdgeSolution<T> {
    /// `u_n` for `n ∈ [0, periods·p]` by Floquet extension `u_{n+p} = σ u_n`.
    pub fn extend(&self, periods: usize) -> Vec<T> {
        let p = self.u.len() - 1;
        let mut out = Vec::with_capacity(periods * p + 1);
        let mut factor = T::one();
        for _ in 0..periods {
            out.extend(self.u[..p].iter().map(|&x| x * factor));
            factor *= self.floquet_multiplier;
        }
        out.push(self.u[0] * factor);
        out
    }

    /// Max relative residual of the three-term recurrence over `periods` periods.
    pub fn recurrence_residual(&self, bg: &PeriodicBackground<T>, periods: usize) -> T {
        let u = self.extend(periods);
        let scale = u.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        let mut worst = T::zero();
        for n in 1..u.len() - 1 {
            let site = n as i64;
            let r = bg.a_at(site - 1) * u[n - 1] + (bg.b_at(site) - self.edge) * u[n] + bg.a_at(site) * u[n + 1];
            worst = worst.max(r.abs());
        }
        worst / scale
    }

    pub fn is_resonant(&self, site: i64) -> bool {
        let p = (self.u.len() - 1) as i64;
        self.resonance_sites.contains(&(site.rem_euclid(p) as usize))
    }
}

/// Band-edge solution with the default resonance tolerance.
pub fn band_edge_solution<T: Scalar>(bg: &PeriodicBackground<T>, edge: T, tol: T) -> Result<BandEdgeSolution<T>> {
    band_edge_solution_with(bg, edge, tol, T::lit(DEFAULT_RESONANCE_TOL))
}

pub fn band_edge_solution_with<T: Scalar>(
    bg: &PeriodicBackground<T>,
    edge: T,
    tol: T,
    resonance_tol: T,
) -> Result<BandEdgeSolution<T>> {
    let (m, dm) = monodromy(bg, edge);
    let trace = m[0][0] + m[1][1];
    let slope = dm[0][0] + dm[1][1];
    let two = T::lit(2.0);
    let miss = trace.abs() - two;
    if miss.abs() > tol * (T::one() + slope.abs()) + T::lit(1e4) * T::epsilon() {
        return Err(Error::InvalidInput(format!(
            "λ₀ = {edge} is not a band edge: |Δ(λ₀)| = {} (tolerance {tol})",
            trace.abs()
        )));
    }
    let sigma = trace.signum();
    let n = [[m[0][0] - sigma, m[0][1]], [m[1][0], m[1][1] - sigma]];
    // (N01, -N00) and (-N11, N10) both span ker N when det N = 0;
    // the Jordan case leaves exactly one of them nonzero.
    let c1 = (n[0][1], -n[0][0]);
    let c2 = (-n[1][1], n[1][0]);
    let norm = |c: (T, T)| c.0.abs().max(c.1.abs());
    let scale = m.iter().flatten().fold(T::zero(), |a, &x| a.max(x.abs()));
    let (u0, um1) = if norm(c1) >= norm(c2) { c1 } else { c2 };
    let (u0, um1) = if norm((u0, um1)) <= T::lit(1e2) * T::epsilon() * scale {
        // M = σI: every solution is (anti)periodic; take u_{-1} = 0, u_0 = 1
        (T::one(), T::zero())
    } else {
        (u0, um1)
    };

    let p = bg.period();
    let mut u = Vec::with_capacity(p + 1);
    let mut prev = um1;
    let mut cur = u0;
    u.push(cur);
    for site in 0..p as i64 {
        let next = ((edge - bg.b_at(site)) * cur - bg.a_at(site - 1) * prev) / bg.a_at(site);
        prev = cur;
        cur = next;
        u.push(cur);
    }
    let peak = u.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
    let sign = u.iter().find(|x| x.abs() > resonance_tol * peak).map_or(T::one(), |x| x.signum());
    for x in &mut u {
        *x = *x * sign / peak;
    }
    let resonance_sites = (0..=p).filter(|&k| u[k].abs() < resonance_tol).collect();
    Ok(BandEdgeSolution { edge, u, floquet_multiplier: sigma, resonance_sites })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p2() -> PeriodicBackground<f64> {
        PeriodicBackground::new(vec![1.0, 1.0], vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn free_discriminant_is_identity() {
        let bg = PeriodicBackground::<f64>::free();
        assert_eq!(discriminant(&bg, 0.0), 0.0);
        assert_eq!(discriminant(&bg, 1.7), 1.7);
    }

    #[test]
    fn two_periodic_discriminant_by_hand() {
        // T1 T0 = [[λ²-2, -(λ+1)], [λ-1, -1]] so Δ = λ² - 3
        let bg = p2();
        assert_eq!(discriminant(&bg, 0.0), -3.0);
        assert_eq!(discriminant(&bg, 1.0), -2.0);
        let (d, dd) = discriminant_with_derivative(&bg, 0.5);
        assert!((d - (0.25 - 3.0)).abs() < 1e-15);
        assert!((dd - 1.0).abs() < 1e-15);
    }

    #[test]
    fn free_and_shifted_bands() {
        let free = compute_bands(&PeriodicBackground::<f64>::free(), 1e-12).unwrap();
        assert_eq!(free.bands().len(), 1);
        assert!((free.bands()[0].0 + 2.0).abs() < 1e-12 && (free.bands()[0].1 - 2.0).abs() < 1e-12);
        assert!(free.gaps().is_empty());
        let shifted = PeriodicBackground::<f64>::new(vec![1.0], vec![0.75]).unwrap();
        let b = compute_bands(&shifted, 1e-12).unwrap();
        assert!((b.bands()[0].0 + 1.25).abs() < 1e-12 && (b.bands()[0].1 - 2.75).abs() < 1e-12);
    }

    #[test]
    fn two_periodic_bands_and_gap() {
        let b = compute_bands(&p2(), 1e-10).unwrap();
        let s5 = 5f64.sqrt();
        let want = [(-s5, -1.0), (1.0, s5)];
        assert_eq!(b.bands().len(), 2);
        for (got, exp) in b.bands().iter().zip(want) {
            assert!((got.0 - exp.0).abs() < 1e-10 && (got.1 - exp.1).abs() < 1e-10);
        }
        let gaps = b.gaps();
        assert!((gaps[0].0 + 1.0).abs() < 1e-10 && (gaps[0].1 - 1.0).abs() < 1e-10);
        assert_eq!(b.edges().len(), 4);
        assert_eq!(b.components().len(), 3);
        assert!((b.distance(0.0) - 1.0).abs() < 1e-10);
        assert_eq!(b.distance(1.5), 0.0);
    }

    #[test]
    fn closed_gap_is_merged_and_reported() {
        // the free chain written with period 2: Δ = λ² - 2 touches -2 at λ = 0
        let bg = PeriodicBackground::<f64>::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let b = compute_bands(&bg, 1e-10).unwrap();
        assert_eq!(b.bands().len(), 1);
        assert!(b.gaps().is_empty());
        assert_eq!(b.degenerate_edges().len(), 1);
        assert!(b.degenerate_edges()[0].abs() < 1e-10);
    }

    #[test]
    fn free_edge_solutions() {
        let bg = PeriodicBackground::<f64>::free();
        let top = band_edge_solution(&bg, 2.0, 1e-12).unwrap();
        assert_eq!(top.u, vec![1.0, 1.0]);
        assert_eq!(top.floquet_multiplier, 1.0);
        assert!(top.resonance_sites.is_empty());
        let bottom = band_edge_solution(&bg, -2.0, 1e-12).unwrap();
        assert_eq!(bottom.u, vec![1.0, -1.0]);
        assert_eq!(bottom.floquet_multiplier, -1.0);
        assert_eq!(bottom.extend(2), vec![1.0, -1.0, 1.0]);
    }

    #[test]
    fn two_periodic_edge_solution_jordan_case() {
        // M(1) = [[-1, -2], [0, -1]]: Jordan block at multiplier -1, u = (1, 0, -1)
        let sol = band_edge_solution(&p2(), 1.0, 1e-12).unwrap();
        assert_eq!(sol.floquet_multiplier, -1.0);
        assert!((sol.u[0] - 1.0).abs() < 1e-15);
        assert!(sol.u[1].abs() < 1e-15);
        assert!((sol.u[2] + 1.0).abs() < 1e-15);
        assert_eq!(sol.resonance_sites, vec![1]);
        assert!(!sol.is_resonant(0));
        assert!(sol.recurrence_residual(&p2(), 10) < 1e-12);
        // the other gap edge resonates at site 0 instead
        let low = band_edge_solution(&p2(), -1.0, 1e-12).unwrap();
        assert!(low.is_resonant(0));
    }

    #[test]
    fn non_edge_is_rejected() {
        assert!(matches!(band_edge_solution(&p2(), 0.0, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn decay_rate_of_free_chain() {
        // λ = x + 1/x with x = 1/2
        let r = floquet_decay_rate(&PeriodicBackground::<f64>::free(), 2.5);
        assert!((r - 0.5).abs() < 1e-15);
        assert_eq!(floquet_decay_rate(&PeriodicBackground::<f64>::free(), 1.0), 1.0);
    }
}
