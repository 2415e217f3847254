//! Lattice Green's functions `G₀(n,m;λ) = ⟨δ_n, (J₀ - λ)^{-1} δ_m⟩` of a
//! periodic background at real energies off the bands, the Dirichlet
//! (site-0 decoupled) Green's function, and empirical scans of their
//! near-edge growth.
//!
//! Values come from a solve on a symmetric Dirichlet section. In a gap the
//! Green's function decays like `ρ^{|n-m|}` with `ρ = |x|^{1/p}` the per-site
//! Floquet rate, so a section whose boundary sits `k` sites away from the
//! sites of interest is accurate to about `ρ^k`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::bands::{compute_bands, floquet_decay_rate, BandSet, GapComponent};
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::operators::{PeriodicBackground, Window};
use crate::scalar::Scalar;

/// Largest section the auto-sizing rule will build.
pub const MAX_AUTO_SIZE: usize = 20_000_001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenMethod {
    TruncatedSolve,
    FreeAnalytic,
}

impl FromStr for GreenMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated-solve" => Ok(GreenMethod::TruncatedSolve),
            "free-analytic" => Ok(GreenMethod::FreeAnalytic),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}` (expected truncated-solve or free-analytic)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenEntry<T> {
    pub n: i64,
    pub m: i64,
    pub value: T,
}

/// Green's function values at one energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenEvaluation<T> {
    pub lambda: T,
    pub dirichlet: bool,
    pub method: GreenMethod,
    /// Number of sites in the section (0 for the analytic method).
    pub size: usize,
    pub entries: Vec<GreenEntry<T>>,
}

/// `G(n,m;λ)` of the period-1 background `a ≡ a`, `b ≡ b`, in closed form.
///
/// With `(λ-b)/a = x + 1/x` and `|x| < 1`, `G = x^{|n-m|} / (a (x - 1/x))`.
pub fn free_green<T: Scalar>(a: T, b: T, lambda: T, n: i64, m: i64) -> Result<T> {
    let z = (lambda - b) / a;
    let two = T::lit(2.0);
    if z.abs() <= two {
        return Err(Error::InvalidInput(format!("λ = {lambda} lies in the band [{}, {}]", b - two * a, b + two * a)));
    }
    let x = two / (z + z.signum() * (z * z - T::lit(4.0)).sqrt());
    let k = (n - m).unsigned_abs();
    let num = x.powi(i32::try_from(k).map_err(|_| Error::InvalidInput("site distance too large".into()))?);
    Ok(num / (a * (x - T::one() / x)))
}

/// Green's functions of one periodic background.
#[derive(Debug, Clone)]
pub struct GreenSolver<T> {
    bg: PeriodicBackground<T>,
    bands: BandSet<T>,
}

impl<T: Scalar> GreenSolver<T> {
    pub fn new(bg: PeriodicBackground<T>) -> Result<Self> {
        let bands = compute_bands(&bg, T::lit(1e2) * T::epsilon())?;
        Ok(Self { bg, bands })
    }

    pub fn with_bands(bg: PeriodicBackground<T>, bands: BandSet<T>) -> Self {
        Self { bg, bands }
    }

    pub fn background(&self) -> &PeriodicBackground<T> {
        &self.bg
    }

    pub fn bands(&self) -> &BandSet<T> {
        &self.bands
    }

    fn check_energy(&self, lambda: T, tol: T) -> Result<()> {
        if !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("energy {lambda} is not finite")));
        }
        let d = self.bands.distance(lambda);
        if d <= tol {
            return Err(Error::InvalidInput(format!("λ = {lambda} is within {tol:e} of the bands (distance {d:e})")));
        }
        Ok(())
    }

    /// Section size for sites within `reach` of 0: `4·max(k, reach) + 1` where
    /// `ρ^k < tol`.
    pub fn required_size(&self, lambda: T, reach: u64, tol: T) -> usize {
        let rho = floquet_decay_rate(&self.bg, lambda);
        let k = if rho < T::one() { (tol.ln() / rho.ln()).ceil().to_f64_lossy().max(1.0) } else { f64::INFINITY };
        let k = k.max(reach as f64).max(self.bg.period() as f64);
        let n = 4.0 * k + 1.0;
        if n >= MAX_AUTO_SIZE as f64 {
            MAX_AUTO_SIZE
        } else {
            n as usize
        }
    }

    /// Symmetric section for sites within `reach`, either auto-sized or the
    /// caller's `size`, which must be at least the auto-sized value.
    pub fn window(&self, lambda: T, reach: u64, size: Option<usize>, tol: T) -> Result<Window> {
        let needed = self.required_size(lambda, reach, tol);
        let n = match size {
            Some(n) if n < needed => {
                return Err(Error::Size {
                    message: format!("section of {n} sites cannot reach tolerance {tol:e} at λ = {lambda}"),
                    suggested: needed,
                })
            }
            Some(n) => n,
            None if needed >= MAX_AUTO_SIZE => {
                return Err(Error::Size {
                    message: format!("λ = {lambda} is too close to the bands for tolerance {tol:e}"),
                    suggested: needed,
                })
            }
            None => needed,
        };
        Ok(Window::symmetric((n / 2) as u64))
    }

    fn section(&self, window: Window) -> Tridiagonal<T> {
        self.bg.truncate(window).tridiagonal().clone()
    }

    /// Column `G(·, m; λ)` on `window`.
    pub fn column(&self, m: i64, lambda: T, window: Window) -> Result<Vec<T>> {
        let pos = window
            .position(m)
            .ok_or_else(|| Error::InvalidInput(format!("site {m} is outside the section {window}")))?;
        let mut rhs = vec![T::zero(); window.len()];
        rhs[pos] = T::one();
        self.section(window).solve_shifted(lambda, &rhs)
    }

    /// `max_k |((J₀ - λ) g)_k - δ_{km}|` over sites at least one step inside `window`.
    pub fn resolvent_residual(&self, m: i64, lambda: T, window: Window) -> Result<T> {
        let g = self.column(m, lambda, window)?;
        let t = self.section(window);
        let r = t.matvec(&g);
        let mut worst = T::zero();
        for i in 1..window.len().saturating_sub(1) {
            let delta = if window.site(i) == m { T::one() } else { T::zero() };
            worst = worst.max((r[i] - lambda * g[i] - delta).abs());
        }
        Ok(worst)
    }

    /// `G₀(n, m; λ)`.
    pub fn green_function(&self, n: i64, m: i64, lambda: T, size: Option<usize>, tol: T) -> Result<T> {
        self.check_energy(lambda, tol)?;
        let reach = n.unsigned_abs().max(m.unsigned_abs());
        let window = self.window(lambda, reach, size, tol)?;
        let col = self.column(m, lambda, window)?;
        Ok(col[window.position(n).expect("n is within reach")])
    }

    /// `G₀^D(n, m; λ)` with site 0 decoupled.
    pub fn dirichlet_green(&self, n: i64, m: i64, lambda: T, size: Option<usize>, tol: T) -> Result<T> {
        self.dirichlet_green_at(0, n, m, lambda, size, tol)
    }

    /// `G(n,m) - G(n,c) G(c,m) / G(c,c)` for a pivot site `c`.
    pub fn dirichlet_green_at(&self, pivot: i64, n: i64, m: i64, lambda: T, size: Option<usize>, tol: T) -> Result<T> {
        self.check_energy(lambda, tol)?;
        let reach = n.unsigned_abs().max(m.unsigned_abs()).max(pivot.unsigned_abs());
        let window = self.window(lambda, reach, size, tol)?;
        let cm = self.column(m, lambda, window)?;
        let cp = self.column(pivot, lambda, window)?;
        let at = |v: &[T], k: i64| v[window.position(k).expect("site within reach")];
        let gpp = at(&cp, pivot);
        check_pivot(gpp, tol)?;
        Ok(at(&cm, n) - at(&cp, n) * at(&cm, pivot) / gpp)
    }

    /// Values at many `(n, m)` pairs from one section.
    pub fn evaluate(
        &self,
        pairs: &[(i64, i64)],
        lambda: T,
        size: Option<usize>,
        tol: T,
        dirichlet: bool,
        method: GreenMethod,
    ) -> Result<GreenEvaluation<T>> {
        self.check_energy(lambda, tol)?;
        if method == GreenMethod::FreeAnalytic {
            if self.bg.period() != 1 {
                return Err(Error::InvalidInput("the analytic method needs a period-1 background".into()));
            }
            let (a, b) = (self.bg.a()[0], self.bg.b()[0]);
            let g = |n, m| free_green(a, b, lambda, n, m);
            let mut entries = Vec::with_capacity(pairs.len());
            for &(n, m) in pairs {
                let mut value = g(n, m)?;
                if dirichlet {
                    let g00 = g(0, 0)?;
                    check_pivot(g00, tol)?;
                    value -= g(n, 0)? * g(0, m)? / g00;
                }
                entries.push(GreenEntry { n, m, value });
            }
            return Ok(GreenEvaluation { lambda, dirichlet, method, size: 0, entries });
        }
        let reach = pairs.iter().map(|&(n, m)| n.unsigned_abs().max(m.unsigned_abs())).max().unwrap_or(0);
        let window = self.window(lambda, reach, size, tol)?;
        let mut columns: Vec<i64> = pairs.iter().map(|&(_, m)| m).collect();
        if dirichlet {
            columns.push(0);
        }
        columns.sort_unstable();
        columns.dedup();
        let solved: Vec<Vec<T>> = columns.par_iter().map(|&m| self.column(m, lambda, window)).collect::<Result<_>>()?;
        let col = |m: i64| &solved[columns.binary_search(&m).expect("column was solved")];
        let at = |v: &[T], k: i64| v[window.position(k).expect("site within reach")];
        let mut entries = Vec::with_capacity(pairs.len());
        for &(n, m) in pairs {
            let mut value = at(col(m), n);
            if dirichlet {
                let c0 = col(0);
                let g00 = at(c0, 0);
                check_pivot(g00, tol)?;
                value -= at(c0, n) * at(col(m), 0) / g00;
            }
            entries.push(GreenEntry { n, m, value });
        }
        Ok(GreenEvaluation { lambda, dirichlet, method, size: window.len(), entries })
    }

    /// `G^D(n,n;λ)` for `n ∈ [-reach, reach]` with pivot site `pivot`, plus `G(pivot,pivot)`.
    pub fn dirichlet_diagonal(&self, pivot: i64, lambda: T, reach: u64, tol: T) -> Result<(Vec<T>, T)> {
        self.check_energy(lambda, tol)?;
        let window = self.window(lambda, reach.max(pivot.unsigned_abs()), None, tol)?;
        let t = self.section(window);
        let diag = t.inverse_diagonal(lambda)?;
        let cp = self.column(pivot, lambda, window)?;
        let gpp = cp[window.position(pivot).expect("pivot within reach")];
        check_pivot(gpp, tol)?;
        let r = reach as i64;
        let out = (-r..=r)
            .map(|n| {
                let i = window.position(n).expect("site within reach");
                diag[i] - cp[i] * cp[i] / gpp
            })
            .collect();
        Ok((out, gpp))
    }

    /// The zero of `G(0,0;λ)` inside a bounded gap, i.e. the eigenvalue of the
    /// site-0-decoupled background there, if any.
    pub fn dirichlet_gap_eigenvalue(&self, gap: &GapComponent<T>, tol: T) -> Result<Option<T>> {
        if !gap.is_interior() {
            return Ok(None);
        }
        let width = gap.hi - gap.lo;
        let inset = width * T::lit(1e-6);
        let g = |l: T| self.green_function(0, 0, l, None, tol);
        let (mut lo, mut hi) = (gap.lo + inset, gap.hi - inset);
        let (glo, ghi) = (g(lo)?, g(hi)?);
        // G(0,0;·) increases across a gap, so a sign change brackets its unique zero.
        if !(glo < T::zero() && ghi > T::zero()) {
            return Ok(None);
        }
        while hi - lo > tol * width {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid)? < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some((lo + hi) / T::lit(2.0)))
    }
}

fn check_pivot<T: Scalar>(g: T, tol: T) -> Result<()> {
    if g.abs() <= tol {
        return Err(Error::Resonance { value: g.abs().to_f64_lossy(), tol: tol.to_f64_lossy() });
    }
    Ok(())
}

/// Which end of a gap component the scan approaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    /// The left end `λ₀ = lo`, approached from above.
    Lower,
    /// The right end `λ₀ = hi`, approached from below.
    Upper,
}

impl FromStr for Edge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Edge::Lower),
            "upper" => Ok(Edge::Upper),
            _ => Err(Error::InvalidInput(format!("unknown edge `{s}` (expected lower or upper)"))),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Edge::Lower => "lower",
            Edge::Upper => "upper",
        })
    }
}

impl<T: Scalar> GapComponent<T> {
    /// The band edge at `edge`, or `None` for an unbounded end.
    pub fn edge(&self, edge: Edge) -> Option<T> {
        let v = match edge {
            Edge::Lower => self.lo,
            Edge::Upper => self.hi,
        };
        v.is_finite().then_some(v)
    }

    /// `λ₀ ± t`, moving into the component from `edge`.
    pub fn inward(&self, edge: Edge, t: T) -> Option<T> {
        self.edge(edge).map(|l| match edge {
            Edge::Lower => l + t,
            Edge::Upper => l - t,
        })
    }

    /// `min(0.1, width/4)`.
    pub fn default_epsilon(&self) -> T {
        let w = self.hi - self.lo;
        let cap = T::lit(0.1);
        if w.is_finite() {
            cap.min(w / T::lit(4.0))
        } else {
            cap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions<T> {
    pub edge: Edge,
    pub points: usize,
    /// Outer end of the grid, `t = |λ - λ₀| <= epsilon`.
    pub epsilon: Option<T>,
    /// Number of decades the grid spans below `epsilon`.
    pub decades: T,
    /// Sites `|n| <= n_range` enter the maxima; auto-sized to four decay lengths at the innermost point when `None`.
    pub n_range: Option<u64>,
    pub tol: T,
}

impl<T: Scalar> Default for ScanOptions<T> {
    fn default() -> Self {
        Self { edge: Edge::Lower, points: 50, epsilon: None, decades: T::lit(5.0), n_range: None, tol: T::lit(1e-12) }
    }
}

/// Per-energy samples of the three bound ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint<T> {
    pub t: T,
    pub lambda: T,
    pub distance: T,
    /// `max_{n,m} |G(n,m;λ)| · dist(λ,E)^{1/2}`.
    pub uniform: T,
    /// `max_{n≠0} |G^D(n,n;λ)| / (|n|+1)`.
    pub linear: T,
    /// `max_{n≠0} |G^D(n,n;λ)| · |λ-λ₀|^{1/2}`.
    pub edge: T,
    pub g00: T,
    pub size: usize,
}

/// Largest sample and the log-log slope of the samples against `|λ-λ₀|`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundConstant<T> {
    pub name: String,
    pub max: T,
    pub slope: T,
    /// `|slope| < 0.1`.
    pub bounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport<T> {
    pub gap: (T, T),
    pub edge: Edge,
    pub edge_lambda: T,
    pub n_range: u64,
    pub dirichlet_eigenvalue: Option<T>,
    pub points: Vec<ScanPoint<T>>,
    pub constants: Vec<BoundConstant<T>>,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = T::from_count(x.len());
    let lx: Vec<T> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<T> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (a, b) in lx.iter().zip(&ly) {
        sxy += (*a - mx) * (*b - my);
        sxx += (*a - mx) * (*a - mx);
    }
    if sxx == T::zero() {
        T::zero()
    } else {
        sxy / sxx
    }
}

/// Samples the uniform, linear-in-`n` and edge bounds on a log grid
/// approaching one edge of `gap` and fits their growth.
pub fn scan_green_bounds<T: Scalar>(
    solver: &GreenSolver<T>,
    gap: &GapComponent<T>,
    opts: &ScanOptions<T>,
) -> Result<ScanReport<T>> {
    let edge_lambda = gap
        .edge(opts.edge)
        .ok_or_else(|| Error::InvalidInput(format!("the {} end of this component is unbounded", opts.edge)))?;
    if opts.points < 2 {
        return Err(Error::InvalidInput("the scan needs at least two grid points".into()));
    }
    if !(opts.decades > T::zero()) || !(opts.tol > T::zero()) {
        return Err(Error::InvalidInput("decades and tol must be positive".into()));
    }
    let eps = opts.epsilon.unwrap_or_else(|| gap.default_epsilon());
    let width = gap.hi - gap.lo;
    if !(eps > T::zero()) || !(eps < width) {
        return Err(Error::InvalidInput(format!("epsilon {eps} must lie in (0, {width})")));
    }
    let t_min = eps * T::lit(10.0).powf(-opts.decades);
    let inner = gap.inward(opts.edge, t_min).expect("bounded edge");
    let n_range = match opts.n_range {
        Some(r) => r,
        None => {
            let rho = floquet_decay_rate(solver.background(), inner);
            let len = (-T::one() / rho.ln()).to_f64_lossy();
            (4.0 * len).ceil().clamp(4.0, 1e6) as u64
        }
    };
    let p = solver.background().period() as i64;
    let step = opts.decades / T::from_count(opts.points - 1);
    let grid: Vec<T> = (0..opts.points).map(|k| t_min * T::lit(10.0).powf(step * T::from_count(k))).collect();
    let points = grid
        .par_iter()
        .map(|&t| {
            let lambda = gap.inward(opts.edge, t).expect("bounded edge");
            solver.check_energy(lambda, T::zero())?;
            let window = solver.window(lambda, n_range + p as u64, None, opts.tol)?;
            let section = solver.section(window);
            let diag = section.inverse_diagonal(lambda)?;
            let lu = section.shifted_lu(lambda)?;
            let distance = solver.bands().distance(lambda);
            let r = n_range as i64;
            let mut uniform = T::zero();
            let mut col0 = Vec::new();
            // translation by one period maps pairs onto pairs, so columns m ∈ [0, p) cover every (n, m)
            for m in 0..p {
                let mut rhs = vec![T::zero(); window.len()];
                rhs[window.position(m).expect("within reach")] = T::one();
                let col = lu.solve(&rhs);
                for n in -r..=r {
                    uniform = uniform.max(col[window.position(n).expect("within reach")].abs());
                }
                if m == 0 {
                    col0 = col;
                }
            }
            uniform *= distance.sqrt();
            let i0 = window.position(0).expect("within reach");
            let g00 = col0[i0];
            check_pivot(g00, opts.tol)?;
            let mut linear = T::zero();
            let mut near_edge = T::zero();
            for n in (-r..=r).filter(|&n| n != 0) {
                let i = window.position(n).expect("within reach");
                let gd = (diag[i] - col0[i] * col0[i] / g00).abs();
                linear = linear.max(gd / T::from_site(n.abs() + 1));
                near_edge = near_edge.max(gd);
            }
            Ok(ScanPoint { t, lambda, distance, uniform, linear, edge: near_edge * t.sqrt(), g00, size: window.len() })
        })
        .collect::<Result<Vec<_>>>()?;
    let ts: Vec<T> = points.iter().map(|p| p.t).collect();
    let constant = |name: &str, f: fn(&ScanPoint<T>) -> T| {
        let ys: Vec<T> = points.iter().map(f).collect();
        let slope = log_log_slope(&ts, &ys);
        BoundConstant {
            name: name.to_string(),
            max: ys.iter().copied().fold(T::zero(), T::max),
            slope,
            bounded: slope.abs() < T::lit(0.1),
        }
    };
    let constants =
        vec![constant("uniform", |p| p.uniform), constant("linear", |p| p.linear), constant("edge", |p| p.edge)];
    let dirichlet_eigenvalue = solver.dirichlet_gap_eigenvalue(gap, T::lit(1e-10))?;
    Ok(ScanReport {
        gap: (gap.lo, gap.hi),
        edge: opts.edge,
        edge_lambda,
        n_range,
        dirichlet_eigenvalue,
        points,
        constants,
    })
}
