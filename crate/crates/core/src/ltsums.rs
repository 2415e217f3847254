//! Power sums `Σ dist(λ, E)^α` over the eigenvalues of a perturbed periodic
//! Jacobi matrix that lie off its essential spectrum `E`, the
//! integration-by-parts form of such sums, and window-convergence experiments.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::bands::{band_edge_solution, compute_bands, BandSet, GapComponent};
use crate::error::{Error, Result};
use crate::green::{Edge, GreenSolver};
use crate::inertia::eigs_tridiagonal;
use crate::operators::{JacobiOperator, Window};
use crate::quadrature::integrate;
use crate::scalar::Scalar;
use crate::splitting::split;

/// Sum starting from `+0` (float `Sum` starts from `-0`).
fn total<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::zero(), |a, b| a + b)
}

/// Eigenvalues of one component of `ℝ \ E`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport<T> {
    pub index: usize,
    pub lo: T,
    pub hi: T,
    pub eigenvalues: Vec<T>,
    pub distances: Vec<T>,
    /// One entry per requested exponent.
    pub power_sums: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport<T> {
    pub window: (i64, i64),
    pub bands: Vec<(T, T)>,
    pub alphas: Vec<T>,
    pub components: Vec<ComponentReport<T>>,
    /// Totals over all components, one per exponent.
    pub power_sums: Vec<T>,
}

/// Eigenvalues of the section of `j` on `window` in every gap and in both
/// unbounded components, with their power sums.
///
/// Eigenvalues within `10·tol` of a band edge are excluded. For finitely
/// supported perturbations the window must reach four support radii on both sides.
pub fn gap_power_sum<T: Scalar>(
    j: &JacobiOperator<T>,
    bands: &BandSet<T>,
    alphas: &[T],
    window: Window,
    tol: T,
) -> Result<GapReport<T>> {
    if alphas.iter().any(|&a| !(a > T::zero())) {
        return Err(Error::InvalidInput("power-sum exponents must be positive".into()));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    if let Some(r) = j.perturbation().finite_support_radius() {
        let reach = 4 * r as i64;
        if window.lo() > -reach || window.hi() < reach {
            return Err(Error::Size {
                message: format!(
                    "window [{}, {}] does not reach four support radii ({reach}) on both sides",
                    window.lo(),
                    window.hi()
                ),
                suggested: (2 * reach + 1) as usize,
            });
        }
    }
    let section = j.truncate(window)?;
    let t = section.tridiagonal();
    let (g_lo, g_hi) = t.gershgorin();
    let inset = T::lit(10.0) * tol;
    let mut components = Vec::new();
    for c in bands.components() {
        let lo = if c.lo.is_finite() { c.lo + inset } else { g_lo - T::one() };
        let hi = if c.hi.is_finite() { c.hi - inset } else { g_hi + T::one() };
        let eigenvalues = if lo < hi { eigs_tridiagonal(t, (lo, hi), tol)? } else { Vec::new() };
        let distances: Vec<T> = eigenvalues.iter().map(|&l| bands.distance(l)).collect();
        let power_sums = alphas.iter().map(|&a| total(distances.iter().map(|&d| d.powf(a)))).collect();
        components.push(ComponentReport { index: c.index, lo: c.lo, hi: c.hi, eigenvalues, distances, power_sums });
    }
    let power_sums = (0..alphas.len()).map(|k| total(components.iter().map(|c| c.power_sums[k]))).collect();
    Ok(GapReport {
        window: (window.lo(), window.hi()),
        bands: bands.bands().to_vec(),
        alphas: alphas.to_vec(),
        components,
        power_sums,
    })
}

/// A summand `f` with `f(λ₀) = 0` and `f' > 0` on `(λ₀, λ₀ + ε)`.
pub enum SumFunction<'a, T> {
    /// `f(λ) = (λ - λ₀)^α`.
    Power(T),
    Explicit {
        f: &'a (dyn Fn(T) -> T + Sync),
        df: &'a (dyn Fn(T) -> T + Sync),
    },
}

impl<T: Scalar> SumFunction<'_, T> {
    fn value(&self, lambda0: T, l: T) -> T {
        match self {
            SumFunction::Power(a) => (l - lambda0).powf(*a),
            SumFunction::Explicit { f, .. } => f(l),
        }
    }

    fn derivative(&self, lambda0: T, l: T) -> T {
        self.derivative_at(lambda0, l - lambda0)
    }

    /// `f'(λ₀ + d)`, with the offset `d` passed exactly.
    fn derivative_at(&self, lambda0: T, d: T) -> T {
        match self {
            SumFunction::Power(a) => *a * d.powf(*a - T::one()),
            SumFunction::Explicit { df, .. } => df(lambda0 + d),
        }
    }

    /// Exponent `m` of the substitution `λ = λ₀ + u^m` that smooths `f'` at `λ₀`.
    fn substitution(&self) -> i32 {
        match self {
            SumFunction::Power(a) => (T::lit(2.0) / *a).ceil().to_f64_lossy().clamp(1.0, 64.0) as i32,
            SumFunction::Explicit { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SumIdentity<T> {
    pub lambda0: T,
    pub epsilon: T,
    pub eigenvalues: Vec<T>,
    /// `Σ f(λ)` over eigenvalues in `(λ₀, λ₀ + ε)`.
    pub lhs: T,
    /// `∫ f'(λ) #(J ∈ (λ, λ₀+ε)) dλ` collapsed onto the eigenvalue breakpoints.
    pub rhs_exact: T,
    /// The same integral by adaptive quadrature, with the count taken from inertia.
    pub rhs_quadrature: T,
    pub quadrature_error: T,
    pub exact_discrepancy: T,
    pub quadrature_discrepancy: T,
}

/// Evaluates both sides of `Σ f(λ) = ∫ f'(λ) #(J ∈ (λ, λ₀+ε)) dλ` on the
/// section of `j` on `window`.
pub fn check_sum_identity<T: Scalar>(
    j: &JacobiOperator<T>,
    lambda0: T,
    epsilon: T,
    f: &SumFunction<'_, T>,
    window: Window,
    tol: T,
) -> Result<SumIdentity<T>> {
    if !(epsilon > T::zero()) || !(tol > T::zero()) {
        return Err(Error::InvalidInput("epsilon and tol must be positive".into()));
    }
    let top = lambda0 + epsilon;
    match f {
        SumFunction::Power(a) if !(*a > T::zero()) => {
            return Err(Error::InvalidInput("power exponent must be positive".into()));
        }
        SumFunction::Explicit { .. } => {
            let f0 = f.value(lambda0, lambda0);
            let scale = f.value(lambda0, top).abs().max(T::one());
            if f0.abs() > T::lit(1e-12) * scale {
                return Err(Error::InvalidInput(format!("f(λ₀) = {f0} is not zero")));
            }
            for k in 1..64 {
                let l = lambda0 + epsilon * T::from_count(k) / T::lit(64.0);
                if !(f.derivative(lambda0, l) > T::zero()) {
                    return Err(Error::InvalidInput(format!("f' is not positive at λ = {l}")));
                }
            }
        }
        _ => {}
    }
    let section = j.truncate(window)?;
    let t = section.tridiagonal();
    let eigenvalues = eigs_tridiagonal(t, (lambda0, top), tol)?;
    let lhs = total(eigenvalues.iter().map(|&l| f.value(lambda0, l)));
    let k = eigenvalues.len();
    let mut rhs_exact = T::zero();
    let mut prev = f.value(lambda0, lambda0);
    for (i, &l) in eigenvalues.iter().enumerate() {
        let fl = f.value(lambda0, l);
        rhs_exact += T::from_count(k - i) * (fl - prev);
        prev = fl;
    }
    // piecewise quadrature between breakpoints; the count is re-derived from inertia inside each panel
    let m = f.substitution();
    let inv_m = T::one() / T::from_count(m as usize);
    let top_below = t.count_below(top);
    let count = |l: T| top_below.saturating_sub(t.count_below(l));
    let mut rhs_quadrature = T::zero();
    let mut quadrature_error = T::zero();
    let mut left = lambda0;
    for &right in &eigenvalues {
        let ua = (left - lambda0).max(T::zero()).powf(inv_m);
        let ub = (right - lambda0).powf(inv_m);
        let integrand = |u: T| {
            let d = u.powi(m);
            let jac = T::from_count(m as usize) * u.powi(m - 1);
            f.derivative_at(lambda0, d) * jac * T::from_count(count(lambda0 + d))
        };
        let q = integrate(integrand, ua, ub, T::lit(1e-13) * (T::one() + lhs.abs()), T::lit(1e-13), 4000)?;
        rhs_quadrature += q.value;
        quadrature_error += q.error;
        left = right;
    }
    Ok(SumIdentity {
        lambda0,
        epsilon,
        exact_discrepancy: (lhs - rhs_exact).abs(),
        quadrature_discrepancy: (lhs - rhs_quadrature).abs(),
        eigenvalues,
        lhs,
        rhs_exact,
        rhs_quadrature,
        quadrature_error,
    })
}

/// Hypothesis class of a convergence experiment.
///
/// The command-line names are `thm13`, `thm14` and `conjecture`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum ExperimentClass {
    /// Summable perturbation, `α > 1/2`.
    #[serde(rename = "thm13")]
    TraceClass,
    /// Log-weighted summable perturbation, `α >= 1/2`.
    #[serde(rename = "thm14")]
    LogWeighted,
    /// Summable perturbation at the critical exponent `α = 1/2`.
    #[serde(rename = "conjecture")]
    Critical,
}

impl FromStr for ExperimentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm13" => Ok(ExperimentClass::TraceClass),
            "thm14" => Ok(ExperimentClass::LogWeighted),
            "conjecture" => Ok(ExperimentClass::Critical),
            _ => Err(Error::InvalidInput(format!("unknown variant `{s}` (expected thm13, thm14 or conjecture)"))),
        }
    }
}

impl fmt::Display for ExperimentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentClass::TraceClass => "thm13",
            ExperimentClass::LogWeighted => "thm14",
            ExperimentClass::Critical => "conjecture",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Fewer than three windows so far.
    Pending,
    Stabilized,
    NotStabilized,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pending => "pending",
            Verdict::Stabilized => "stabilized",
            Verdict::NotStabilized => "not-stabilized",
        })
    }
}

/// Three-point tail rule: the last two successive differences are below
/// `tol` and the last is no larger than the one before.
pub fn stabilization_verdict<T: Scalar>(values: &[T], tol: T) -> Verdict {
    let n = values.len();
    if n < 3 {
        return Verdict::Pending;
    }
    let d1 = (values[n - 2] - values[n - 3]).abs();
    let d2 = (values[n - 1] - values[n - 2]).abs();
    if d1 < tol && d2 < tol && d2 <= d1 {
        Verdict::Stabilized
    } else {
        Verdict::NotStabilized
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow<T> {
    /// Sites in the section.
    pub n: u64,
    /// Component index, or `None` for the total over all components.
    pub gap_index: Option<usize>,
    pub count: usize,
    pub power_sum: T,
    pub delta_prev: Option<T>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceOptions<T> {
    pub class: ExperimentClass,
    pub alpha: T,
    /// Section sizes (sites, centred on 0), increasing.
    pub schedule: Vec<u64>,
    pub tol: T,
    /// Difference level for the stabilization verdict.
    pub stab_tol: T,
    /// Log-weight margin for the log-weighted class.
    pub log_eps: T,
    /// Also evaluate the Green's-function majorant (summable class only).
    pub majorant: bool,
    pub epsilon: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorantLevel<T> {
    pub delta: T,
    /// Integral over `δ <= |λ - λ₀| <= ε`.
    pub integral: T,
    /// Contribution of the decade `[δ, 10δ]`.
    pub increment: T,
}

/// `∫ f'(λ) |Σ_n (δJ₊)_n G^D(n,n;λ)| dλ` near one band edge, cut off at `δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorantReport<T> {
    pub gap_index: usize,
    pub edge: Edge,
    pub edge_lambda: T,
    /// Site decoupled in the Dirichlet Green's function (a nonresonance of the edge solution).
    pub pivot: i64,
    pub epsilon: T,
    pub trace_plus: T,
    pub levels: Vec<MajorantLevel<T>>,
    /// Decade contributions shrink monotonically over the last three levels.
    pub finite_looking: bool,
    /// `max |Σ_n (δJ₊)_n G^D(n,n;λ)| · |λ-λ₀|^{1/2} / Tr δJ₊` over the sampled energies.
    pub fitted_c: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable<T> {
    pub class: ExperimentClass,
    pub alpha: T,
    pub rows: Vec<ConvergenceRow<T>>,
    /// Total power sum per window.
    pub totals: Vec<(u64, T)>,
    /// `|Δ_{k-1}| / |Δ_k|` for successive differences of the totals.
    pub shrink_factors: Vec<T>,
    pub verdict: Verdict,
    pub majorants: Vec<MajorantReport<T>>,
}

/// Power sums of one perturbed background over a schedule of windows.
pub fn convergence_experiment<T: Scalar>(
    j: &JacobiOperator<T>,
    opts: &ConvergenceOptions<T>,
) -> Result<ConvergenceTable<T>> {
    let half = T::lit(0.5);
    let pert = j.perturbation();
    match opts.class {
        ExperimentClass::TraceClass => {
            if !pert.is_trace_class() {
                return Err(Error::InvalidInput("the summable class needs a summable perturbation".into()));
            }
            if !(opts.alpha > half) {
                return Err(Error::InvalidInput("the summable class needs α > 1/2".into()));
            }
        }
        ExperimentClass::LogWeighted => {
            if !pert.satisfies_log_condition(opts.log_eps) {
                return Err(Error::InvalidInput(format!(
                    "the perturbation is not log-weighted summable with margin {}",
                    opts.log_eps
                )));
            }
            if opts.alpha < half {
                return Err(Error::InvalidInput("the log-weighted class needs α >= 1/2".into()));
            }
        }
        ExperimentClass::Critical => {
            if !pert.is_trace_class() {
                return Err(Error::InvalidInput("the critical class needs a summable perturbation".into()));
            }
            if opts.alpha != half {
                return Err(Error::InvalidInput("the critical class is defined at α = 1/2".into()));
            }
        }
    }
    if opts.schedule.is_empty() || opts.schedule[0] == 0 || opts.schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("the window schedule must be nonempty and increasing".into()));
    }
    let bands = compute_bands(j.background(), T::lit(1e2) * T::epsilon())?;
    let reports = opts
        .schedule
        .par_iter()
        .map(|&n| gap_power_sum(j, &bands, &[opts.alpha], Window::centered(n as usize)?, opts.tol))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let n_comp = bands.components().len();
    let mut series: Vec<Vec<T>> = vec![Vec::new(); n_comp + 1];
    for (k, r) in reports.iter().enumerate() {
        let n = opts.schedule[k];
        for (c, comp) in r.components.iter().enumerate() {
            series[c].push(comp.power_sums[0]);
            rows.push(row(n, Some(comp.index), comp.eigenvalues.len(), &series[c], opts.stab_tol));
        }
        let total = r.power_sums[0];
        series[n_comp].push(total);
        let count = r.components.iter().map(|c| c.eigenvalues.len()).sum();
        rows.push(row(n, None, count, &series[n_comp], opts.stab_tol));
    }
    let totals_v = &series[n_comp];
    let totals = opts.schedule.iter().copied().zip(totals_v.iter().copied()).collect();
    let diffs: Vec<T> = totals_v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let shrink_factors =
        diffs.windows(2).map(|w| if w[1] == T::zero() { T::infinity() } else { w[0] / w[1] }).collect();
    let verdict = stabilization_verdict(totals_v, opts.stab_tol);

    let mut majorants = Vec::new();
    if opts.majorant && opts.class == ExperimentClass::TraceClass {
        let reach = *opts.schedule.last().expect("nonempty schedule") / 2;
        let solver = GreenSolver::with_bands(j.background().clone(), bands.clone());
        for comp in bands.components() {
            for edge in [Edge::Lower, Edge::Upper] {
                if comp.edge(edge).is_some() {
                    majorants.push(majorant(j, &solver, &comp, edge, opts.alpha, opts.epsilon, reach)?);
                }
            }
        }
    }
    Ok(ConvergenceTable { class: opts.class, alpha: opts.alpha, rows, totals, shrink_factors, verdict, majorants })
}

fn row<T: Scalar>(n: u64, gap_index: Option<usize>, count: usize, series: &[T], tol: T) -> ConvergenceRow<T> {
    let k = series.len();
    ConvergenceRow {
        n,
        gap_index,
        count,
        power_sum: series[k - 1],
        delta_prev: (k >= 2).then(|| series[k - 1] - series[k - 2]),
        verdict: stabilization_verdict(series, tol),
    }
}

/// Green's-function majorant near one edge of a component, with `δJ₊` taken
/// on `[-reach, reach]`. The integral is accumulated decade by decade in
/// `ln|λ - λ₀|` from `ε` down to `ε·10⁻⁵`.
#[allow(clippy::too_many_arguments)]
pub fn majorant<T: Scalar>(
    j: &JacobiOperator<T>,
    solver: &GreenSolver<T>,
    comp: &GapComponent<T>,
    edge: Edge,
    alpha: T,
    epsilon: Option<T>,
    reach: u64,
) -> Result<MajorantReport<T>> {
    let edge_lambda = comp.edge(edge).ok_or_else(|| Error::InvalidInput("majorant at an unbounded end".into()))?;
    let eps = epsilon.unwrap_or_else(|| comp.default_epsilon());
    let sol = band_edge_solution(j.background(), edge_lambda, T::lit(1e-8))?;
    let p = j.background().period() as i64;
    let pivot = (0..p).find(|&n| !sol.is_resonant(n)).expect("consecutive sites are never both resonant");
    let plus = split(j.perturbation(), Window::symmetric(reach)).plus().to_vec();
    let trace_plus = total(plus.iter().copied());
    let green_tol = T::lit(1e-12);
    let mut samples: Vec<(T, T)> = Vec::new();
    let mut trace_at = |t: T| -> Result<T> {
        let l = comp.inward(edge, t).expect("bounded edge");
        let (gd, _) = solver.dirichlet_diagonal(pivot, l, reach, green_tol)?;
        let tr = plus.iter().zip(&gd).map(|(&w, &g)| w * g).sum::<T>().abs();
        samples.push((t, tr));
        Ok(tr)
    };
    let mut levels = Vec::new();
    let mut integral = T::zero();
    let mut upper = eps;
    let ten = T::lit(10.0);
    for _ in 0..5 {
        let lower = upper / ten;
        let mut failure = None;
        // in s = ln t: dλ = t ds and f'(λ) = α t^{α-1}
        let q = integrate(
            |s: T| {
                let t = s.exp();
                match trace_at(t) {
                    Ok(tr) => alpha * t.powf(alpha) * tr,
                    Err(e) => {
                        failure.get_or_insert(e);
                        T::zero()
                    }
                }
            },
            lower.ln(),
            upper.ln(),
            T::zero(),
            T::lit(1e-6),
            64,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        integral += q.value;
        levels.push(MajorantLevel { delta: lower, integral, increment: q.value });
        upper = lower;
    }
    let inc: Vec<T> = levels.iter().map(|l| l.increment).collect();
    let n = inc.len();
    let finite_looking = inc[n - 1] <= inc[n - 2] && inc[n - 2] <= inc[n - 3] && inc[n - 1] < inc[n - 3];
    let fitted_c = if trace_plus > T::zero() {
        samples.iter().map(|&(t, tr)| tr * t.sqrt() / trace_plus).fold(T::zero(), T::max)
    } else {
        T::zero()
    };
    Ok(MajorantReport {
        gap_index: comp.index,
        edge,
        edge_lambda,
        pivot,
        epsilon: eps,
        trace_plus,
        levels,
        finite_looking,
        fitted_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{PeriodicBackground, Perturbation};

    #[test]
    fn unperturbed_free_chain_has_no_gap_eigenvalues() {
        let j = JacobiOperator::unperturbed(PeriodicBackground::<f64>::free());
        let bands = compute_bands(j.background(), 1e-14).unwrap();
        let r = gap_power_sum(&j, &bands, &[0.5, 1.0], Window::symmetric(200), 1e-10).unwrap();
        assert!(r.components.iter().all(|c| c.eigenvalues.is_empty()));
        assert_eq!(r.power_sums, vec![0.0, 0.0]);
    }

    #[test]
    fn impurity_power_sum() {
        let j = JacobiOperator::new(PeriodicBackground::<f64>::free(), Perturbation::impurity(0, 1.5)).unwrap();
        let bands = compute_bands(j.background(), 1e-14).unwrap();
        let r = gap_power_sum(&j, &bands, &[0.5], Window::centered(2001).unwrap(), 1e-10).unwrap();
        assert!((r.power_sums[0] - 0.5f64.sqrt()).abs() < 1e-5);
        assert_eq!(r.components[1].eigenvalues.len(), 1);
    }

    #[test]
    fn linear_identity_is_exact() {
        let j = JacobiOperator::new(PeriodicBackground::<f64>::free(), Perturbation::impurity(0, 1.5)).unwrap();
        let s = check_sum_identity(&j, 2.0, 1.0, &SumFunction::Power(1.0), Window::symmetric(300), 1e-12).unwrap();
        assert_eq!(s.eigenvalues.len(), 1);
        assert!(s.exact_discrepancy <= 1e-12);
        assert!(s.quadrature_discrepancy <= 1e-10);
    }

    #[test]
    fn empty_interval_gives_zero() {
        let j = JacobiOperator::unperturbed(PeriodicBackground::<f64>::free());
        let s = check_sum_identity(&j, 2.0, 0.5, &SumFunction::Power(0.6), Window::symmetric(50), 1e-12).unwrap();
        assert_eq!((s.lhs, s.rhs_exact, s.rhs_quadrature), (0.0, 0.0, 0.0));
    }

    #[test]
    fn explicit_function_needs_increase() {
        let j = JacobiOperator::unperturbed(PeriodicBackground::<f64>::free());
        let f = |l: f64| -(l - 2.0);
        let df = |_: f64| -1.0;
        let r =
            check_sum_identity(&j, 2.0, 0.5, &SumFunction::Explicit { f: &f, df: &df }, Window::symmetric(50), 1e-12);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn verdict_rule() {
        assert_eq!(stabilization_verdict(&[1.0, 1.1], 1e-3), Verdict::Pending);
        assert_eq!(stabilization_verdict(&[1.0, 1.0001, 1.00015], 1e-3), Verdict::Stabilized);
        assert_eq!(stabilization_verdict(&[1.0, 1.0001, 1.0003], 1e-3), Verdict::NotStabilized);
        assert_eq!(stabilization_verdict(&[1.0, 1.0, 1.0], 1e-3), Verdict::Stabilized);
    }
}
