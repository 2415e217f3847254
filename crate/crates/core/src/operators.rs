//! Periodic Jacobi backgrounds, decaying perturbations and their finite sections.
//!
//! A two-sided Jacobi matrix acts on `ℓ²(ℤ)` by
//! `(Ju)_n = a_{n-1} u_{n-1} + b_n u_n + a_n u_{n+1}`. Here `J = J₀ + δJ` with
//! `J₀` periodic and `δJ` a decaying (usually trace-class) perturbation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, Tridiagonal};
use crate::scalar::Scalar;

/// Coefficients `(a, b)` of a period-`p` Jacobi matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicBackground<T> {
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> PeriodicBackground<T> {
    pub fn new(a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidOperator("period must be at least 1".into()));
        }
        if a.len() != b.len() {
            return Err(Error::InvalidOperator(format!("a has {} entries but b has {}", a.len(), b.len())));
        }
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::InvalidOperator("non-finite background coefficient".into()));
        }
        if let Some(k) = a.iter().position(|&x| x <= T::zero()) {
            return Err(Error::InvalidOperator(format!("a[{k}] must be positive")));
        }
        Ok(Self { a, b })
    }

    /// The free Jacobi matrix `a ≡ 1`, `b ≡ 0`.
    pub fn free() -> Self {
        Self { a: vec![T::one()], b: vec![T::zero()] }
    }

    #[inline]
    pub fn period(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[T] {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// Background index of lattice site `n`, always in `[0, p)`.
    #[inline]
    pub fn index(&self, n: i64) -> usize {
        n.rem_euclid(self.period() as i64) as usize
    }

    #[inline]
    pub fn a_at(&self, n: i64) -> T {
        self.a[self.index(n)]
    }

    #[inline]
    pub fn b_at(&self, n: i64) -> T {
        self.b[self.index(n)]
    }

    pub fn min_a(&self) -> T {
        self.a.iter().copied().fold(T::infinity(), T::min)
    }

    /// Dirichlet section of the unperturbed background.
    pub fn truncate(&self, window: Window) -> TruncatedMatrix<T> {
        let diag = window.sites().map(|n| self.b_at(n)).collect();
        let off = window.sites().take(window.len() - 1).map(|n| self.a_at(n)).collect();
        TruncatedMatrix::new(window, diag, off).expect("background coefficients are valid")
    }
}

/// Inclusive integer window `[lo, hi]` of lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    lo: i64,
    hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidInput(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[-half, half]`.
    pub fn symmetric(half: u64) -> Self {
        let h = half as i64;
        Self { lo: -h, hi: h }
    }

    /// A window of `count` sites centred on 0 (`[-(count/2), count - 1 - count/2]`).
    pub fn centered(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("window must contain at least one site".into()));
        }
        let lo = -((count / 2) as i64);
        Ok(Self { lo, hi: lo + count as i64 - 1 })
    }

    #[inline]
    pub fn lo(&self) -> i64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> i64 {
        self.hi
    }

    #[inline]
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        self.lo <= n && n <= self.hi
    }

    /// Row index of site `n`.
    pub fn position(&self, n: i64) -> Option<usize> {
        self.contains(n).then(|| (n - self.lo) as usize)
    }

    pub fn site(&self, i: usize) -> i64 {
        self.lo + i as i64
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl FromStr for Window {
    type Err = Error;

    /// Parses `lo..hi`, e.g. `-200..200`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) =
            s.split_once("..").ok_or_else(|| Error::InvalidInput(format!("window `{s}` is not of the form lo..hi")))?;
        let parse =
            |t: &str| t.trim().parse::<i64>().map_err(|e| Error::InvalidInput(format!("window bound `{t}`: {e}")));
        Window::new(parse(lo)?, parse(hi)?)
    }
}

/// Perturbation of the coefficients at one site.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SiteShift<T> {
    pub da: T,
    pub db: T,
}

/// Decay profile `s · σⁿ · (1+|n|)^{-power} · [log(2+|n|)]^{-log_power}`,
/// with `σ = -1` when alternating and `+1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile<T> {
    pub scale: T,
    pub power: T,
    pub log_power: T,
    pub alternating: bool,
}

impl<T: Scalar> Profile<T> {
    pub fn zero() -> Self {
        Self { scale: T::zero(), power: T::lit(2.0), log_power: T::zero(), alternating: false }
    }

    pub fn power_law(scale: T, power: T) -> Self {
        Self { scale, power, log_power: T::zero(), alternating: false }
    }

    pub fn log_weight(scale: T, power: T, log_power: T) -> Self {
        Self { scale, power, log_power, alternating: false }
    }

    pub fn alternating(mut self) -> Self {
        self.alternating = true;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.scale == T::zero()
    }

    /// Unsigned decay envelope at distance `m = |n|`.
    pub fn envelope(&self, m: u64) -> T {
        let m = T::from_u64(m).expect("site distance representable");
        let mut v = (T::one() + m).powf(-self.power);
        if self.log_power != T::zero() {
            v *= (T::lit(2.0) + m).ln().powf(-self.log_power);
        }
        v
    }

    pub fn value(&self, n: i64) -> T {
        if self.is_zero() {
            return T::zero();
        }
        let sign = if self.alternating && n.rem_euclid(2) == 1 { -T::one() } else { T::one() };
        self.scale * sign * self.envelope(n.unsigned_abs())
    }

    /// `Σ_n |value(n)| < ∞`.
    pub fn is_summable(&self) -> bool {
        self.is_zero() || self.power > T::one() || (self.power == T::one() && self.log_power > T::one())
    }

    /// `Σ_n [log(|n|+1)]^{1+ε} |value(n)| < ∞`.
    pub fn is_log_summable(&self, eps: T) -> bool {
        self.is_zero() || self.power > T::one() || (self.power == T::one() && self.log_power > T::lit(2.0) + eps)
    }

    /// Upper bound on `Σ_{|n|>r} |value(n)|` from the integral test.
    pub fn tail_bound(&self, r: u64) -> T {
        if self.is_zero() {
            return T::zero();
        }
        if !self.is_summable() {
            return T::infinity();
        }
        let two = T::lit(2.0);
        let r = T::from_u64(r).expect("radius representable");
        let mut best = T::infinity();
        if self.power > T::one() {
            let b = (T::one() + r).powf(T::one() - self.power) / (self.power - T::one())
                * (two + r).ln().powf(-self.log_power);
            best = best.min(b);
        }
        if self.log_power > T::one() {
            // (1+x)^{-p} <= (1+x)^{-1} <= (2+x)^{-1} (2+r)/(1+r) for x >= r, p >= 1
            let b = (two + r) / (T::one() + r) * (two + r).ln().powf(T::one() - self.log_power)
                / (self.log_power - T::one());
            best = best.min(b);
        }
        two * self.scale.abs() * best
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.scale.is_finite() && self.power.is_finite() && self.log_power.is_finite()) {
            return Err(Error::InvalidInput(format!("{what}: non-finite profile parameter")));
        }
        if self.power < T::zero() || self.log_power < T::zero() {
            return Err(Error::InvalidInput(format!("{what}: decay exponents must be nonnegative")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Explicit,
    PowerLaw,
    LogWeight,
}

/// How a perturbation is specified, before validation.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationSpec<T> {
    Explicit(BTreeMap<i64, SiteShift<T>>),
    PowerLaw { da: Profile<T>, db: Profile<T> },
    LogWeight { da: Profile<T>, db: Profile<T> },
}

/// A validated perturbation `δJ`: values are pure functions of the site.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T> {
    spec: PerturbationSpec<T>,
    trace_class: bool,
}

/// Partial sums of the perturbation over `|n| <= radius`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PerturbationNorms<T> {
    /// `Σ (|δa_n| + |δb_n|)`.
    pub tc_norm: T,
    /// `Σ [log(|n|+1)]^{1+ε} (|δa_n| + |δb_n|)`.
    pub log_weighted_norm: T,
}

/// Validates a generator spec. Non-summable generators are rejected unless
/// `allow_non_summable` is set.
pub fn make_perturbation<T: Scalar>(spec: PerturbationSpec<T>, allow_non_summable: bool) -> Result<Perturbation<T>> {
    let trace_class = match &spec {
        PerturbationSpec::Explicit(map) => {
            if map.values().any(|s| !(s.da.is_finite() && s.db.is_finite())) {
                return Err(Error::InvalidInput("non-finite explicit perturbation value".into()));
            }
            true
        }
        PerturbationSpec::PowerLaw { da, db } => {
            da.validate("power-law da")?;
            db.validate("power-law db")?;
            if da.log_power != T::zero() || db.log_power != T::zero() {
                return Err(Error::InvalidInput(
                    "power-law profiles take no log_power; use the log-weight kind".into(),
                ));
            }
            da.is_summable() && db.is_summable()
        }
        PerturbationSpec::LogWeight { da, db } => {
            da.validate("log-weight da")?;
            db.validate("log-weight db")?;
            da.is_summable() && db.is_summable()
        }
    };
    if !trace_class && !allow_non_summable {
        return Err(Error::NonSummable(
            "Σ(|δa_n|+|δb_n|) diverges; pass the non-summable override to use it anyway".into(),
        ));
    }
    Ok(Perturbation { spec, trace_class })
}

impl<T: Scalar> Perturbation<T> {
    pub fn zero() -> Self {
        Self { spec: PerturbationSpec::Explicit(BTreeMap::new()), trace_class: true }
    }

    pub fn explicit(map: BTreeMap<i64, SiteShift<T>>) -> Result<Self> {
        make_perturbation(PerturbationSpec::Explicit(map), false)
    }

    /// Single-site diagonal impurity `δb_site = strength`.
    pub fn impurity(site: i64, strength: T) -> Self {
        let mut map = BTreeMap::new();
        map.insert(site, SiteShift { da: T::zero(), db: strength });
        Self::explicit(map).expect("finite impurity")
    }

    pub fn spec(&self) -> &PerturbationSpec<T> {
        &self.spec
    }

    pub fn kind(&self) -> PerturbationKind {
        match self.spec {
            PerturbationSpec::Explicit(_) => PerturbationKind::Explicit,
            PerturbationSpec::PowerLaw { .. } => PerturbationKind::PowerLaw,
            PerturbationSpec::LogWeight { .. } => PerturbationKind::LogWeight,
        }
    }

    pub fn is_trace_class(&self) -> bool {
        self.trace_class
    }

    pub fn is_zero(&self) -> bool {
        match &self.spec {
            PerturbationSpec::Explicit(map) => map.values().all(|s| s.da == T::zero() && s.db == T::zero()),
            PerturbationSpec::PowerLaw { da, db } | PerturbationSpec::LogWeight { da, db } => {
                da.is_zero() && db.is_zero()
            }
        }
    }

    /// Whether `Σ [log(|n|+1)]^{1+ε}(|δa_n|+|δb_n|)` converges.
    pub fn satisfies_log_condition(&self, eps: T) -> bool {
        match &self.spec {
            PerturbationSpec::Explicit(_) => true,
            PerturbationSpec::PowerLaw { da, db } | PerturbationSpec::LogWeight { da, db } => {
                da.is_log_summable(eps) && db.is_log_summable(eps)
            }
        }
    }

    pub fn at(&self, n: i64) -> SiteShift<T> {
        match &self.spec {
            PerturbationSpec::Explicit(map) => map.get(&n).copied().unwrap_or_default(),
            PerturbationSpec::PowerLaw { da, db } | PerturbationSpec::LogWeight { da, db } => {
                SiteShift { da: da.value(n), db: db.value(n) }
            }
        }
    }

    /// Largest `|n|` carrying a nonzero value, for finitely supported perturbations.
    pub fn finite_support_radius(&self) -> Option<u64> {
        match &self.spec {
            PerturbationSpec::Explicit(map) => Some(
                map.iter()
                    .filter(|(_, s)| s.da != T::zero() || s.db != T::zero())
                    .map(|(n, _)| n.unsigned_abs())
                    .max()
                    .unwrap_or(0),
            ),
            _ if self.is_zero() => Some(0),
            _ => None,
        }
    }

    /// Effective support radius: the smallest `R` with `Σ_{|n|>R}(|δa_n|+|δb_n|) < τ`.
    ///
    /// Exact for explicit maps. For generators the tail is bounded by the
    /// integral test, so the returned `R` always satisfies the inequality and
    /// exceeds the exact minimum by at most the integral-test slack.
    /// `None` when the perturbation is not summable.
    pub fn support_radius(&self, tau: T) -> Option<u64> {
        assert!(tau > T::zero(), "tolerance must be positive");
        match &self.spec {
            PerturbationSpec::Explicit(map) => {
                let mut by_radius: BTreeMap<u64, T> = BTreeMap::new();
                for (n, s) in map {
                    *by_radius.entry(n.unsigned_abs()).or_insert(T::zero()) += s.da.abs() + s.db.abs();
                }
                let mut tail = T::zero();
                for (&r, &w) in by_radius.iter().rev() {
                    if tail + w >= tau {
                        return Some(r);
                    }
                    tail += w;
                }
                Some(0)
            }
            PerturbationSpec::PowerLaw { da, db } | PerturbationSpec::LogWeight { da, db } => {
                if !self.trace_class {
                    return None;
                }
                let bound = |r: u64| da.tail_bound(r) + db.tail_bound(r);
                if bound(0) < tau {
                    return Some(0);
                }
                let mut hi: u64 = 1;
                while bound(hi) >= tau {
                    if hi >= 1 << 62 {
                        return None;
                    }
                    hi *= 2;
                }
                let mut lo = hi / 2;
                // invariant: bound(lo) >= tau > bound(hi)
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if bound(mid) < tau {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi)
            }
        }
    }

    /// Partial sums over `|n| <= radius`, accumulated from the outside in.
    pub fn norms(&self, radius: u64, eps: T) -> PerturbationNorms<T> {
        let weight_exp = T::one() + eps;
        let mut tc = T::zero();
        let mut lw = T::zero();
        let mut add = |n: i64, s: SiteShift<T>| {
            let m = s.da.abs() + s.db.abs();
            if m == T::zero() {
                return;
            }
            tc += m;
            let l = (T::from_u64(n.unsigned_abs()).expect("site") + T::one()).ln();
            if l > T::zero() {
                lw += l.powf(weight_exp) * m;
            }
        };
        match &self.spec {
            PerturbationSpec::Explicit(map) => {
                let mut sites: Vec<(&i64, &SiteShift<T>)> =
                    map.iter().filter(|(n, _)| n.unsigned_abs() <= radius).collect();
                sites.sort_by_key(|(n, _)| std::cmp::Reverse(n.unsigned_abs()));
                for (&n, &s) in sites {
                    add(n, s);
                }
            }
            _ => {
                let r = radius as i64;
                for m in (1..=r).rev() {
                    add(m, self.at(m));
                    add(-m, self.at(-m));
                }
                add(0, self.at(0));
            }
        }
        PerturbationNorms { tc_norm: tc, log_weighted_norm: lw }
    }

    /// Sites `n` with `|n| <= bound` beyond which `|δa_n| < floor` is guaranteed.
    fn da_certification_radius(&self, floor: T) -> Option<u64> {
        match &self.spec {
            PerturbationSpec::Explicit(map) => Some(map.keys().map(|n| n.unsigned_abs()).max().unwrap_or(0)),
            PerturbationSpec::PowerLaw { da, .. } | PerturbationSpec::LogWeight { da, .. } => {
                if da.is_zero() {
                    return Some(0);
                }
                // the envelope is nonincreasing in |n| for nonnegative exponents
                let limit: u64 = 10_000_000;
                let mut m = 0;
                while da.scale.abs() * da.envelope(m) >= floor {
                    if m >= limit {
                        return None;
                    }
                    m = if m < 1024 { m + 1 } else { m + m / 8 };
                }
                Some(m)
            }
        }
    }
}

/// `J = J₀ + δJ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiOperator<T> {
    background: PeriodicBackground<T>,
    perturbation: Perturbation<T>,
}

impl<T: Scalar> JacobiOperator<T> {
    /// Checks `a[n mod p] + δa_n > 0` on every site.
    pub fn new(background: PeriodicBackground<T>, perturbation: Perturbation<T>) -> Result<Self> {
        let floor = background.min_a();
        let radius = perturbation.da_certification_radius(floor).ok_or_else(|| {
            Error::InvalidOperator("cannot certify positive off-diagonals: δa does not decay below min(a)".into())
        })?;
        let r = radius as i64;
        for n in -r..=r {
            let v = background.a_at(n) + perturbation.at(n).da;
            if !(v > T::zero()) {
                return Err(Error::InvalidOperator(format!(
                    "perturbed off-diagonal a_{n} + δa_{n} = {v} is not positive"
                )));
            }
        }
        Ok(Self { background, perturbation })
    }

    pub fn unperturbed(background: PeriodicBackground<T>) -> Self {
        Self { background, perturbation: Perturbation::zero() }
    }

    pub fn background(&self) -> &PeriodicBackground<T> {
        &self.background
    }

    pub fn perturbation(&self) -> &Perturbation<T> {
        &self.perturbation
    }

    /// Dirichlet section on `window`: couplings leaving the window are dropped.
    pub fn truncate(&self, window: Window) -> Result<TruncatedMatrix<T>> {
        let diag = window.sites().map(|n| self.background.b_at(n) + self.perturbation.at(n).db).collect();
        let off = window
            .sites()
            .take(window.len() - 1)
            .map(|n| self.background.a_at(n) + self.perturbation.at(n).da)
            .collect();
        TruncatedMatrix::new(window, diag, off)
    }
}

/// Finite Dirichlet section of a Jacobi matrix on a window of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMatrix<T> {
    window: Window,
    tri: Tridiagonal<T>,
}

impl<T: Scalar> TruncatedMatrix<T> {
    pub fn new(window: Window, diag: Vec<T>, off: Vec<T>) -> Result<Self> {
        if diag.len() != window.len() {
            return Err(Error::InvalidInput(format!(
                "window {window} has {} sites but {} diagonal entries were given",
                window.len(),
                diag.len()
            )));
        }
        if let Some(i) = off.iter().position(|&x| !(x > T::zero())) {
            return Err(Error::InvalidOperator(format!(
                "off-diagonal between sites {} and {} is not positive",
                window.site(i),
                window.site(i + 1)
            )));
        }
        let tri = Tridiagonal::new(diag, off).map_err(|e| Error::InvalidOperator(e.to_string()))?;
        Ok(Self { window, tri })
    }

    /// Convenience constructor on the window `[0, n)`.
    pub fn from_entries(diag: Vec<T>, off: Vec<T>) -> Result<Self> {
        let window = Window::new(0, diag.len() as i64 - 1)?;
        Self::new(window, diag, off)
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.tri.dim()
    }

    pub fn diag(&self) -> &[T] {
        self.tri.diag()
    }

    pub fn offdiag(&self) -> &[T] {
        self.tri.off()
    }

    pub fn tridiagonal(&self) -> &Tridiagonal<T> {
        &self.tri
    }

    pub fn to_sym(&self) -> SymMatrix<T> {
        SymMatrix::Tridiagonal(self.tri.clone())
    }
}
