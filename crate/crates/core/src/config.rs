//! TOML experiment configuration: background, perturbation, output, and one
//! table of parameters per subcommand.
//!
//! Every table except `[background]` is optional; missing keys take the
//! defaults below. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::birman_schwinger::BoundVariant;
use crate::error::{Error, Result};
use crate::green::{Edge, GreenMethod};
use crate::ltsums::ExperimentClass;
use crate::operators::{
    make_perturbation, JacobiOperator, PeriodicBackground, Perturbation, PerturbationSpec, Profile, SiteShift, Window,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundConfig>,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub bands: BandsConfig,
    #[serde(default)]
    pub count: CountConfig,
    #[serde(default)]
    pub bs: BsConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub green: GreenConfig,
    #[serde(default)]
    pub green_scan: GreenScanConfig,
    #[serde(default)]
    pub ltsum: LtsumConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    pub period: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKindConfig {
    #[default]
    None,
    Explicit,
    PowerLaw,
    LogWeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub n: i64,
    #[serde(default)]
    pub da: f64,
    #[serde(default)]
    pub db: f64,
}

/// `scale · σⁿ · (1+|n|)^{-power} · [log(2+|n|)]^{-log_power}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub scale: f64,
    #[serde(default = "two")]
    pub power: f64,
    #[serde(default)]
    pub log_power: f64,
    #[serde(default)]
    pub alternating: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub kind: PerturbationKindConfig,
    #[serde(default)]
    pub allow_non_summable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sites: Vec<SiteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub da: Option<ProfileConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db: Option<ProfileConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("output.format: unknown format `{s}` (expected csv or json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

fn two() -> f64 {
    2.0
}

fn default_window() -> String {
    "-1000..1000".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandsConfig {
    pub tol: f64,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self { tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountConfig {
    pub window: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    /// Absolute tolerance; `1e-10 · ‖T‖` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub eigenvalues: bool,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self { window: default_window(), interval: None, tol: None, eigenvalues: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsConfig {
    pub window: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Minimum distance of the energy from the spectrum of the unperturbed section.
    pub tol: f64,
}

impl Default for BsConfig {
    fn default() -> Self {
        Self { window: default_window(), energy: None, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub window: String,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { window: "-200..200".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub pairs: Vec<[i64; 2]>,
    /// Section size; chosen from the decay rate when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    pub tol: f64,
    pub dirichlet: bool,
    pub method: String,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            pairs: vec![[0, 0]],
            size: None,
            tol: 1e-12,
            dirichlet: false,
            method: "truncated-solve".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenScanConfig {
    /// Component of `ℝ \ E`; the first interior gap when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_index: Option<usize>,
    pub edge: Edge,
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub decades: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<u64>,
    pub tol: f64,
}

impl Default for GreenScanConfig {
    fn default() -> Self {
        Self {
            gap_index: None,
            edge: Edge::Lower,
            grid_points: 50,
            epsilon: None,
            decades: 5.0,
            n_range: None,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LtsumConfig {
    pub variant: ExperimentClass,
    pub alpha: f64,
    pub schedule: Vec<u64>,
    pub tol: f64,
    /// Difference level for the stabilization verdict.
    pub stab_tol: f64,
    /// Margin in the log-weighted summability condition.
    pub log_eps: f64,
    pub majorant: bool,
    /// Width of the energy interval next to each edge. When absent the majorant
    /// uses `min(0.1, width/4)` and the identity uses `width/4`, or the whole
    /// section spectrum above an exterior edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Also check the integration-by-parts identity next to every finite lower edge.
    pub identity: bool,
}

impl Default for LtsumConfig {
    fn default() -> Self {
        Self {
            variant: ExperimentClass::TraceClass,
            alpha: 0.6,
            schedule: vec![100, 200, 400, 800],
            tol: 1e-10,
            stab_tol: 1e-3,
            log_eps: 0.25,
            majorant: true,
            epsilon: None,
            identity: true,
        }
    }
}

/// Which statement the verify command checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyVariant {
    #[serde(rename = "t11")]
    Bounded,
    #[serde(rename = "t31")]
    LowerSemibounded,
    #[serde(rename = "t32")]
    UpperSemibounded,
    /// The gap Birman–Schwinger correspondence.
    #[serde(rename = "prop21")]
    Principle,
}

impl VerifyVariant {
    pub fn bound(self) -> Option<BoundVariant> {
        match self {
            VerifyVariant::Bounded => Some(BoundVariant::Bounded),
            VerifyVariant::LowerSemibounded => Some(BoundVariant::LowerSemibounded),
            VerifyVariant::UpperSemibounded => Some(BoundVariant::UpperSemibounded),
            VerifyVariant::Principle => None,
        }
    }
}

impl FromStr for VerifyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prop21" => Ok(VerifyVariant::Principle),
            _ => match s.parse::<BoundVariant>() {
                Ok(BoundVariant::Bounded) => Ok(VerifyVariant::Bounded),
                Ok(BoundVariant::LowerSemibounded) => Ok(VerifyVariant::LowerSemibounded),
                Ok(BoundVariant::UpperSemibounded) => Ok(VerifyVariant::UpperSemibounded),
                Err(_) => Err(Error::InvalidInput(format!("unknown variant `{s}` (expected t11, t31, t32 or prop21)"))),
            },
        }
    }
}

impl fmt::Display for VerifyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bound() {
            Some(b) => b.fmt(f),
            None => f.write_str("prop21"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifySource {
    /// Seeded dense instances with an engineered gap.
    Random,
    /// The configured operator: `A` the unperturbed section, `B±` the split perturbation.
    Operator,
}

impl FromStr for VerifySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(VerifySource::Random),
            "operator" => Ok(VerifySource::Operator),
            _ => Err(Error::InvalidInput(format!("unknown source `{s}` (expected random or operator)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub variant: VerifyVariant,
    pub source: VerifySource,
    /// Inclusive seed range `lo..hi`.
    pub seeds: String,
    pub dim_range: [usize; 2],
    pub tol: f64,
    /// Proximity guard for `e₀`; `1e-6 · (y - x)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<f64>,
    /// Fixes `e₀` at this fraction of the admissible half-gap, measured from
    /// the outer gap edge; drawn per seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0_position: Option<f64>,
    pub mu_points: usize,
    /// Section for the operator source.
    pub window: String,
    /// Gap component for the operator source; the first interior gap when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_index: Option<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            variant: VerifyVariant::Bounded,
            source: VerifySource::Random,
            seeds: "0..199".into(),
            dim_range: [10, 200],
            tol: 1e-8,
            guard: None,
            e0_position: None,
            mu_points: 20,
            window: "-200..200".into(),
            gap_index: None,
        }
    }
}

/// Inclusive range `lo..hi` of seeds.
pub fn parse_seeds(s: &str) -> Result<(u64, u64)> {
    let bad = || Error::Config(format!("verify.seeds: `{s}` is not of the form lo..hi"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(Error::Config(format!("verify.seeds: empty range {s}")));
    }
    Ok((lo, hi))
}

pub fn parse_window(key: &str, s: &str) -> Result<Window> {
    s.parse::<Window>().map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be positive and finite (got {v})")))
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be finite (got {v})")))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string() + &span_hint(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// The resolved configuration as TOML, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks every key that does not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        if let Some(bg) = &self.background {
            bg.build()?;
        }
        self.perturbation()?;
        positive("bands.tol", self.bands.tol)?;
        parse_window("count.window", &self.count.window)?;
        if let Some(t) = self.count.tol {
            positive("count.tol", t)?;
        }
        if let Some([lo, hi]) = self.count.interval {
            finite("count.interval", lo)?;
            finite("count.interval", hi)?;
            if !(lo < hi) {
                return Err(Error::Config(format!("count.interval: empty interval ({lo}, {hi})")));
            }
        }
        parse_window("bs.window", &self.bs.window)?;
        positive("bs.tol", self.bs.tol)?;
        if let Some(e) = self.bs.energy {
            finite("bs.energy", e)?;
        }
        parse_window("split.window", &self.split.window)?;
        positive("green.tol", self.green.tol)?;
        if let Some(l) = self.green.lambda {
            finite("green.lambda", l)?;
        }
        if self.green.pairs.is_empty() {
            return Err(Error::Config("green.pairs must not be empty".into()));
        }
        if self.green.size == Some(0) {
            return Err(Error::Config("green.size must be positive".into()));
        }
        self.green.method.parse::<GreenMethod>().map_err(|e| Error::Config(format!("green.method: {e}")))?;
        positive("green_scan.tol", self.green_scan.tol)?;
        positive("green_scan.decades", self.green_scan.decades)?;
        if let Some(e) = self.green_scan.epsilon {
            positive("green_scan.epsilon", e)?;
        }
        if self.green_scan.grid_points < 2 {
            return Err(Error::Config("green_scan.grid_points must be at least 2".into()));
        }
        positive("ltsum.alpha", self.ltsum.alpha)?;
        positive("ltsum.tol", self.ltsum.tol)?;
        positive("ltsum.stab_tol", self.ltsum.stab_tol)?;
        positive("ltsum.log_eps", self.ltsum.log_eps)?;
        if let Some(e) = self.ltsum.epsilon {
            positive("ltsum.epsilon", e)?;
        }
        let s = &self.ltsum.schedule;
        if s.is_empty() || s.contains(&0) || s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "ltsum.schedule must be a nonempty increasing list of positive section sizes".into(),
            ));
        }
        parse_seeds(&self.verify.seeds)?;
        let [dlo, dhi] = self.verify.dim_range;
        if dlo < 2 || dlo > dhi {
            return Err(Error::Config(format!("verify.dim_range: need 2 <= lo <= hi (got {dlo}, {dhi})")));
        }
        positive("verify.tol", self.verify.tol)?;
        if let Some(g) = self.verify.guard {
            positive("verify.guard", g)?;
        }
        if let Some(p) = self.verify.e0_position {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("verify.e0_position must lie in [0, 1) (got {p})")));
            }
        }
        if self.verify.mu_points == 0 {
            return Err(Error::Config("verify.mu_points must be positive".into()));
        }
        parse_window("verify.window", &self.verify.window)?;
        Ok(())
    }

    pub fn background(&self) -> Result<PeriodicBackground<f64>> {
        self.background
            .as_ref()
            .ok_or_else(|| Error::Config("missing [background] table (keys period, a, b)".into()))?
            .build()
    }

    pub fn perturbation(&self) -> Result<Perturbation<f64>> {
        self.perturbation.build()
    }

    pub fn operator(&self) -> Result<JacobiOperator<f64>> {
        JacobiOperator::new(self.background()?, self.perturbation()?)
            .map_err(|e| Error::Config(format!("perturbation: {e}")))
    }
}

impl BackgroundConfig {
    pub fn build(&self) -> Result<PeriodicBackground<f64>> {
        if self.period == 0 {
            return Err(Error::Config("background.period must be at least 1".into()));
        }
        if self.a.len() != self.period {
            return Err(Error::Config(format!(
                "background.a has {} entries but background.period is {}",
                self.a.len(),
                self.period
            )));
        }
        if self.b.len() != self.period {
            return Err(Error::Config(format!(
                "background.b has {} entries but background.period is {}",
                self.b.len(),
                self.period
            )));
        }
        PeriodicBackground::new(self.a.clone(), self.b.clone()).map_err(|e| Error::Config(format!("background: {e}")))
    }
}

impl ProfileConfig {
    fn profile(&self) -> Profile<f64> {
        let p = Profile::log_weight(self.scale, self.power, self.log_power);
        if self.alternating {
            p.alternating()
        } else {
            p
        }
    }
}

impl PerturbationConfig {
    pub fn build(&self) -> Result<Perturbation<f64>> {
        let profile = |p: &Option<ProfileConfig>| p.map_or_else(Profile::zero, |p| p.profile());
        let stray =
            |what: &str| Error::Config(format!("perturbation.{what} is not used by kind `{}`", self.kind_name()));
        let spec = match self.kind {
            PerturbationKindConfig::None => {
                if !self.sites.is_empty() {
                    return Err(stray("sites"));
                }
                if self.da.is_some() || self.db.is_some() {
                    return Err(stray("da/db"));
                }
                return Ok(Perturbation::zero());
            }
            PerturbationKindConfig::Explicit => {
                if self.da.is_some() || self.db.is_some() {
                    return Err(stray("da/db"));
                }
                let mut map = BTreeMap::new();
                for s in &self.sites {
                    if map.insert(s.n, SiteShift { da: s.da, db: s.db }).is_some() {
                        return Err(Error::Config(format!("perturbation.sites: site {} listed twice", s.n)));
                    }
                }
                PerturbationSpec::Explicit(map)
            }
            PerturbationKindConfig::PowerLaw => {
                if !self.sites.is_empty() {
                    return Err(stray("sites"));
                }
                PerturbationSpec::PowerLaw { da: profile(&self.da), db: profile(&self.db) }
            }
            PerturbationKindConfig::LogWeight => {
                if !self.sites.is_empty() {
                    return Err(stray("sites"));
                }
                PerturbationSpec::LogWeight { da: profile(&self.da), db: profile(&self.db) }
            }
        };
        make_perturbation(spec, self.allow_non_summable).map_err(|e| Error::Config(format!("perturbation: {e}")))
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            PerturbationKindConfig::None => "none",
            PerturbationKindConfig::Explicit => "explicit",
            PerturbationKindConfig::PowerLaw => "power-law",
            PerturbationKindConfig::LogWeight => "log-weight",
        }
    }
}

fn span_hint(e: &toml::de::Error) -> String {
    match e.span() {
        Some(s) => format!(" (at byte {})", s.start),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P2: &str = "[background]\nperiod = 2\na = [1.0, 1.0]\nb = [1.0, -1.0]\n";

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = Config::from_toml(P2).unwrap();
        assert_eq!(c.bands.tol, 1e-10);
        assert_eq!(c.ltsum.schedule, vec![100, 200, 400, 800]);
        assert_eq!(c.background().unwrap().period(), 2);
        assert!(c.perturbation().unwrap().is_zero());
    }

    #[test]
    fn missing_period_is_named() {
        let e = Config::from_toml("[background]\na = [1.0]\nb = [0.0]\n").unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("period")), "{e}");
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Config::from_toml(&format!("{P2}[bands]\ntoll = 1e-3\n")).unwrap_err();
        assert!(e.to_string().contains("toll"), "{e}");
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let e = Config::from_toml(&format!("{P2}[green]\ntol = 0.0\n")).unwrap_err();
        assert!(e.to_string().contains("green.tol"), "{e}");
    }

    #[test]
    fn empty_window_rejected() {
        let e = Config::from_toml(&format!("{P2}[split]\nwindow = \"5..-5\"\n")).unwrap_err();
        assert!(e.to_string().contains("split.window"), "{e}");
    }

    #[test]
    fn round_trip_is_exact() {
        let text = format!(
            "{P2}[perturbation]\nkind = \"power-law\"\n[perturbation.db]\nscale = 0.1\npower = 2.0\nalternating = true\n[green]\nlambda = 0.30000000000000004\n"
        );
        let c = Config::from_toml(&text).unwrap();
        let again = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.green.lambda, Some(0.30000000000000004));
    }

    #[test]
    fn explicit_sites() {
        let c = Config::from_toml(&format!(
            "{P2}[perturbation]\nkind = \"explicit\"\nsites = [{{ n = 0, da = 0.3, db = -0.2 }}]\n"
        ))
        .unwrap();
        let p = c.perturbation().unwrap();
        assert_eq!(p.at(0), SiteShift { da: 0.3, db: -0.2 });
        assert_eq!(p.at(1), SiteShift::default());
    }

    #[test]
    fn non_summable_needs_override() {
        let body = "[perturbation]\nkind = \"power-law\"\n[perturbation.db]\nscale = 1.0\npower = 1.0\n";
        assert!(Config::from_toml(&format!("{P2}{body}")).is_err());
        let ok = body.replace("kind = \"power-law\"", "kind = \"power-law\"\nallow_non_summable = true");
        assert!(Config::from_toml(&format!("{P2}{ok}")).is_ok());
    }

    #[test]
    fn seeds_are_inclusive() {
        assert_eq!(parse_seeds("0..199").unwrap(), (0, 199));
        assert!(parse_seeds("3..1").is_err());
    }
}
