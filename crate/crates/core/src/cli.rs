//! The `gapcount` command line: subcommand dispatch, config overrides, and
//! CSV/JSON output with a header block echoing the resolved configuration.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::bands::{compute_bands, BandSet, EdgeSide, GapComponent};
use crate::birman_schwinger::{bs_operator, default_guard, gap_bound, verify_principle, BoundReport, BoundVariant};
use crate::config::{parse_seeds, parse_window, Config, Format, VerifySource, VerifyVariant};
use crate::error::{Error, Result};
use crate::green::{scan_green_bounds, Edge, GreenMethod, GreenSolver, ScanOptions};
use crate::inertia::{count_in_interval, default_tol, eigs_in_interval, eigs_tridiagonal};
use crate::instances::{bound_instance, principle_instance};
use crate::linalg::{FactorBasis, SymMatrix};
use crate::ltsums::{check_sum_identity, convergence_experiment, ConvergenceOptions, ExperimentClass, SumFunction};
use crate::splitting::split;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "gapcount",
    version,
    about = "Eigenvalue counting in spectral gaps of perturbed periodic Jacobi matrices"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// csv or json; inferred from the --out extension when absent.
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Leave the timestamp out of the header block.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Validate the configuration and print the resolved plan without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Band edges of the periodic background.
    Bands {
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Eigenvalues of a finite section in an open interval.
    Count {
        /// Sites `lo..hi`, e.g. -200..200.
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// Open interval `a,b`.
        #[arg(long, allow_hyphen_values = true)]
        interval: Option<String>,
    },
    /// Birman–Schwinger kernel of the positive part of the perturbation.
    Bs {
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        energy: Option<f64>,
    },
    /// Positive/negative splitting of the perturbation on a window.
    Split {
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
    },
    /// Green's function values of the background.
    Green {
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<f64>,
        /// `n,m;n,m;...`
        #[arg(long, allow_hyphen_values = true)]
        pairs: Option<String>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        dirichlet: bool,
        #[arg(long)]
        method: Option<String>,
    },
    /// Green's-function bound constants on a grid approaching a band edge.
    GreenScan {
        #[arg(long)]
        edge: Option<Edge>,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        gap_index: Option<usize>,
    },
    /// Power sums of gap eigenvalues over a schedule of windows.
    Ltsum {
        #[arg(long)]
        alpha: Option<f64>,
        /// Section sizes in sites, e.g. 100,200,400,800.
        #[arg(long)]
        schedule: Option<String>,
        /// thm13, thm14 or conjecture.
        #[arg(long)]
        variant: Option<ExperimentClass>,
    },
    /// Counting inequalities and the gap principle on seeded instances.
    Verify {
        /// t11, t31, t32 or prop21.
        #[arg(long)]
        variant: Option<VerifyVariant>,
        /// Inclusive range `lo..hi`.
        #[arg(long)]
        seeds: Option<String>,
        /// `lo,hi`.
        #[arg(long)]
        dim_range: Option<String>,
        #[arg(long)]
        source: Option<VerifySource>,
        #[arg(long)]
        e0_position: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bands { .. } => "bands",
            Command::Count { .. } => "count",
            Command::Bs { .. } => "bs",
            Command::Split { .. } => "split",
            Command::Green { .. } => "green",
            Command::GreenScan { .. } => "green-scan",
            Command::Ltsum { .. } => "ltsum",
            Command::Verify { .. } => "verify",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Command::Bands { .. } | Command::Green { .. } | Command::GreenScan { .. } | Command::Ltsum { .. } => {
                Format::Csv
            }
            _ => Format::Json,
        }
    }

    fn has_table(&self) -> bool {
        !matches!(self, Command::Count { .. } | Command::Bs { .. } | Command::Split { .. })
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| Error::Config(format!("{key}: cannot parse `{t}`"))))
        .collect()
}

fn parse_pair<T: std::str::FromStr + Copy>(key: &str, s: &str) -> Result<[T; 2]> {
    let v = parse_list::<T>(key, s)?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::Config(format!("{key}: expected two comma-separated values, got `{s}`"))),
    }
}

/// Folds the subcommand flags into the configuration.
pub fn apply_overrides(cfg: &mut Config, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Bands { tol } => {
            if let Some(t) = tol {
                cfg.bands.tol = *t;
            }
        }
        Command::Count { window, interval } => {
            if let Some(w) = window {
                cfg.count.window = w.clone();
            }
            if let Some(i) = interval {
                cfg.count.interval = Some(parse_pair("--interval", i)?);
            }
        }
        Command::Bs { window, energy } => {
            if let Some(w) = window {
                cfg.bs.window = w.clone();
            }
            if energy.is_some() {
                cfg.bs.energy = *energy;
            }
        }
        Command::Split { window } => {
            if let Some(w) = window {
                cfg.split.window = w.clone();
            }
        }
        Command::Green { lambda, pairs, size, dirichlet, method } => {
            if lambda.is_some() {
                cfg.green.lambda = *lambda;
            }
            if let Some(p) = pairs {
                cfg.green.pairs = p
                    .split(';')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| parse_pair("--pairs", t))
                    .collect::<Result<_>>()?;
            }
            if size.is_some() {
                cfg.green.size = *size;
            }
            if *dirichlet {
                cfg.green.dirichlet = true;
            }
            if let Some(m) = method {
                cfg.green.method = m.clone();
            }
        }
        Command::GreenScan { edge, grid_points, gap_index } => {
            if let Some(e) = edge {
                cfg.green_scan.edge = *e;
            }
            if let Some(g) = grid_points {
                cfg.green_scan.grid_points = *g;
            }
            if gap_index.is_some() {
                cfg.green_scan.gap_index = *gap_index;
            }
        }
        Command::Ltsum { alpha, schedule, variant } => {
            if let Some(a) = alpha {
                cfg.ltsum.alpha = *a;
            }
            if let Some(s) = schedule {
                cfg.ltsum.schedule = parse_list("--schedule", s)?;
            }
            if let Some(v) = variant {
                cfg.ltsum.variant = *v;
            }
        }
        Command::Verify { variant, seeds, dim_range, source, e0_position } => {
            if let Some(v) = variant {
                cfg.verify.variant = *v;
            }
            if let Some(s) = seeds {
                cfg.verify.seeds = s.clone();
            }
            if let Some(d) = dim_range {
                cfg.verify.dim_range = parse_pair("--dim-range", d)?;
            }
            if let Some(s) = source {
                cfg.verify.source = *s;
            }
            if e0_position.is_some() {
                cfg.verify.e0_position = *e0_position;
            }
        }
    }
    cfg.validate()
}

/// A command's result: the JSON body, an optional CSV table, and summary
/// lines appended to the CSV header block.
pub struct Report {
    pub json: Value,
    pub table: Option<Table>,
    pub summary: Vec<String>,
}

pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// Round-trip formatting (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn pick_component(bands: &BandSet<f64>, index: Option<usize>, key: &str) -> Result<GapComponent<f64>> {
    let comps = bands.components();
    match index {
        Some(i) => comps
            .iter()
            .find(|c| c.index == i)
            .copied()
            .ok_or_else(|| Error::Config(format!("{key}: no component {i} (have 0..={})", comps.len() - 1))),
        None => comps
            .iter()
            .find(|c| c.is_interior())
            .copied()
            .ok_or_else(|| Error::Config(format!("{key}: the background has no interior gap; set it explicitly"))),
    }
}

/// Checks the command-specific keys and describes the work to be done.
pub fn plan(cfg: &Config, cmd: &Command) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    match cmd {
        Command::Bands { .. } => {
            let bg = cfg.background()?;
            lines.push(format!("band edges of a period-{} background, tol {:e}", bg.period(), cfg.bands.tol));
        }
        Command::Count { .. } => {
            cfg.operator()?;
            let w = parse_window("count.window", &cfg.count.window)?;
            let [a, b] = cfg
                .count
                .interval
                .ok_or_else(|| Error::Config("count.interval is required (or pass --interval a,b)".into()))?;
            lines.push(format!("count eigenvalues in ({a}, {b}) on sites {}..{} ({} sites)", w.lo(), w.hi(), w.len()));
        }
        Command::Bs { .. } => {
            cfg.operator()?;
            let w = parse_window("bs.window", &cfg.bs.window)?;
            let e = cfg.bs.energy.ok_or_else(|| Error::Config("bs.energy is required (or pass --energy)".into()))?;
            lines.push(format!("kernel of the positive part at e = {e} on sites {}..{}", w.lo(), w.hi()));
        }
        Command::Split { .. } => {
            cfg.perturbation()?;
            let w = parse_window("split.window", &cfg.split.window)?;
            lines.push(format!("split the perturbation on sites {}..{}", w.lo(), w.hi()));
        }
        Command::Green { .. } => {
            cfg.background()?;
            let l =
                cfg.green.lambda.ok_or_else(|| Error::Config("green.lambda is required (or pass --lambda)".into()))?;
            lines.push(format!(
                "{} Green's function at λ = {l} for {} pairs",
                if cfg.green.dirichlet { "Dirichlet" } else { "full" },
                cfg.green.pairs.len()
            ));
        }
        Command::GreenScan { .. } => {
            let bg = cfg.background()?;
            let bands = compute_bands(&bg, 1e-14)?;
            let c = pick_component(&bands, cfg.green_scan.gap_index, "green_scan.gap_index")?;
            if c.edge(cfg.green_scan.edge).is_none() {
                return Err(Error::Config(format!(
                    "green_scan.edge: the {} end of component {} is unbounded",
                    cfg.green_scan.edge, c.index
                )));
            }
            lines.push(format!(
                "scan {} points over {} decades toward the {} edge of component {} ({}, {})",
                cfg.green_scan.grid_points, cfg.green_scan.decades, cfg.green_scan.edge, c.index, c.lo, c.hi
            ));
        }
        Command::Ltsum { .. } => {
            cfg.operator()?;
            lines.push(format!(
                "{} power sums with α = {} over section sizes {:?}",
                cfg.ltsum.variant, cfg.ltsum.alpha, cfg.ltsum.schedule
            ));
        }
        Command::Verify { .. } => {
            let v = &cfg.verify;
            match v.source {
                VerifySource::Random => {
                    let (lo, hi) = parse_seeds(&v.seeds)?;
                    lines.push(format!(
                        "{} on seeds {lo}..={hi}, dimensions {}..={}",
                        v.variant, v.dim_range[0], v.dim_range[1]
                    ));
                }
                VerifySource::Operator => {
                    cfg.operator()?;
                    let w = parse_window("verify.window", &v.window)?;
                    lines.push(format!("{} on the configured operator, sites {}..{}", v.variant, w.lo(), w.hi()));
                }
            }
        }
    }
    Ok(lines)
}

pub fn execute(cfg: &Config, cmd: &Command) -> Result<Report> {
    match cmd {
        Command::Bands { .. } => run_bands(cfg),
        Command::Count { .. } => run_count(cfg),
        Command::Bs { .. } => run_bs(cfg),
        Command::Split { .. } => run_split(cfg),
        Command::Green { .. } => run_green(cfg),
        Command::GreenScan { .. } => run_green_scan(cfg),
        Command::Ltsum { .. } => run_ltsum(cfg),
        Command::Verify { .. } => run_verify(cfg),
    }
}

fn to_json<S: serde::Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn run_bands(cfg: &Config) -> Result<Report> {
    let bands = compute_bands(&cfg.background()?, cfg.bands.tol)?;
    let rows = bands
        .edges()
        .iter()
        .map(|e| {
            vec![
                e.band.to_string(),
                match e.side {
                    EdgeSide::Left => "left".into(),
                    EdgeSide::Right => "right".into(),
                },
                num(e.lambda),
                num(e.derivative),
            ]
        })
        .collect();
    let gaps: Vec<_> = bands.gaps();
    Ok(Report {
        json: json!({
            "bands": bands.bands(),
            "gaps": gaps,
            "edges": bands.edges(),
            "degenerate_edges": bands.degenerate_edges(),
        }),
        table: Some(Table { columns: vec!["index", "side", "lambda", "discriminant_derivative"], rows }),
        summary: vec![format!("bands: {}", bands.bands().len()), format!("gaps: {}", gaps.len())],
    })
}

fn run_count(cfg: &Config) -> Result<Report> {
    let op = cfg.operator()?;
    let w = parse_window("count.window", &cfg.count.window)?;
    let [a, b] = cfg.count.interval.ok_or_else(|| Error::Config("count.interval is required".into()))?;
    let tm = op.truncate(w)?;
    let tol = cfg.count.tol.unwrap_or_else(|| default_tol(tm.tridiagonal()));
    let c = count_in_interval(&tm, (a, b), tol)?;
    let eigenvalues = if cfg.count.eigenvalues { Some(eigs_in_interval(&tm, (a, b), tol)?) } else { None };
    let mut body = json!({
        "window": [w.lo(), w.hi()],
        "interval": [a, b],
        "tol": tol,
        "count": c.count,
        "boundary_flags": c.boundary_flags,
    });
    if let Some(ev) = eigenvalues {
        body["eigenvalues"] = to_json(&ev);
    }
    Ok(Report { json: body, table: None, summary: vec![] })
}

fn run_bs(cfg: &Config) -> Result<Report> {
    let op = cfg.operator()?;
    let w = parse_window("bs.window", &cfg.bs.window)?;
    let e = cfg.bs.energy.ok_or_else(|| Error::Config("bs.energy is required".into()))?;
    let a = SymMatrix::Tridiagonal(op.background().truncate(w).tridiagonal().clone());
    let sp = split(op.perturbation(), w);
    let k = bs_operator(&a, &sp.plus_matrix(), e, cfg.bs.tol)?;
    let eigenvalues = k.eigenvalues()?;
    let support: Value = match k.basis {
        FactorBasis::Sites => to_json(&k.support.iter().map(|&i| w.site(i)).collect::<Vec<_>>()),
        FactorBasis::Eigenmodes => to_json(&k.support),
    };
    let mut body = json!({
        "window": [w.lo(), w.hi()],
        "energy": e,
        "dim": k.dim(),
        "basis": k.basis,
        "support": support,
        "eigenvalues": eigenvalues,
        "count_ge_1": k.count_ge(1.0)?,
        "raw_asymmetry": k.raw_asymmetry,
    });
    if k.dim() <= 64 {
        let rows: Vec<Vec<f64>> = (0..k.dim()).map(|i| (0..k.dim()).map(|j| k.kernel[(i, j)]).collect()).collect();
        body["kernel"] = to_json(&rows);
    }
    Ok(Report { json: body, table: None, summary: vec![] })
}

fn run_split(cfg: &Config) -> Result<Report> {
    let pert = cfg.perturbation()?;
    let w = parse_window("split.window", &cfg.split.window)?;
    let sp = split(&pert, w);
    let checks = sp.checks(&pert)?;
    Ok(Report {
        json: json!({
            "window": [w.lo(), w.hi()],
            "plus": sp.plus(),
            "minus": { "diag": sp.minus().diag(), "off": sp.minus().off() },
            "checks": checks,
        }),
        table: None,
        summary: vec![],
    })
}

fn run_green(cfg: &Config) -> Result<Report> {
    let g = &cfg.green;
    let solver = GreenSolver::new(cfg.background()?)?;
    let lambda = g.lambda.ok_or_else(|| Error::Config("green.lambda is required".into()))?;
    let method: GreenMethod = g.method.parse()?;
    let pairs: Vec<(i64, i64)> = g.pairs.iter().map(|p| (p[0], p[1])).collect();
    let ev = solver.evaluate(&pairs, lambda, g.size, g.tol, g.dirichlet, method)?;
    let rows = ev.entries.iter().map(|e| vec![e.n.to_string(), e.m.to_string(), num(e.value)]).collect();
    Ok(Report {
        summary: vec![format!("lambda: {}", num(lambda)), format!("section size: {}", ev.size)],
        json: to_json(&ev),
        table: Some(Table { columns: vec!["n", "m", "value"], rows }),
    })
}

fn run_green_scan(cfg: &Config) -> Result<Report> {
    let s = &cfg.green_scan;
    let solver = GreenSolver::new(cfg.background()?)?;
    let comp = pick_component(solver.bands(), s.gap_index, "green_scan.gap_index")?;
    let opts = ScanOptions {
        edge: s.edge,
        points: s.grid_points,
        epsilon: s.epsilon,
        decades: s.decades,
        n_range: s.n_range,
        tol: s.tol,
    };
    let r = scan_green_bounds(&solver, &comp, &opts)?;
    let rows = r
        .points
        .iter()
        .map(|p| {
            vec![
                num(p.t),
                num(p.lambda),
                num(p.distance),
                num(p.uniform),
                num(p.linear),
                num(p.edge),
                num(p.g00),
                p.size.to_string(),
            ]
        })
        .collect();
    let mut summary = vec![format!("edge: {} at {}", r.edge, num(r.edge_lambda)), format!("n_range: {}", r.n_range)];
    for c in &r.constants {
        summary.push(format!("{}: max {} slope {} bounded {}", c.name, num(c.max), num(c.slope), c.bounded));
    }
    Ok(Report {
        json: to_json(&r),
        table: Some(Table {
            columns: vec!["t", "lambda", "distance", "uniform", "linear", "edge", "g00", "size"],
            rows,
        }),
        summary,
    })
}

fn run_ltsum(cfg: &Config) -> Result<Report> {
    let l = &cfg.ltsum;
    let op = cfg.operator()?;
    let opts = ConvergenceOptions {
        class: l.variant,
        alpha: l.alpha,
        schedule: l.schedule.clone(),
        tol: l.tol,
        stab_tol: l.stab_tol,
        log_eps: l.log_eps,
        majorant: l.majorant,
        epsilon: l.epsilon,
    };
    let table = convergence_experiment(&op, &opts)?;
    let mut identities = Vec::new();
    if l.identity {
        let bands = compute_bands(op.background(), 1e-14)?;
        let comps: Vec<_> = bands.components().into_iter().filter(|c| c.lo.is_finite()).collect();
        let n = l.schedule[0];
        let window = crate::operators::Window::centered(n as usize)?;
        let top = op.truncate(window)?.tridiagonal().gershgorin().1;
        identities = comps
            .par_iter()
            .map(|c| {
                let eps = l.epsilon.unwrap_or_else(|| identity_epsilon(c, top));
                check_sum_identity(&op, c.lo, eps, &SumFunction::Power(l.alpha), window, l.tol).map(|s| (c.index, n, s))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.gap_index.map_or_else(|| "total".into(), |g| g.to_string()),
                r.count.to_string(),
                num(r.power_sum),
                opt_num(r.delta_prev),
                r.verdict.to_string(),
            ]
        })
        .collect();
    let mut summary = vec![
        format!("verdict: {}", table.verdict),
        format!("shrink_factors: {}", table.shrink_factors.iter().map(|&s| num(s)).collect::<Vec<_>>().join(" ")),
    ];
    for m in &table.majorants {
        summary.push(format!(
            "majorant gap {} {} edge: integral {} finite_looking {} fitted_c {}",
            m.gap_index,
            m.edge,
            num(m.levels.last().map_or(0.0, |l| l.integral)),
            m.finite_looking,
            num(m.fitted_c)
        ));
    }
    for (g, n, s) in &identities {
        summary.push(format!(
            "identity gap {g} N {n}: lhs {} rhs_exact {} rhs_quadrature {} quadrature_error {}",
            num(s.lhs),
            num(s.rhs_exact),
            num(s.rhs_quadrature),
            num(s.quadrature_error)
        ));
    }
    let ids: Vec<Value> = identities
        .iter()
        .map(|(g, n, s)| {
            let mut v = to_json(s);
            v["gap_index"] = json!(g);
            v["n"] = json!(n);
            v
        })
        .collect();
    let mut body = to_json(&table);
    body["identities"] = Value::Array(ids);
    Ok(Report {
        json: body,
        table: Some(Table { columns: vec!["N", "gap_index", "count", "power_sum", "delta_prev", "verdict"], rows }),
        summary,
    })
}

/// A quarter of the gap width, or up to past the top of the section's
/// spectrum for the unbounded component.
fn identity_epsilon(c: &GapComponent<f64>, top: f64) -> f64 {
    if c.hi.is_finite() {
        0.25 * (c.hi - c.lo)
    } else {
        (top - c.lo).max(0.0) + 1.0
    }
}

/// Seed (if any), `A`, `B`, gap and `e₀` of one bound check.
type BoundInstance = (Option<u64>, SymMatrix<f64>, SymMatrix<f64>, (f64, f64), f64);

/// `e₀` at `position` of the admissible half-gap, measured from the outer edge.
pub fn place_e0(variant: BoundVariant, gap: (f64, f64), position: f64) -> f64 {
    let (x, y) = gap;
    let e1 = 0.5 * (x + y);
    match variant {
        BoundVariant::Bounded | BoundVariant::LowerSemibounded => x + position * (e1 - x),
        BoundVariant::UpperSemibounded => y - position * (y - e1),
    }
}

/// Log-spaced `|μ| ∈ [0.1, 10]` with both signs.
pub fn mu_grid(points: usize) -> Vec<f64> {
    let m = points.max(2);
    (0..m).map(|k| 10f64.powf(-1.0 + 2.0 * k as f64 / (m - 1) as f64)).flat_map(|mu| [mu, -mu]).collect()
}

fn bound_row(seed: Option<u64>, dim: usize, r: &BoundReport<f64>) -> (Value, Vec<String>) {
    let mut v = to_json(r);
    v["seed"] = json!(seed);
    v["dim"] = json!(dim);
    let row = vec![
        seed.map_or_else(String::new, |s| s.to_string()),
        dim.to_string(),
        num(r.inputs.x),
        num(r.inputs.y),
        num(r.inputs.e0),
        r.lhs.to_string(),
        r.rhs.to_string(),
        r.satisfied.to_string(),
    ];
    (v, row)
}

/// Eigenvalue-free interval of the section around the middle of a band gap.
fn section_gap(a: &crate::linalg::Tridiagonal<f64>, comp: &GapComponent<f64>) -> Result<(f64, f64)> {
    let w = comp.hi - comp.lo;
    let mid = 0.5 * (comp.lo + comp.hi);
    let ev = eigs_tridiagonal(a, (comp.lo - w, comp.hi + w), 1e-13)?;
    let x = ev.iter().copied().filter(|&l| l < mid).fold(f64::NEG_INFINITY, f64::max);
    let y = ev.iter().copied().filter(|&l| l > mid).fold(f64::INFINITY, f64::min);
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidInput("the section has no spectrum on one side of the gap".into()));
    }
    Ok((x, y))
}

fn run_verify(cfg: &Config) -> Result<Report> {
    let v = &cfg.verify;
    let dims = (v.dim_range[0], v.dim_range[1]);
    let mut seeds_json = Vec::new();
    let mut rows = Vec::new();
    let columns;
    let mut summary = Vec::new();
    match (v.variant.bound(), v.source) {
        (Some(variant), VerifySource::Random) => {
            let (lo, hi) = parse_seeds(&v.seeds)?;
            let results: Vec<Result<(usize, BoundReport<f64>)>> = (lo..=hi)
                .into_par_iter()
                .map(|seed| {
                    let inst = bound_instance::<f64>(seed, dims);
                    let gap = inst.base.gap;
                    let e0 = place_e0(variant, gap, v.e0_position.unwrap_or(inst.e0_fraction));
                    let guard = v.guard.unwrap_or_else(|| default_guard(gap));
                    let bp = SymMatrix::Dense(inst.b_plus);
                    let bm = SymMatrix::Dense(inst.b_minus);
                    gap_bound(variant, &inst.base.a_sym(), &bp, &bm, gap, e0, guard).map(|r| (inst.base.dim(), r))
                })
                .collect();
            let mut reports = Vec::new();
            for (seed, r) in (lo..=hi).zip(results) {
                let (dim, r) = r.map_err(|e| annotate(e, seed))?;
                let (j, row) = bound_row(Some(seed), dim, &r);
                seeds_json.push(j);
                rows.push(row);
                reports.push(r);
            }
            summary.extend(bound_summary(&reports));
            columns = vec!["seed", "dim", "x", "y", "e0", "lhs", "rhs", "satisfied"];
        }
        (Some(variant), VerifySource::Operator) => {
            let op = cfg.operator()?;
            let w = parse_window("verify.window", &v.window)?;
            let bands = compute_bands(op.background(), 1e-14)?;
            let comp = pick_component(&bands, v.gap_index, "verify.gap_index")?;
            let a = op.background().truncate(w).tridiagonal().clone();
            let gap = section_gap(&a, &comp)?;
            let sp = split(op.perturbation(), w);
            let e0 = place_e0(variant, gap, v.e0_position.unwrap_or(0.5));
            let guard = v.guard.unwrap_or_else(|| default_guard(gap));
            let r =
                gap_bound(variant, &SymMatrix::Tridiagonal(a), &sp.plus_matrix(), &sp.minus_matrix(), gap, e0, guard)?;
            let (j, row) = bound_row(None, w.len(), &r);
            seeds_json.push(j);
            rows.push(row);
            summary.extend(bound_summary(std::slice::from_ref(&r)));
            columns = vec!["seed", "dim", "x", "y", "e0", "lhs", "rhs", "satisfied"];
        }
        (None, source) => {
            let grid = mu_grid(v.mu_points);
            let instances: Vec<BoundInstance> = match source {
                VerifySource::Random => {
                    let (lo, hi) = parse_seeds(&v.seeds)?;
                    (lo..=hi)
                        .map(|seed| {
                            let inst = principle_instance::<f64>(seed, dims);
                            (Some(seed), inst.base.a_sym(), SymMatrix::Dense(inst.b), inst.base.gap, inst.energy)
                        })
                        .collect()
                }
                VerifySource::Operator => {
                    let op = cfg.operator()?;
                    let w = parse_window("verify.window", &v.window)?;
                    let bands = compute_bands(op.background(), 1e-14)?;
                    let comp = pick_component(&bands, v.gap_index, "verify.gap_index")?;
                    let a = op.background().truncate(w).tridiagonal().clone();
                    let gap = section_gap(&a, &comp)?;
                    let e = gap.0 + v.e0_position.unwrap_or(0.5) * (gap.1 - gap.0);
                    let b = split(op.perturbation(), w).plus_matrix();
                    vec![(None, SymMatrix::Tridiagonal(a), b, gap, e)]
                }
            };
            let results: Vec<_> =
                instances.par_iter().map(|(_, a, b, gap, e)| verify_principle(a, b, *gap, *e, &grid, v.tol)).collect();
            let mut violations = 0;
            for ((seed, a, _, _, _), r) in instances.iter().zip(results) {
                let r = r.map_err(|e| match seed {
                    Some(s) => annotate(e, *s),
                    None => e,
                })?;
                violations += r.violations;
                let mut j = json!({
                    "seed": seed,
                    "dim": a.dim(),
                    "energy": r.energy,
                    "gap": r.gap,
                    "kernel_eigenvalues": r.kernel_eigenvalues.len(),
                    "points": r.points.len(),
                    "violations": r.violations,
                    "satisfied": r.violations == 0,
                });
                if r.violations > 0 {
                    j["details"] = to_json(&r.points);
                }
                seeds_json.push(j);
                rows.push(vec![
                    seed.map_or_else(String::new, |s| s.to_string()),
                    a.dim().to_string(),
                    num(r.energy),
                    r.points.len().to_string(),
                    r.violations.to_string(),
                ]);
            }
            summary.push(format!("instances: {}", instances.len()));
            summary.push(format!("violations: {violations}"));
            columns = vec!["seed", "dim", "energy", "points", "violations"];
        }
    }
    Ok(Report {
        json: json!({ "variant": v.variant, "summary": summary, "seeds": seeds_json }),
        table: Some(Table { columns, rows }),
        summary,
    })
}

fn bound_summary(reports: &[BoundReport<f64>]) -> Vec<String> {
    let failures = reports.iter().filter(|r| !r.satisfied).count();
    let tight = reports.iter().filter(|r| r.rhs - r.lhs.min(r.rhs) <= 1 && r.satisfied).count();
    vec![
        format!("instances: {}", reports.len()),
        format!("violations: {failures}"),
        format!("tight (rhs - lhs <= 1): {tight}"),
    ]
}

fn annotate(e: Error, seed: u64) -> Error {
    match e {
        Error::NumericalFailure { message, lo, hi } => {
            Error::NumericalFailure { message: format!("seed {seed}: {message}"), lo, hi }
        }
        Error::InvalidInput(m) => Error::InvalidInput(format!("seed {seed}: {m}")),
        other => other,
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Serializes a report with its header block.
pub fn render(report: &Report, cfg: &Config, command: &str, format: Format, with_timestamp: bool) -> Result<Vec<u8>> {
    let ts = with_timestamp.then(timestamp);
    match format {
        Format::Json => {
            let mut meta = json!({
                "version": VERSION,
                "command": command,
                "config": to_json(cfg),
            });
            if let Some(t) = ts {
                meta["timestamp"] = json!(t);
            }
            let doc = json!({ "meta": meta, "result": report.json });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| Error::InvalidInput(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let table = report
                .table
                .as_ref()
                .ok_or_else(|| Error::Config(format!("`{command}` writes json only; use --format json")))?;
            let mut out = Vec::new();
            let mut head = vec![format!("gapcount {VERSION}"), format!("command: {command}")];
            if let Some(t) = ts {
                head.push(format!("timestamp: {t}"));
            }
            head.push("config:".into());
            head.extend(cfg.to_toml().lines().map(str::to_string));
            if !report.summary.is_empty() {
                head.push("summary:".into());
                head.extend(report.summary.iter().cloned());
            }
            for l in head {
                writeln!(out, "# {l}").map_err(|e| Error::InvalidInput(e.to_string()))?;
            }
            let mut w = csv::Writer::from_writer(out);
            let io = |e: csv::Error| Error::InvalidInput(e.to_string());
            w.write_record(&table.columns).map_err(io)?;
            for r in &table.rows {
                w.write_record(r).map_err(io)?;
            }
            w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
        }
    }
}

fn resolve_format(global: &GlobalArgs, cfg: &Config, cmd: &Command) -> Result<Format> {
    let by_extension = |p: &Path| match p.extension().and_then(|e| e.to_str()) {
        Some("csv") => Some(Format::Csv),
        Some("json") => Some(Format::Json),
        _ => None,
    };
    // config-level choices are shared by all commands, so json-only commands skip them
    let configured = || cfg.output.format.or_else(|| cfg.output.path.as_deref().map(Path::new).and_then(by_extension));
    let f = global
        .format
        .or_else(|| global.out.as_deref().and_then(by_extension))
        .or_else(|| configured().filter(|_| cmd.has_table()))
        .unwrap_or_else(|| cmd.default_format());
    if f == Format::Csv && !cmd.has_table() {
        return Err(Error::Config(format!("format: `{}` writes json only", cmd.name())));
    }
    Ok(f)
}

fn diagnostic(e: &Error) -> Value {
    match e {
        Error::ResolventProximity { energy, distance, tol } => {
            json!({ "error": "resolvent-proximity", "energy": energy, "distance": distance, "tol": tol })
        }
        Error::NumericalFailure { message, lo, hi } => {
            json!({ "error": "numerical-failure", "message": message, "bracket": [lo, hi] })
        }
        Error::Resonance { value, tol } => json!({ "error": "resonance", "value": value, "tol": tol }),
        other => json!({ "error": "input", "message": other.to_string() }),
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GAPCOUNT_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("GAPCOUNT_THREADS must be a positive integer (got `{v}`)")))?;
        // a second initialization (in-process callers) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn run_parsed(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = match &cli.global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    apply_overrides(&mut cfg, &cli.command)?;
    let out = cli.global.out.clone().or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    let format = resolve_format(&cli.global, &cfg, &cli.command)?;
    let lines = plan(&cfg, &cli.command)?;
    if cli.global.dry_run {
        let mut s = String::new();
        s.push_str(&format!("command: {}\n", cli.command.name()));
        s.push_str(&format!(
            "output: {} ({format})\n",
            out.as_ref().map_or_else(|| "stdout".into(), |p| p.display().to_string())
        ));
        for l in lines {
            s.push_str(&format!("plan: {l}\n"));
        }
        s.push_str("config:\n");
        s.push_str(&cfg.to_toml());
        print!("{s}");
        return Ok(());
    }
    let report = execute(&cfg, &cli.command)?;
    let bytes = render(&report, &cfg, cli.command.name(), format, !cli.global.no_timestamp)?;
    match out {
        Some(p) => std::fs::write(&p, bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| Error::InvalidInput(e.to_string()))?,
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                eprintln!("{}", diagnostic(&e));
                2
            } else {
                1
            }
        }
    }
}
