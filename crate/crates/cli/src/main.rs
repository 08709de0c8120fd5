//! Batch front door for the calculus engine: every operation reads its
//! problem from flags and small JSON files, runs on the configured grid, and
//! appends a self-describing report (JSON lines or CSV).
//!
//! Exit codes: 0 success, 2 a mathematical hypothesis failed (non-invertible
//! separation, non-null perturbation, escaping membrane, ...), 1 anything
//! else (bad flags, unreadable files, malformed expressions).

mod config;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use membrane_calc::genfun::GenPoint;
use membrane_calc::gennum::{ClassifyConfig, GenNet};
use membrane_calc::grid::EpsilonGrid;
use membrane_calc::holo::ContourSetup;
use membrane_calc::pde::{
    residual_check, transport_solve, wave_solve, Pde, TransportProblem, WaveProblem,
};
use membrane_calc::quad::{
    green_check, integrate_membrane, interval_consistency, line_integral_complex,
    line_integral_real, mean_value_bound, QuadConfig,
};

use config::{Format, Overrides, RunConfig};
use report::Report;

#[derive(Debug)]
pub enum CliError {
    Core(membrane_calc::Error),
    Input(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(msg) => write!(f, "{msg}"),
        }
    }
}

impl CliError {
    /// 2 for failed mathematical hypotheses, 1 for input/configuration/IO
    /// problems.
    fn code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_hypothesis() => 2,
            _ => 1,
        }
    }
}

impl From<membrane_calc::Error> for CliError {
    fn from(e: membrane_calc::Error) -> CliError {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(
    name = "membrane-calc",
    version,
    about = "Numerical workbench for epsilon-net generalized calculus"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Config file (JSON or TOML); falls back to $MEMBRANE_CALC_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Coarsest grid exponent k (sample 10^(-k/per_decade)).
    #[arg(long, global = true)]
    grid_kmin: Option<u32>,
    /// Finest grid exponent k.
    #[arg(long, global = true)]
    grid_kmax: Option<u32>,
    /// Number of finest samples used for asymptotic classification.
    #[arg(long, global = true)]
    tail: Option<usize>,
    /// Report file (appended); stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for per-epsilon parallelism (0 = automatic).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Truncate the report file instead of appending.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a net given as an expression in eps (or `alpha:R`).
    Classify(ClassifyArgs),
    /// Integrate a representative over a membrane.
    Integrate(IntegrateArgs),
    /// Line integral of a 1-form (or a complex integrand) along a curve.
    Line(LineArgs),
    /// Contour evaluation at z0 compared against direct evaluation.
    #[command(name = "contour-cauchy")]
    ContourCauchy(CauchyArgs),
    /// Series coefficients from contour moments around z0.
    Taylor(TaylorArgs),
    /// Boundary circulation versus curl integral over a plane region.
    Green(GreenArgs),
    /// Mean-value bound for an integral over a membrane.
    Meanvalue(MeanvalueArgs),
    /// Solve a constant-velocity transport problem and probe the solution.
    Transport(TransportArgs),
    /// Solve the unit-speed wave equation on the line and probe the solution.
    Wave(WaveArgs),
    /// Membrane-vs-line consistency check on an interval.
    Consistency(ConsistencyArgs),
}

#[derive(Args)]
struct ClassifyArgs {
    /// Net to classify: an expression in eps, or `alpha:R`.
    #[arg(long, allow_hyphen_values = true)]
    expr: String,
}

#[derive(Args)]
struct IntegrateArgs {
    /// Integrand body in x1..xn.
    #[arg(long, allow_hyphen_values = true)]
    f: String,
    /// Membrane description file (JSON).
    #[arg(long)]
    membrane: PathBuf,
    /// Value substituted for `s` in `alpha:s` net specs.
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    /// Integrand domain `lo:hi,lo:hi,...` (defaults to the inflated hull).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct LineArgs {
    /// Curve description file (JSON).
    #[arg(long)]
    contour: PathBuf,
    /// One 1-form component per flag, in axis order.
    #[arg(long = "field", allow_hyphen_values = true)]
    fields: Vec<String>,
    /// Complex integrand in z (instead of --field components).
    #[arg(long, allow_hyphen_values = true)]
    fz: Option<String>,
    /// Field domain `lo:hi,...` (default -8:8 per axis).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct CauchyArgs {
    /// Complex integrand body in z.
    #[arg(long, allow_hyphen_values = true)]
    f: String,
    /// Closed curve description file (JSON).
    #[arg(long)]
    contour: PathBuf,
    /// Evaluation point: expression in eps (complex via `i`).
    #[arg(long, allow_hyphen_values = true)]
    z0: String,
    /// Integrand domain half-width box `lo:hi` (default -8:8).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct TaylorArgs {
    /// Complex integrand body in z.
    #[arg(long, allow_hyphen_values = true)]
    f: String,
    /// Closed curve description file (JSON).
    #[arg(long)]
    contour: PathBuf,
    /// Expansion center: expression in eps (complex via `i`).
    #[arg(long, allow_hyphen_values = true)]
    z0: String,
    /// Highest coefficient index.
    #[arg(long, default_value_t = 10)]
    n: u32,
    /// Integrand domain `lo:hi` (default -8:8).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct GreenArgs {
    /// First 1-form component (multiplies dx1).
    #[arg(long, allow_hyphen_values = true)]
    p: String,
    /// Second 1-form component (multiplies dx2).
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    /// Boundary curve description file (JSON).
    #[arg(long)]
    contour: PathBuf,
    /// Region membrane description file (JSON).
    #[arg(long)]
    membrane: PathBuf,
    /// Value substituted for `s` in `alpha:s` net specs.
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    /// Field domain `lo:hi,lo:hi` (defaults to the inflated hull).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct MeanvalueArgs {
    /// Integrand body in x1..xn.
    #[arg(long, allow_hyphen_values = true)]
    f: String,
    /// Membrane description file (JSON).
    #[arg(long)]
    membrane: PathBuf,
    /// Value substituted for `s` in `alpha:s` net specs.
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    /// Integrand domain `lo:hi,...` (defaults to the inflated hull).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct TransportArgs {
    /// Initial datum body in x1..xn.
    #[arg(long, allow_hyphen_values = true)]
    g: String,
    /// Velocity components, comma-separated net specs.
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    /// Source body in x1..xn and t (optional).
    #[arg(long, allow_hyphen_values = true)]
    source: Option<String>,
    /// Source time margin a (source defined for t > -a).
    #[arg(long, default_value_t = 2.0)]
    margin: f64,
    /// Probe position, comma-separated net specs.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Probe time net spec.
    #[arg(long, allow_hyphen_values = true)]
    t: String,
    /// Also run the finite-difference residual check at the probe.
    #[arg(long)]
    residual: bool,
    /// Datum domain `lo:hi,...` (default -10:10 per axis).
    #[arg(long, allow_hyphen_values = true)]
    gdomain: Option<String>,
    /// Source domain `lo:hi,...` including the trailing time axis.
    #[arg(long, allow_hyphen_values = true)]
    sdomain: Option<String>,
    /// Finite-difference step for the residual check.
    #[arg(long, default_value_t = membrane_calc::pde::DEFAULT_FD_STEP)]
    fd_step: f64,
    /// Compact-box padding around the probe position.
    #[arg(long, default_value_t = 0.25)]
    pad: f64,
}

#[derive(Args)]
struct WaveArgs {
    /// Position datum body in x1.
    #[arg(long, allow_hyphen_values = true)]
    g: String,
    /// Velocity datum body in x1.
    #[arg(long, allow_hyphen_values = true)]
    h: String,
    /// Probe position net spec.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    /// Probe time net spec.
    #[arg(long, allow_hyphen_values = true)]
    t: String,
    /// Also run the finite-difference residual check at the probe.
    #[arg(long)]
    residual: bool,
    /// Datum domain `lo:hi` (default -20:20).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Finite-difference step for the residual check.
    #[arg(long, default_value_t = 1e-3)]
    fd_step: f64,
    /// Compact-box padding around the probe position.
    #[arg(long, default_value_t = 0.25)]
    pad: f64,
}

#[derive(Args)]
struct ConsistencyArgs {
    /// Integrand body in x1.
    #[arg(long, allow_hyphen_values = true)]
    f: String,
    /// Lower endpoint net spec.
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    /// Upper endpoint net spec.
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    /// Integrand domain `lo:hi` (default -8:8).
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successes, not usage errors.
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(
        cli.global.config.as_deref(),
        Overrides {
            grid_kmin: cli.global.grid_kmin,
            grid_kmax: cli.global.grid_kmax,
            tail: cli.global.tail,
            format: cli.global.format,
            out: cli.global.out,
            workers: cli.global.workers,
            force: cli.global.force,
        },
    )?;
    if cfg.workers > 0 {
        // Results are assembled in epsilon order, so the pool size changes
        // only the schedule, never the bytes written.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }
    let grid = cfg.grid()?;
    let quad = cfg.quad();
    let ccfg = cfg.classify();
    let report = match &cli.command {
        Command::Classify(a) => cmd_classify(&grid, &ccfg, a)?,
        Command::Integrate(a) => cmd_integrate(&grid, &quad, &ccfg, a)?,
        Command::Line(a) => cmd_line(&grid, &quad, &ccfg, a)?,
        Command::ContourCauchy(a) => cmd_cauchy(&grid, &quad, &ccfg, a)?,
        Command::Taylor(a) => cmd_taylor(&grid, &quad, &ccfg, a)?,
        Command::Green(a) => cmd_green(&grid, &quad, &ccfg, a)?,
        Command::Meanvalue(a) => cmd_meanvalue(&grid, &quad, &ccfg, a)?,
        Command::Transport(a) => cmd_transport(&grid, &ccfg, a)?,
        Command::Wave(a) => cmd_wave(&grid, &ccfg, a)?,
        Command::Consistency(a) => cmd_consistency(&grid, &quad, &ccfg, a)?,
    };
    report.write(&cfg, &grid)
}

fn domain_or(
    spec: Option<&String>,
    arity: usize,
    fallback: Vec<[f64; 2]>,
) -> Result<Vec<[f64; 2]>, CliError> {
    match spec {
        Some(s) => input::parse_domain(s, arity),
        None => Ok(fallback),
    }
}

fn fmt_domain(dom: &[[f64; 2]]) -> String {
    dom.iter()
        .map(|[lo, hi]| format!("{lo}:{hi}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_classify(
    grid: &Arc<EpsilonGrid>,
    ccfg: &ClassifyConfig,
    a: &ClassifyArgs,
) -> Result<Report, CliError> {
    let net = input::parse_net(grid, &a.expr, None)?;
    let mut r = Report::new("classify");
    r.input("expr", &a.expr);
    r.class("net", net.classify(ccfg));
    r.net("net", net);
    Ok(r)
}

fn cmd_integrate(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &IntegrateArgs,
) -> Result<Report, CliError> {
    let m = input::load_membrane(grid, &a.membrane, a.s)?;
    let dom = domain_or(a.domain.as_ref(), m.dim(), input::inflate(m.compact_box()))?;
    let f = input::real_rep(&a.f, dom.clone())?;
    let integral = integrate_membrane(&f, &m, quad)?;
    let mut r = Report::new("integrate");
    r.input("f", &a.f);
    r.input("membrane", a.membrane.display());
    if let Some(s) = a.s {
        r.input("s", s);
    }
    r.input("domain", fmt_domain(&dom));
    r.class("integral", integral.classify(ccfg));
    r.net("integral", integral);
    Ok(r)
}

fn cmd_line(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &LineArgs,
) -> Result<Report, CliError> {
    let gamma = input::load_contour(grid, &a.contour)?;
    let mut r = Report::new("line");
    r.input("contour", a.contour.display());
    let integral = match (&a.fz, a.fields.is_empty()) {
        (Some(fz), true) => {
            let dom = domain_or(a.domain.as_ref(), 1, vec![[-8.0, 8.0]])?;
            let f = input::complex_rep(fz, dom[0])?;
            r.input("fz", fz);
            r.input("domain", fmt_domain(&dom));
            line_integral_complex(&f, &gamma, quad)?
        }
        (None, false) => {
            let dim = gamma.dim();
            let dom = domain_or(a.domain.as_ref(), dim, vec![[-8.0, 8.0]; dim])?;
            let mut fields = Vec::with_capacity(a.fields.len());
            for body in &a.fields {
                fields.push(input::real_rep(body, dom.clone())?);
            }
            for (i, body) in a.fields.iter().enumerate() {
                r.input(&format!("field{}", i + 1), body);
            }
            r.input("domain", fmt_domain(&dom));
            let refs: Vec<&membrane_calc::genfun::Representative> = fields.iter().collect();
            line_integral_real(&refs, &gamma, quad)?
        }
        _ => {
            return Err(CliError::Input(
                "give either --fz or one --field per axis, not both".into(),
            ))
        }
    };
    r.class("integral", integral.classify(ccfg));
    r.net("integral", integral);
    Ok(r)
}

fn contour_setup(
    grid: &Arc<EpsilonGrid>,
    ccfg: &ClassifyConfig,
    body: &str,
    contour: &std::path::Path,
    z0: &str,
    domain: Option<&String>,
) -> Result<(ContourSetup, GenNet), CliError> {
    let dom = domain_or(domain, 1, vec![[-8.0, 8.0]])?;
    let f = input::complex_rep(body, dom[0])?;
    let z0 = input::parse_net(grid, z0, None)?;
    let gamma = input::load_contour(grid, contour)?;
    let setup = ContourSetup::new(f, z0, gamma, ccfg)?;
    let separation = setup.separation().clone();
    Ok((setup, separation))
}

fn cmd_cauchy(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &CauchyArgs,
) -> Result<Report, CliError> {
    let (setup, separation) =
        contour_setup(grid, ccfg, &a.f, &a.contour, &a.z0, a.domain.as_ref())?;
    let cauchy = setup.cauchy_eval(quad, ccfg)?;
    let mut r = Report::new("contour-cauchy");
    r.input("f", &a.f);
    r.input("contour", a.contour.display());
    r.input("z0", &a.z0);
    r.class("gap", cauchy.gap);
    r.net("via_contour", cauchy.via_contour);
    r.net("direct", cauchy.direct);
    r.net("separation", separation);
    Ok(r)
}

fn cmd_taylor(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &TaylorArgs,
) -> Result<Report, CliError> {
    let (setup, _) = contour_setup(grid, ccfg, &a.f, &a.contour, &a.z0, a.domain.as_ref())?;
    let coeffs = setup.taylor_coefficients(a.n, quad)?;
    let mut r = Report::new("taylor");
    r.input("f", &a.f);
    r.input("contour", a.contour.display());
    r.input("z0", &a.z0);
    r.input("n", a.n);
    for (n, c) in coeffs.into_iter().enumerate() {
        r.net(&format!("a{n:02}"), c);
    }
    Ok(r)
}

fn cmd_green(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &GreenArgs,
) -> Result<Report, CliError> {
    let m = input::load_membrane(grid, &a.membrane, a.s)?;
    let gamma = input::load_contour(grid, &a.contour)?;
    let dom = domain_or(a.domain.as_ref(), 2, input::inflate(m.compact_box()))?;
    let p = input::real_rep(&a.p, dom.clone())?;
    let q = input::real_rep(&a.q, dom.clone())?;
    let green = green_check(&p, &q, &m, &gamma, quad, ccfg)?;
    let mut r = Report::new("green");
    r.input("p", &a.p);
    r.input("q", &a.q);
    r.input("contour", a.contour.display());
    r.input("membrane", a.membrane.display());
    r.input("domain", fmt_domain(&dom));
    r.class("gap", green.gap);
    r.net("boundary", green.boundary);
    r.net("area", green.area);
    Ok(r)
}

fn cmd_meanvalue(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &MeanvalueArgs,
) -> Result<Report, CliError> {
    let m = input::load_membrane(grid, &a.membrane, a.s)?;
    let dom = domain_or(a.domain.as_ref(), m.dim(), input::inflate(m.compact_box()))?;
    let f = input::real_rep(&a.f, dom.clone())?;
    let mv = mean_value_bound(&f, &m, quad, ccfg)?;
    let mut r = Report::new("meanvalue");
    r.input("f", &a.f);
    r.input("membrane", a.membrane.display());
    r.input("domain", fmt_domain(&dom));
    r.class("integral", mv.integral_class);
    r.net("integral", mv.integral);
    r.net("volume", mv.volume);
    r.scalar("r_star", mv.r_star);
    Ok(r)
}

fn cmd_transport(
    grid: &Arc<EpsilonGrid>,
    ccfg: &ClassifyConfig,
    a: &TransportArgs,
) -> Result<Report, CliError> {
    let b = input::parse_net_list(grid, &a.b, None)?;
    let dim = b.len();
    let gdom = domain_or(a.gdomain.as_ref(), dim, vec![[-10.0, 10.0]; dim])?;
    let g = input::real_rep(&a.g, gdom.clone())?;
    let mut problem = TransportProblem::new(b, g, ccfg)?;
    if let Some(src) = &a.source {
        let mut sdom = domain_or(
            a.sdomain.as_ref(),
            dim + 1,
            vec![[-10.0, 10.0]; dim + 1],
        )?;
        let time = sdom.pop().expect("time axis");
        let time = if a.sdomain.is_some() { time } else { [-(a.margin + 1.0), 5.0] };
        problem = problem.with_source(input::spacetime_rep(src, sdom, time)?, a.margin)?;
    }
    let solution = transport_solve(problem.clone());
    let coords = input::parse_net_list(grid, &a.x, None)?;
    let point = GenPoint::from_nets(coords, a.pad)?;
    let t = input::parse_net(grid, &a.t, None)?;
    let value = solution.eval(&point, &t)?;
    let mut r = Report::new("transport");
    r.input("g", &a.g);
    r.input("b", &a.b);
    if let Some(src) = &a.source {
        r.input("source", src);
        r.input("margin", a.margin);
    }
    r.input("x", &a.x);
    r.input("t", &a.t);
    r.class("value", value.classify(ccfg));
    r.net("value", value);
    if a.residual {
        let probes = vec![(point, t)];
        let res = residual_check(&solution, Pde::Transport(&problem), &probes, a.fd_step, ccfg)?;
        r.input("fd_step", a.fd_step);
        r.class("residual_raw", res.raw);
        r.class("residual_scaled", res.scaled);
        r.net("residual_worst", res.worst);
        r.net("residual_floor", res.floor);
    }
    Ok(r)
}

fn cmd_wave(
    grid: &Arc<EpsilonGrid>,
    ccfg: &ClassifyConfig,
    a: &WaveArgs,
) -> Result<Report, CliError> {
    let dom = domain_or(a.domain.as_ref(), 1, vec![[-20.0, 20.0]])?;
    let g = input::real_rep(&a.g, dom.clone())?;
    let h = input::real_rep(&a.h, dom.clone())?;
    let problem = WaveProblem::new(g, h)?;
    let solution = wave_solve(problem.clone());
    let x = input::parse_net(grid, &a.x, None)?;
    let t = input::parse_net(grid, &a.t, None)?;
    let value = solution.eval(&x, &t)?;
    let mut r = Report::new("wave");
    r.input("g", &a.g);
    r.input("h", &a.h);
    r.input("x", &a.x);
    r.input("t", &a.t);
    r.class("value", value.classify(ccfg));
    r.net("value", value);
    if a.residual {
        let probes = vec![(GenPoint::from_nets(vec![x], a.pad)?, t)];
        let res = residual_check(&solution, Pde::Wave(&problem), &probes, a.fd_step, ccfg)?;
        r.input("fd_step", a.fd_step);
        r.class("residual_raw", res.raw);
        r.class("residual_scaled", res.scaled);
        r.net("residual_worst", res.worst);
        r.net("residual_floor", res.floor);
    }
    Ok(r)
}

fn cmd_consistency(
    grid: &Arc<EpsilonGrid>,
    quad: &QuadConfig,
    ccfg: &ClassifyConfig,
    a: &ConsistencyArgs,
) -> Result<Report, CliError> {
    let dom = domain_or(a.domain.as_ref(), 1, vec![[-8.0, 8.0]])?;
    let f = input::real_rep(&a.f, dom)?;
    let aa = input::parse_net(grid, &a.a, None)?;
    let bb = input::parse_net(grid, &a.b, None)?;
    let rep = interval_consistency(&f, &aa, &bb, quad, ccfg)?;
    let mut r = Report::new("consistency");
    r.input("f", &a.f);
    r.input("a", &a.a);
    r.input("b", &a.b);
    r.class("gap", rep.gap);
    r.net("membrane", rep.membrane);
    r.net("line", rep.line);
    Ok(r)
}
