//! Problem-input parsing: net specs, domain boxes, membrane files, and
//! contour files.

use std::path::Path;
use std::sync::Arc;

use membrane_calc::genfun::{Codomain, Representative};
use membrane_calc::gennum::GenNet;
use membrane_calc::grid::EpsilonGrid;
use membrane_calc::membrane::{History, HistoryFlags, PreMembrane};
use membrane_calc::Value;
use serde::Deserialize;

use crate::CliError;

fn input(msg: String) -> CliError {
    CliError::Input(msg)
}

/// A net given on the command line or inside a problem file:
/// - `alpha:R` — the gauge power `eps -> eps^R`; `alpha:s` takes R from `--s`
/// - anything else — an expression in `eps` (`pi` and `i` are available)
pub fn parse_net(
    grid: &Arc<EpsilonGrid>,
    spec: &str,
    s_flag: Option<f64>,
) -> Result<GenNet, CliError> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("alpha:") {
        let r: f64 = if rest == "s" {
            s_flag.ok_or_else(|| input("net spec uses `alpha:s` but --s was not given".into()))?
        } else {
            rest.parse().map_err(|_| input(format!("bad gauge power `{rest}`")))?
        };
        if !r.is_finite() {
            return Err(input(format!("gauge power {r} must be finite")));
        }
        return Ok(GenNet::alpha(Arc::clone(grid), r));
    }
    let e = membrane_calc::expr::parse(spec, &[] as &[&str]).map_err(CliError::Core)?;
    GenNet::from_expr(Arc::clone(grid), &e).map_err(CliError::Core)
}

/// Comma-separated list of net specs (vector-valued inputs).
pub fn parse_net_list(
    grid: &Arc<EpsilonGrid>,
    spec: &str,
    s_flag: Option<f64>,
) -> Result<Vec<GenNet>, CliError> {
    spec.split(',').map(|c| parse_net(grid, c, s_flag)).collect()
}

/// A net inside a JSON problem file: a number, a spec string, an explicit
/// per-epsilon value array, or `{"re": .., "im": ..}`.
fn net_from_json(
    grid: &Arc<EpsilonGrid>,
    v: &serde_json::Value,
    s_flag: Option<f64>,
) -> Result<GenNet, CliError> {
    match v {
        serde_json::Value::Number(n) => {
            let x = n.as_f64().ok_or_else(|| input(format!("bad number {n}")))?;
            Ok(GenNet::constant(Arc::clone(grid), Value::Real(x)))
        }
        serde_json::Value::String(s) => parse_net(grid, s, s_flag),
        serde_json::Value::Array(items) => {
            if items.len() != grid.len() {
                return Err(input(format!(
                    "explicit net has {} values for a {}-sample grid",
                    items.len(),
                    grid.len()
                )));
            }
            let mut values = Vec::with_capacity(items.len());
            for item in items {
                let x = item
                    .as_f64()
                    .ok_or_else(|| input("explicit net values must be numbers".into()))?;
                values.push(Value::Real(x));
            }
            GenNet::new(Arc::clone(grid), values).map_err(CliError::Core)
        }
        serde_json::Value::Object(o) => {
            let part = |key: &str| -> Result<f64, CliError> {
                match o.get(key) {
                    None => Ok(0.0),
                    Some(x) => x
                        .as_f64()
                        .ok_or_else(|| input(format!("`{key}` must be a number"))),
                }
            };
            Ok(GenNet::constant(Arc::clone(grid), Value::complex(part("re")?, part("im")?)))
        }
        other => Err(input(format!("cannot read a net from {other}"))),
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum MembraneFile {
    Interval { a: serde_json::Value, b: serde_json::Value },
    Box { axes: Vec<(serde_json::Value, serde_json::Value)> },
    Ball { center: Vec<serde_json::Value>, radius: serde_json::Value },
    Indicator { predicate: String, dim: usize, bounding_box: Vec<[f64; 2]> },
}

pub fn load_membrane(
    grid: &Arc<EpsilonGrid>,
    path: &Path,
    s_flag: Option<f64>,
) -> Result<PreMembrane, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read membrane {}: {e}", path.display())))?;
    let spec: MembraneFile = serde_json::from_str(&text)
        .map_err(|e| input(format!("membrane {}: {e}", path.display())))?;
    let m = match spec {
        MembraneFile::Interval { a, b } => PreMembrane::interval(
            net_from_json(grid, &a, s_flag)?,
            net_from_json(grid, &b, s_flag)?,
        ),
        MembraneFile::Box { axes } => {
            let mut spans = Vec::with_capacity(axes.len());
            for (a, b) in &axes {
                spans.push((net_from_json(grid, a, s_flag)?, net_from_json(grid, b, s_flag)?));
            }
            PreMembrane::boxed(spans)
        }
        MembraneFile::Ball { center, radius } => {
            let mut c = Vec::with_capacity(center.len());
            for v in &center {
                c.push(net_from_json(grid, v, s_flag)?);
            }
            PreMembrane::ball(c, net_from_json(grid, &radius, s_flag)?)
        }
        MembraneFile::Indicator { predicate, dim, bounding_box } => {
            PreMembrane::indicator(Arc::clone(grid), &predicate, dim, bounding_box)
        }
    };
    m.map_err(CliError::Core)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContourFile {
    components: Vec<String>,
    growth_c: f64,
    #[serde(default)]
    growth_n: u32,
    #[serde(default)]
    closed: bool,
    #[serde(default)]
    simple: bool,
    #[serde(default)]
    positively_oriented: bool,
    #[serde(default)]
    contractible: bool,
}

pub fn load_contour(grid: &Arc<EpsilonGrid>, path: &Path) -> Result<History, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| input(format!("cannot read contour {}: {e}", path.display())))?;
    let spec: ContourFile = serde_json::from_str(&text)
        .map_err(|e| input(format!("contour {}: {e}", path.display())))?;
    History::new(
        Arc::clone(grid),
        &spec.components,
        (spec.growth_c, spec.growth_n),
        HistoryFlags {
            closed: spec.closed,
            simple: spec.simple,
            positively_oriented: spec.positively_oriented,
            contractible: spec.contractible,
        },
    )
    .map_err(CliError::Core)
}

/// Domain box given as `lo:hi` pairs separated by commas, one per axis.
pub fn parse_domain(spec: &str, arity: usize) -> Result<Vec<[f64; 2]>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| input(format!("domain axis `{part}` is not lo:hi")))?;
        let lo: f64 = lo.trim().parse().map_err(|_| input(format!("bad bound `{lo}`")))?;
        let hi: f64 = hi.trim().parse().map_err(|_| input(format!("bad bound `{hi}`")))?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(input(format!("domain axis [{lo}, {hi}] invalid")));
        }
        out.push([lo, hi]);
    }
    if out.len() != arity {
        return Err(input(format!("domain has {} axes, expected {arity}", out.len())));
    }
    Ok(out)
}

/// Default integrand domain: the membrane hull inflated by one unit.
pub fn inflate(hull: &[[f64; 2]]) -> Vec<[f64; 2]> {
    hull.iter().map(|[lo, hi]| [lo - 1.0, hi + 1.0]).collect()
}

/// Real representative on `x1..xn`.
pub fn real_rep(body: &str, dom: Vec<[f64; 2]>) -> Result<Representative, CliError> {
    let names: Vec<String> = (1..=dom.len()).map(|i| format!("x{i}")).collect();
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    Representative::with_vars(body, &vars, dom, Codomain::Real).map_err(CliError::Core)
}

/// Space-time representative on `x1..xn, t`.
pub fn spacetime_rep(
    body: &str,
    space: Vec<[f64; 2]>,
    time: [f64; 2],
) -> Result<Representative, CliError> {
    let mut names: Vec<String> = (1..=space.len()).map(|i| format!("x{i}")).collect();
    names.push("t".into());
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut dom = space;
    dom.push(time);
    Representative::with_vars(body, &vars, dom, Codomain::Real).map_err(CliError::Core)
}

/// Complex representative on the single variable `z`.
pub fn complex_rep(body: &str, dom: [f64; 2]) -> Result<Representative, CliError> {
    Representative::with_vars(body, &["z"], vec![dom], Codomain::Complex)
        .map_err(CliError::Core)
}
