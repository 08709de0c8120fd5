use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::Error;
use crate::genfun::{Codomain, Representative};
use crate::gennum::{ClassifyConfig, GenNet, NetClass, NetKind};
use crate::membrane::{History, PreMembrane, Shape};
use crate::value::Value;
use crate::Result;

/// Quadrature resolution knobs.  All integrals are computed epsilon-wise;
/// the entries here control the per-epsilon node budgets.
#[derive(Clone, Debug)]
pub struct QuadConfig {
    /// Gauss-Legendre order per panel.
    pub gauss_order: usize,
    /// Composite panels for one-dimensional integrals and curve parameters.
    pub segments: usize,
    /// Radial nodes for ball integrals.
    pub ball_radial: usize,
    /// Angular nodes (midpoint rule; periodic smooth integrands) for balls.
    pub ball_angular: usize,
    /// Uniform scan resolution per slice when locating an indicator
    /// region's boundary; roots are then polished by bisection.
    pub indicator_scan: usize,
    /// Absolute floor for the indicator refinement cross-check.
    pub abs_tol: f64,
    /// Relative floor under which a per-epsilon difference of two pipelines
    /// is attributed to quadrature roundoff and snapped to zero.
    pub gap_rel_floor: f64,
}

impl Default for QuadConfig {
    fn default() -> QuadConfig {
        QuadConfig {
            gauss_order: 64,
            segments: 8,
            ball_radial: 64,
            ball_angular: 128,
            indicator_scan: 128,
            abs_tol: 1e-10,
            gap_rel_floor: 1e-9,
        }
    }
}

/// Gauss-Legendre rule on [-1, 1].
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

impl GaussRule {
    pub fn new(n: usize) -> GaussRule {
        assert!(n >= 1, "gauss order must be at least 1");
        if n == 1 {
            return GaussRule { nodes: vec![0.0], weights: vec![2.0] };
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Tricomi-style initial guess, then Newton on P_n.
            let mut x =
                (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_pair(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (_, d2) = legendre_pair(n, x);
                    dp = d2;
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussRule { nodes, weights }
    }
}

/// Shared rule cache: orders are few, rules are immutable.
pub(crate) fn rule(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    Arc::clone(
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussRule::new(n))),
    )
}

/// Mapped composite Gauss nodes on [a, b]: `panels` panels of order `order`.
pub(crate) fn composite_nodes(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let r = rule(order);
    let mut out = Vec::with_capacity(panels * order);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in r.nodes.iter().zip(&r.weights) {
            out.push((mid + half * x, half * w));
        }
    }
    out
}

type Integrand<'a> = dyn FnMut(&[f64]) -> Result<Value> + 'a;

fn interval_integral(
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
    f: &mut Integrand,
) -> Result<Value> {
    let mut acc = Value::Real(0.0);
    if a == b {
        return Ok(acc);
    }
    for (x, w) in composite_nodes(a, b, panels, order) {
        acc = acc.add(f(&[x])?.scale(w));
    }
    Ok(acc)
}

/// Per-axis composite resolution for box tensor products: full budget in one
/// dimension, reduced panel counts / orders in higher dimensions to keep the
/// node count bounded (smooth integrands only need modest orders).
fn box_axis_plan(dim: usize, cfg: &QuadConfig) -> (usize, usize) {
    match dim {
        1 => (cfg.segments, cfg.gauss_order),
        2 => ((cfg.segments / 4).max(1), cfg.gauss_order),
        _ => (1, cfg.gauss_order.min(32)),
    }
}

fn box_integral(
    axes: &[(f64, f64)],
    cfg: &QuadConfig,
    f: &mut Integrand,
) -> Result<Value> {
    let dim = axes.len();
    let (panels, order) = box_axis_plan(dim, cfg);
    let per_axis: Vec<Vec<(f64, f64)>> = axes
        .iter()
        .map(|&(a, b)| composite_nodes(a, b, panels, order))
        .collect();
    let mut acc = Value::Real(0.0);
    match dim {
        1 => {
            for &(x, w) in &per_axis[0] {
                acc = acc.add(f(&[x])?.scale(w));
            }
        }
        2 => {
            for &(x, wx) in &per_axis[0] {
                for &(y, wy) in &per_axis[1] {
                    acc = acc.add(f(&[x, y])?.scale(wx * wy));
                }
            }
        }
        3 => {
            for &(x, wx) in &per_axis[0] {
                for &(y, wy) in &per_axis[1] {
                    for &(z, wz) in &per_axis[2] {
                        acc = acc.add(f(&[x, y, z])?.scale(wx * wy * wz));
                    }
                }
            }
        }
        _ => {
            return Err(Error::DimensionMismatch(
                "box integration supports dimensions 1..=3".into(),
            ))
        }
    }
    Ok(acc)
}

fn ball_integral(
    center: &[f64],
    radius: f64,
    cfg: &QuadConfig,
    f: &mut Integrand,
) -> Result<Value> {
    let mut acc = Value::Real(0.0);
    match center.len() {
        1 => {
            return interval_integral(
                center[0] - radius,
                center[0] + radius,
                cfg.segments,
                cfg.gauss_order,
                f,
            )
        }
        2 => {
            // Polar: Gauss radially, midpoint angularly (periodic smooth).
            let radial = composite_nodes(0.0, radius, 1, cfg.ball_radial);
            let m = cfg.ball_angular;
            let wt = 2.0 * std::f64::consts::PI / m as f64;
            for &(rho, wr) in &radial {
                for j in 0..m {
                    let th = wt * (j as f64 + 0.5);
                    let x = center[0] + rho * th.cos();
                    let y = center[1] + rho * th.sin();
                    acc = acc.add(f(&[x, y])?.scale(wr * wt * rho));
                }
            }
        }
        3 => {
            // Spherical: Gauss radially and in the polar angle, midpoint in
            // azimuth; Jacobian rho^2 sin(phi).
            let radial = composite_nodes(0.0, radius, 1, cfg.ball_radial);
            let polar = composite_nodes(0.0, std::f64::consts::PI, 1, cfg.gauss_order.min(32));
            let m = (cfg.ball_angular / 2).max(16);
            let wt = 2.0 * std::f64::consts::PI / m as f64;
            for &(rho, wr) in &radial {
                for &(phi, wp) in &polar {
                    let (sp, cp) = phi.sin_cos();
                    for j in 0..m {
                        let th = wt * (j as f64 + 0.5);
                        let x = center[0] + rho * sp * th.cos();
                        let y = center[1] + rho * sp * th.sin();
                        let z = center[2] + rho * cp;
                        acc = acc.add(f(&[x, y, z])?.scale(wr * wp * wt * rho * rho * sp));
                    }
                }
            }
        }
        _ => {
            return Err(Error::DimensionMismatch(
                "ball integration supports dimensions 1..=3".into(),
            ))
        }
    }
    Ok(acc)
}

/// Locate the inside sub-intervals of one slice line by a uniform sign scan
/// plus bisection polish, then integrate `f` over each with a single Gauss
/// panel.  `level` must be negative-or-zero inside.
fn slice_integral(
    lo: f64,
    hi: f64,
    scan: usize,
    order: usize,
    level: &mut dyn FnMut(f64) -> Result<f64>,
    f: &mut dyn FnMut(f64) -> Result<Value>,
) -> Result<Value> {
    let n = scan.max(8);
    let h = (hi - lo) / n as f64;
    let mut inside_prev = level(lo)? <= 0.0;
    let starts_inside = inside_prev;
    let mut cuts: Vec<f64> = Vec::new();
    for j in 1..=n {
        let y = if j == n { hi } else { lo + h * j as f64 };
        let inside = level(y)? <= 0.0;
        if inside != inside_prev {
            // Bisect the crossing to machine resolution.
            let mut a = lo + h * (j - 1) as f64;
            let mut b = y;
            for _ in 0..52 {
                let mid = 0.5 * (a + b);
                if (level(mid)? <= 0.0) == inside_prev {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            cuts.push(0.5 * (a + b));
            inside_prev = inside;
        }
    }
    // Walk the cuts, toggling; collect inside intervals.
    let mut acc = Value::Real(0.0);
    let mut cursor = lo;
    let mut inside = starts_inside;
    cuts.push(hi);
    for c in cuts {
        if inside && c > cursor {
            for (y, w) in composite_nodes(cursor, c, 1, order) {
                acc = acc.add(f(y)?.scale(w));
            }
        }
        cursor = c;
        inside = !inside;
    }
    Ok(acc)
}

fn gauss_estimate(
    lo: f64,
    hi: f64,
    order: usize,
    feval: &mut dyn FnMut(f64) -> Result<Value>,
) -> Result<Value> {
    let mut acc = Value::Real(0.0);
    for (x, w) in composite_nodes(lo, hi, 1, order) {
        acc = acc.add(feval(x)?.scale(w));
    }
    Ok(acc)
}

/// Adaptive one-dimensional integration for outer slice profiles: these are
/// piecewise analytic but carry square-root kinks where slices appear or
/// vanish, so fixed composite panels stall.  Panels where the order-16 and
/// order-32 estimates disagree are bisected; kinks end up isolated in
/// near-zero-width panels.  `budget` caps the total number of splits.
fn adaptive_outer(
    lo: f64,
    hi: f64,
    depth: usize,
    budget: &mut usize,
    feval: &mut dyn FnMut(f64) -> Result<Value>,
) -> Result<Value> {
    let coarse = gauss_estimate(lo, hi, 16, feval)?;
    let fine = gauss_estimate(lo, hi, 32, feval)?;
    let delta = fine.sub(coarse).magnitude();
    if delta <= 1e-13 * (1.0 + fine.magnitude()) || depth == 0 || *budget == 0 {
        return Ok(fine);
    }
    *budget = budget.saturating_sub(1);
    let mid = 0.5 * (lo + hi);
    let left = adaptive_outer(lo, mid, depth - 1, budget, feval)?;
    let right = adaptive_outer(mid, hi, depth - 1, budget, feval)?;
    Ok(left.add(right))
}

/// Indicator-region integral at one epsilon: adaptive outer panels over the
/// leading axis, slice decomposition along the last axis.  The
/// three-dimensional case keeps a fixed outer tensor (order 32 per axis) —
/// adequate for the smooth predicates this engine targets, and bounded in
/// cost.
fn indicator_integral(
    m: &PreMembrane,
    k: usize,
    bounding_box: &[[f64; 2]],
    scan: usize,
    cfg: &QuadConfig,
    f: &mut Integrand,
) -> Result<Value> {
    let dim = bounding_box.len();
    let mut lctx = m.level_ctx();
    let [slo, shi] = bounding_box[dim - 1];
    let order = cfg.gauss_order;
    match dim {
        1 => {
            let mut coords = [0.0f64];
            slice_integral(
                slo,
                shi,
                scan,
                order,
                &mut |y| {
                    coords[0] = y;
                    m.level_at(&mut lctx, k, &coords)
                },
                &mut |y| f(&[y]),
            )
        }
        2 => {
            let mut budget = 256usize;
            let mut profile = |x: f64| {
                slice_integral(
                    slo,
                    shi,
                    scan,
                    order,
                    &mut |y| m.level_at(&mut lctx, k, &[x, y]),
                    &mut |y| f(&[x, y]),
                )
            };
            adaptive_outer(
                bounding_box[0][0],
                bounding_box[0][1],
                26,
                &mut budget,
                &mut profile,
            )
        }
        3 => {
            let o1 = composite_nodes(bounding_box[0][0], bounding_box[0][1], 1, order.min(32));
            let o2 = composite_nodes(bounding_box[1][0], bounding_box[1][1], 1, order.min(32));
            let mut acc = Value::Real(0.0);
            for &(x, wx) in &o1 {
                for &(y, wy) in &o2 {
                    let inner = slice_integral(
                        slo,
                        shi,
                        scan,
                        order,
                        &mut |z| m.level_at(&mut lctx, k, &[x, y, z]),
                        &mut |z| f(&[x, y, z]),
                    )?;
                    acc = acc.add(inner.scale(wx * wy));
                }
            }
            Ok(acc)
        }
        _ => Err(Error::DimensionMismatch(
            "indicator integration supports dimensions 1..=3".into(),
        )),
    }
}

/// One epsilon sample of the membrane integral.
fn eps_integral(
    f: &Representative,
    m: &PreMembrane,
    k: usize,
    scan: usize,
    cfg: &QuadConfig,
) -> Result<Value> {
    let eps = m.grid().samples()[k];
    let mut fctx = f.eval_ctx();
    let mut eval = |coords: &[f64]| f.eval_fast(&mut fctx, eps, coords);
    match m.shape() {
        Shape::Interval { a, b } => interval_integral(
            a.value_at(k).re(),
            b.value_at(k).re(),
            cfg.segments,
            cfg.gauss_order,
            &mut eval,
        ),
        Shape::Box { axes } => {
            let spans: Vec<(f64, f64)> = axes
                .iter()
                .map(|(a, b)| (a.value_at(k).re(), b.value_at(k).re()))
                .collect();
            box_integral(&spans, cfg, &mut eval)
        }
        Shape::Ball { center, radius } => {
            let c: Vec<f64> = center.iter().map(|n| n.value_at(k).re()).collect();
            ball_integral(&c, radius.value_at(k).re(), cfg, &mut eval)
        }
        Shape::Indicator { .. } => {
            let bb = m.scan_box(k);
            indicator_integral(m, k, &bb, scan, cfg, &mut eval)
        }
        Shape::CurveImage { .. } => Err(Error::Hypothesis(
            "curve traces carry no volume integral; use line integrals".into(),
        )),
    }
}

fn check_membrane_in_domain(f: &Representative, m: &PreMembrane) -> Result<()> {
    if f.arity() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "integrand arity {} vs membrane dimension {}",
            f.arity(),
            m.dim()
        )));
    }
    for (axis, ([mlo, mhi], [dlo, dhi])) in
        m.compact_box().iter().zip(f.domain_box()).enumerate()
    {
        if !(dlo <= mlo && mhi <= dhi) {
            return Err(Error::Compactness(format!(
                "membrane axis {} [{mlo}, {mhi}] escapes the integrand domain [{dlo}, {dhi}]",
                axis + 1
            )));
        }
    }
    Ok(())
}

/// The membrane integral `eps -> integral of f_eps over M_eps`.
///
/// Indicator regions additionally get a refinement cross-check: at three
/// probe epsilons the boundary scan is re-run at doubled resolution, and a
/// disagreement beyond `abs_tol` (or 1e-9 relative) reports the region as
/// integrability-suspect rather than returning a silently wrong value.
pub fn integrate_membrane(
    f: &Representative,
    m: &PreMembrane,
    cfg: &QuadConfig,
) -> Result<GenNet> {
    check_membrane_in_domain(f, m)?;
    let grid = Arc::clone(m.grid());
    let values: Result<Vec<Value>> = (0..grid.len())
        .into_par_iter()
        .map(|k| eps_integral(f, m, k, cfg.indicator_scan, cfg))
        .collect();
    let values = values?;
    if matches!(m.shape(), Shape::Indicator { .. }) {
        let probes = [grid.tail_start() / 2, grid.tail_start(), grid.len() - 1];
        for k in probes {
            let refined = eps_integral(f, m, k, cfg.indicator_scan * 2, cfg)?;
            let d = values[k].sub(refined).magnitude();
            let tol = cfg.abs_tol.max(1e-9 * values[k].magnitude());
            if d > tol {
                return Err(Error::IntegrabilitySuspect(format!(
                    "doubling the boundary scan moved the integral by {d:.3e} at eps index {k}"
                )));
            }
        }
    }
    GenNet::new(grid, values)
}

/// Volume of an indicator region via the slicing engine (unit integrand).
pub fn indicator_volume(m: &PreMembrane, cfg: &QuadConfig) -> Result<GenNet> {
    let one = Representative::new("1", m.dim(), m.compact_box().to_vec(), Codomain::Real)?;
    integrate_membrane(&one, m, cfg)
}

fn check_curve_in_domain(f: &Representative, gamma: &History) -> Result<()> {
    if f.arity() != gamma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "field arity {} vs curve dimension {}",
            f.arity(),
            gamma.dim()
        )));
    }
    for (axis, ([glo, ghi], [dlo, dhi])) in
        gamma.compact_box().iter().zip(f.domain_box()).enumerate()
    {
        if !(dlo <= glo && ghi <= dhi) {
            return Err(Error::Compactness(format!(
                "curve image axis {} [{glo}, {ghi}] escapes the field domain [{dlo}, {dhi}]",
                axis + 1
            )));
        }
    }
    Ok(())
}

/// Line integral of the 1-form `sum_i fields[i] dx_i` along a history:
/// `eps -> integral_0^1 <F(gamma_eps(t)) | gamma_eps'(t)> dt`.
pub fn line_integral_real(
    fields: &[&Representative],
    gamma: &History,
    cfg: &QuadConfig,
) -> Result<GenNet> {
    if fields.len() != gamma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} field components for a {}-dimensional curve",
            fields.len(),
            gamma.dim()
        )));
    }
    for f in fields {
        check_curve_in_domain(f, gamma)?;
    }
    let grid = Arc::clone(gamma.grid());
    let nodes = composite_nodes(0.0, 1.0, cfg.segments, cfg.gauss_order);
    let values: Result<Vec<Value>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let eps = grid.samples()[k];
            let mut ctxs: Vec<_> = fields.iter().map(|f| f.eval_ctx()).collect();
            let mut acc = Value::Real(0.0);
            for &(t, w) in &nodes {
                let p = gamma.point_at(k, t)?;
                let v = gamma.velocity_at(k, t)?;
                for ((f, ctx), vel) in fields.iter().zip(&mut ctxs).zip(&v) {
                    let fv = f.eval_fast(ctx, eps, &p)?;
                    acc = acc.add(fv.scale(w * vel));
                }
            }
            Ok(acc)
        })
        .collect();
    GenNet::new(grid, values?)
}

/// Complex contour integral `eps -> integral f(gamma(t)) gamma'(t) dt` for a
/// plane curve read as `x + iy`.
pub fn line_integral_complex(
    f: &Representative,
    gamma: &History,
    cfg: &QuadConfig,
) -> Result<GenNet> {
    if gamma.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "complex contour integrals need a plane curve".into(),
        ));
    }
    if f.arity() != 1 {
        return Err(Error::DimensionMismatch(
            "complex contour integrand must have arity 1 (the complex coordinate)".into(),
        ));
    }
    // Domain containment: both real and imaginary parts of the curve must
    // stay inside the integrand's (square) reference box on axis 1.
    let [dlo, dhi] = f.domain_box()[0];
    for [glo, ghi] in gamma.compact_box() {
        if !(dlo <= *glo && *ghi <= dhi) {
            return Err(Error::Compactness(
                "curve image escapes the integrand's reference box".into(),
            ));
        }
    }
    let grid = Arc::clone(gamma.grid());
    let nodes = composite_nodes(0.0, 1.0, cfg.segments, cfg.gauss_order);
    let values: Result<Vec<Value>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let eps = grid.samples()[k];
            let mut acc = Value::Real(0.0);
            for &(t, w) in &nodes {
                let p = gamma.point_at(k, t)?;
                let v = gamma.velocity_at(k, t)?;
                let z = Value::complex(p[0], p[1]);
                let dz = Value::complex(v[0], v[1]);
                let fv = f.eval_raw(eps, &[z])?;
                acc = acc.add(fv.mul(dz).scale(w));
            }
            Ok(acc)
        })
        .collect();
    GenNet::new(grid, values?)
}

/// Difference net with per-epsilon roundoff snapping: entries whose
/// magnitude stays below `rel_floor * max(1, |x|, |y|)` are treated as
/// quadrature noise and replaced by exact zero.  Use it to compare two
/// pipelines computing the same quantity — not as general subtraction.
pub fn gap_net(x: &GenNet, y: &GenNet, rel_floor: f64) -> Result<GenNet> {
    x.zip(y, |a, b| {
        let d = a.sub(b);
        let scale = 1.0f64.max(a.magnitude()).max(b.magnitude());
        if d.magnitude() <= rel_floor * scale {
            Value::Real(0.0)
        } else {
            d
        }
    })
}

/// Classify the roundoff-snapped gap between two pipelines.
pub fn classify_gap(
    x: &GenNet,
    y: &GenNet,
    cfg: &QuadConfig,
    ccfg: &ClassifyConfig,
) -> Result<NetClass> {
    Ok(gap_net(x, y, cfg.gap_rel_floor)?.classify(ccfg))
}

/// Two-pipeline comparison of the plane Green identity for the 1-form
/// `P dx + Q dy` on a region with positively oriented boundary.
pub struct GreenReport {
    pub boundary: GenNet,
    pub area: GenNet,
    pub gap: NetClass,
}

pub fn green_check(
    p: &Representative,
    q: &Representative,
    omega: &PreMembrane,
    gamma: &History,
    cfg: &QuadConfig,
    ccfg: &ClassifyConfig,
) -> Result<GreenReport> {
    if omega.dim() != 2 || gamma.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "the Green identity lives in the plane".into(),
        ));
    }
    let flags = gamma.flags();
    if !(flags.closed && flags.simple && flags.positively_oriented) {
        return Err(Error::Hypothesis(
            "Green boundary must be declared closed, simple, and positively oriented".into(),
        ));
    }
    let boundary = line_integral_real(&[p, q], gamma, cfg)?;
    let qx = q.partial("x1")?;
    let py = p.partial("x2")?;
    let area = integrate_membrane(&qx, omega, cfg)?
        .sub(&integrate_membrane(&py, omega, cfg)?)?;
    let gap = classify_gap(&boundary, &area, cfg, ccfg)?;
    Ok(GreenReport { boundary, area, gap })
}

/// Sharp-scale mean value bound: the largest r (0.01 grained, in
/// [-20, 20]) with `|integral_eps| <= volume_eps * eps^r` on every tail
/// sample.  `+inf` when the integral is null, `-inf` when no exponent in
/// range works.
pub struct MeanValueReport {
    pub integral: GenNet,
    pub volume: GenNet,
    pub integral_class: NetClass,
    pub r_star: f64,
}

pub fn mean_value_bound(
    f: &Representative,
    m: &PreMembrane,
    cfg: &QuadConfig,
    ccfg: &ClassifyConfig,
) -> Result<MeanValueReport> {
    let volume = m.volume()?;
    if volume.classify(ccfg).kind == NetKind::Null {
        return Err(Error::Hypothesis(
            "membrane volume is null: the mean value bound is degenerate".into(),
        ));
    }
    let integral = integrate_membrane(f, m, cfg)?;
    let integral_class = integral.classify(ccfg);
    if integral_class.kind == NetKind::Null {
        return Ok(MeanValueReport { integral, volume, integral_class, r_star: f64::INFINITY });
    }
    let grid = Arc::clone(m.grid());
    let tail: Vec<(f64, f64, f64)> = (grid.tail_start()..grid.len())
        .map(|k| {
            (
                grid.samples()[k],
                integral.value_at(k).magnitude(),
                volume.value_at(k).magnitude(),
            )
        })
        .collect();
    let mut r_star = f64::NEG_INFINITY;
    let mut step = 2000i64; // r = step/100: descend from 20.00
    while step >= -2000 {
        let r = step as f64 / 100.0;
        let ok = tail
            .iter()
            .all(|&(e, i, v)| i <= v * e.powf(r) * (1.0 + 1e-12));
        if ok {
            r_star = r;
            break;
        }
        step -= 1;
    }
    Ok(MeanValueReport { integral, volume, integral_class, r_star })
}

/// One-dimensional consistency: the membrane integral over [a, b] against
/// the direct parameterized line integral of the same data.
pub struct ConsistencyReport {
    pub membrane: GenNet,
    pub line: GenNet,
    pub gap: NetClass,
}

pub fn interval_consistency(
    f: &Representative,
    a: &GenNet,
    b: &GenNet,
    cfg: &QuadConfig,
    ccfg: &ClassifyConfig,
) -> Result<ConsistencyReport> {
    if f.arity() != 1 {
        return Err(Error::DimensionMismatch(
            "interval consistency applies to one-dimensional data".into(),
        ));
    }
    let m = PreMembrane::interval(a.clone(), b.clone())?;
    let membrane = integrate_membrane(f, &m, cfg)?;
    let grid = Arc::clone(m.grid());
    let nodes = composite_nodes(0.0, 1.0, cfg.segments, cfg.gauss_order);
    let values: Result<Vec<Value>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let eps = grid.samples()[k];
            let av = a.value_at(k).re();
            let bv = b.value_at(k).re();
            let span = bv - av;
            let mut fctx = f.eval_ctx();
            let mut acc = Value::Real(0.0);
            for &(t, w) in &nodes {
                let x = av + t * span;
                acc = acc.add(f.eval_fast(&mut fctx, eps, &[x])?.scale(w * span));
            }
            Ok(acc)
        })
        .collect();
    let line = GenNet::new(grid, values?)?;
    let gap = classify_gap(&membrane, &line, cfg, ccfg)?;
    Ok(ConsistencyReport { membrane, line, gap })
}
