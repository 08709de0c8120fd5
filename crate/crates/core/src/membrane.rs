use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::expr::{differentiate, parse, Env, Expr};
use crate::genfun::Representative;
use crate::gennum::{ClassifyConfig, GenNet, NetClass, NetKind};
use crate::grid::{compatible, EpsilonGrid};
use crate::value::Value;
use crate::Result;

/// How an indicator region decides membership.
#[derive(Clone, Debug)]
pub enum RegionFn {
    /// `{ x : p(eps, x) <= 0 }` for a continuously differentiable predicate.
    Level(Expr),
    /// The image of `inner` under `x -> x + psi(eps, x)`: a point `y` belongs
    /// iff the fixed-point inverse `y - psi(x*)` lands in `inner`.  `base_box`
    /// is the unshifted hull; `margins` holds the certified per-epsilon
    /// displacement bound, so scan windows shrink back onto the base hull
    /// exactly where the displacement underflows to zero.
    Pullback {
        inner: Box<Shape>,
        psi: Vec<Expr>,
        base_box: Vec<[f64; 2]>,
        margins: Vec<f64>,
    },
}

/// Constructive region variants.  Exact variants carry per-epsilon endpoint
/// nets; `Indicator` is the general fallback; `CurveImage` records a curve's
/// trace (usable as support for distance computations, but carrying no
/// n-dimensional volume).
#[derive(Clone, Debug)]
pub enum Shape {
    Interval { a: GenNet, b: GenNet },
    Box { axes: Vec<(GenNet, GenNet)> },
    Ball { center: Vec<GenNet>, radius: GenNet },
    Indicator { region: RegionFn, dim: usize, bounding_box: Vec<[f64; 2]> },
    CurveImage { curve: Vec<Expr>, bounding_box: Vec<[f64; 2]> },
}

/// Reusable evaluation context for level queries (keeps the hot quadrature
/// loops allocation-free).
pub struct LevelCtx {
    env: Env,
    x_slots: Vec<usize>,
    eps_slot: usize,
}

impl LevelCtx {
    fn new(dim: usize) -> LevelCtx {
        let mut env = Env::new();
        for i in 1..=dim {
            env.set(&format!("x{i}"), Value::Real(0.0));
        }
        env.set("eps", Value::Real(1.0));
        let x_slots = (1..=dim)
            .map(|i| env.index_of(&format!("x{i}")).unwrap())
            .collect();
        let eps_slot = env.index_of("eps").unwrap();
        LevelCtx { env, x_slots, eps_slot }
    }
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            Shape::Box { axes } => axes.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::Indicator { dim, .. } => *dim,
            Shape::CurveImage { curve, .. } => curve.len(),
        }
    }

    /// Signed level value at grid index `k`: negative/zero inside, positive
    /// outside.  `strict` demands fixed-point convergence for pullbacks
    /// (used on tail samples).
    fn level(
        &self,
        ctx: &mut LevelCtx,
        k: usize,
        eps: f64,
        x: &[f64],
        strict: bool,
    ) -> Result<f64> {
        match self {
            Shape::Interval { a, b } => {
                let av = a.value_at(k).re();
                let bv = b.value_at(k).re();
                Ok((av - x[0]).max(x[0] - bv))
            }
            Shape::Box { axes } => {
                let mut worst = f64::NEG_INFINITY;
                for (i, (a, b)) in axes.iter().enumerate() {
                    let av = a.value_at(k).re();
                    let bv = b.value_at(k).re();
                    worst = worst.max((av - x[i]).max(x[i] - bv));
                }
                Ok(worst)
            }
            Shape::Ball { center, radius } => {
                let mut ss = 0.0;
                for (i, c) in center.iter().enumerate() {
                    let d = x[i] - c.value_at(k).re();
                    ss += d * d;
                }
                Ok(ss.sqrt() - radius.value_at(k).re())
            }
            Shape::Indicator { region, .. } => match region {
                RegionFn::Level(p) => {
                    for (slot, xi) in ctx.x_slots.iter().zip(x) {
                        ctx.env.set_index(*slot, Value::Real(*xi));
                    }
                    ctx.env.set_index(ctx.eps_slot, Value::Real(eps));
                    let v = p.eval_in(&ctx.env, false)?;
                    v.as_real().ok_or_else(|| {
                        Error::InvalidInput("region predicate must be real-valued".into())
                    })
                }
                RegionFn::Pullback { inner, psi, .. } => {
                    let inv = invert_perturbation(ctx, psi, eps, x, strict)?;
                    inner.level(ctx, k, eps, &inv, strict)
                }
            },
            Shape::CurveImage { .. } => Err(Error::Hypothesis(
                "curve images do not support pointwise membership queries".into(),
            )),
        }
    }
}

/// Solve `x* + psi(eps, x*) = y` by fixed-point iteration `x* <- y - psi(x*)`.
/// For a certified null perturbation this contracts rapidly at small eps.
fn invert_perturbation(
    ctx: &mut LevelCtx,
    psi: &[Expr],
    eps: f64,
    y: &[f64],
    strict: bool,
) -> Result<Vec<f64>> {
    let n = y.len();
    let mut x: Vec<f64> = y.to_vec();
    let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ctx.env.set_index(ctx.eps_slot, Value::Real(eps));
    for _ in 0..60 {
        for (slot, xi) in ctx.x_slots.iter().zip(&x) {
            ctx.env.set_index(*slot, Value::Real(*xi));
        }
        let mut next = Vec::with_capacity(n);
        let mut delta = 0.0f64;
        for (i, p) in psi.iter().enumerate() {
            let v = p.eval_in(&ctx.env, false)?;
            let xi = y[i] - v.re();
            delta = delta.max((xi - x[i]).abs());
            next.push(xi);
        }
        x = next;
        if delta <= 1e-14 * scale {
            return Ok(x);
        }
    }
    if strict {
        Err(Error::Hypothesis(
            "perturbation too large: fixed-point inversion failed to contract on the tail".into(),
        ))
    } else {
        Ok(x)
    }
}

/// An epsilon-indexed family of integration regions.
#[derive(Clone, Debug)]
pub struct PreMembrane {
    grid: Arc<EpsilonGrid>,
    shape: Shape,
    compact_box: Vec<[f64; 2]>,
}

fn require_real(net: &GenNet, what: &str) -> Result<()> {
    if net.is_complex() {
        return Err(Error::InvalidInput(format!("{what} must be real-valued")));
    }
    Ok(())
}

/// Hull of a net's tail samples.
fn tail_hull(net: &GenNet) -> [f64; 2] {
    let grid = net.grid();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in grid.tail_start()..grid.len() {
        let v = net.value_at(k).re();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    [lo, hi]
}

impl PreMembrane {
    pub fn interval(a: GenNet, b: GenNet) -> Result<PreMembrane> {
        if !compatible(a.grid(), b.grid()) {
            return Err(Error::GridMismatch("interval endpoints on different grids".into()));
        }
        require_real(&a, "interval endpoint")?;
        require_real(&b, "interval endpoint")?;
        let grid = Arc::clone(a.grid());
        for k in grid.tail_start()..grid.len() {
            if a.value_at(k).re() > b.value_at(k).re() {
                return Err(Error::Hypothesis(format!(
                    "interval has a > b at tail sample {k}"
                )));
            }
        }
        let ha = tail_hull(&a);
        let hb = tail_hull(&b);
        let compact_box = vec![[ha[0].min(hb[0]), ha[1].max(hb[1])]];
        Ok(PreMembrane { grid, shape: Shape::Interval { a, b }, compact_box })
    }

    pub fn boxed(axes: Vec<(GenNet, GenNet)>) -> Result<PreMembrane> {
        if axes.is_empty() {
            return Err(Error::DimensionMismatch("box needs at least one axis".into()));
        }
        let grid = Arc::clone(axes[0].0.grid());
        let mut compact_box = Vec::with_capacity(axes.len());
        for (a, b) in &axes {
            if !compatible(&grid, a.grid()) || !compatible(&grid, b.grid()) {
                return Err(Error::GridMismatch("box axes on different grids".into()));
            }
            require_real(a, "box endpoint")?;
            require_real(b, "box endpoint")?;
            for k in grid.tail_start()..grid.len() {
                if a.value_at(k).re() > b.value_at(k).re() {
                    return Err(Error::Hypothesis(format!("box axis has a > b at tail sample {k}")));
                }
            }
            let ha = tail_hull(a);
            let hb = tail_hull(b);
            compact_box.push([ha[0].min(hb[0]), ha[1].max(hb[1])]);
        }
        Ok(PreMembrane { grid, shape: Shape::Box { axes }, compact_box })
    }

    pub fn ball(center: Vec<GenNet>, radius: GenNet) -> Result<PreMembrane> {
        if center.is_empty() {
            return Err(Error::DimensionMismatch("ball needs at least one axis".into()));
        }
        if center.len() > 3 {
            return Err(Error::DimensionMismatch(
                "balls are supported in dimensions 1..=3".into(),
            ));
        }
        let grid = Arc::clone(center[0].grid());
        require_real(&radius, "ball radius")?;
        if !compatible(&grid, radius.grid()) {
            return Err(Error::GridMismatch("ball radius on a different grid".into()));
        }
        for k in grid.tail_start()..grid.len() {
            if !(radius.value_at(k).re() > 0.0) {
                return Err(Error::Hypothesis(format!(
                    "ball radius must be positive on the tail (sample {k})"
                )));
            }
        }
        let rh = tail_hull(&radius);
        let mut compact_box = Vec::with_capacity(center.len());
        for c in &center {
            if !compatible(&grid, c.grid()) {
                return Err(Error::GridMismatch("ball center on a different grid".into()));
            }
            require_real(c, "ball center")?;
            let ch = tail_hull(c);
            compact_box.push([ch[0] - rh[1], ch[1] + rh[1]]);
        }
        Ok(PreMembrane { grid, shape: Shape::Ball { center, radius }, compact_box })
    }

    /// Region `{ x in bounding_box : p(eps, x) <= 0 }`.  The predicate must
    /// be continuously differentiable in `x`; Jordan measurability is
    /// assumed from that form and cross-checked by refinement convergence at
    /// integration time.
    pub fn indicator(
        grid: Arc<EpsilonGrid>,
        predicate_src: &str,
        dim: usize,
        bounding_box: Vec<[f64; 2]>,
    ) -> Result<PreMembrane> {
        let vars: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let predicate = parse(predicate_src, &refs)?;
        PreMembrane::indicator_expr(grid, predicate, dim, bounding_box)
    }

    pub fn indicator_expr(
        grid: Arc<EpsilonGrid>,
        predicate: Expr,
        dim: usize,
        bounding_box: Vec<[f64; 2]>,
    ) -> Result<PreMembrane> {
        if dim == 0 || dim > 3 {
            return Err(Error::DimensionMismatch(
                "indicator regions are supported in dimensions 1..=3".into(),
            ));
        }
        if bounding_box.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "bounding box has {} intervals for dimension {dim}",
                bounding_box.len()
            )));
        }
        for [lo, hi] in &bounding_box {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidInput("bounding box interval invalid".into()));
            }
        }
        if predicate.has_imag() {
            return Err(Error::InvalidInput("region predicate must be real".into()));
        }
        for v in predicate.free_vars() {
            let ok = v == "eps" || (1..=dim).any(|i| v == format!("x{i}"));
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "predicate references `{v}` beyond x1..x{dim} and eps"
                )));
            }
        }
        let compact_box = bounding_box.clone();
        Ok(PreMembrane {
            grid,
            shape: Shape::Indicator { region: RegionFn::Level(predicate), dim, bounding_box },
            compact_box,
        })
    }

    /// Override the compact box (must contain the auto-derived one).
    pub fn with_compact_box(mut self, compact_box: Vec<[f64; 2]>) -> Result<PreMembrane> {
        if compact_box.len() != self.compact_box.len() {
            return Err(Error::DimensionMismatch("compact box arity mismatch".into()));
        }
        for ([nlo, nhi], [olo, ohi]) in compact_box.iter().zip(&self.compact_box) {
            if !(nlo <= olo && ohi <= nhi) {
                return Err(Error::Compactness(
                    "declared compact box does not contain the region's tail hull".into(),
                ));
            }
        }
        self.compact_box = compact_box;
        Ok(self)
    }

    pub fn grid(&self) -> &Arc<EpsilonGrid> {
        &self.grid
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn compact_box(&self) -> &[[f64; 2]] {
        &self.compact_box
    }

    /// Bounding box for indicator scans at grid index `k`.  Drifted regions
    /// use the base hull plus the per-epsilon certified displacement, so a
    /// scan at an epsilon where the displacement vanishes reproduces the
    /// base membrane's node layout exactly.
    pub fn scan_box(&self, k: usize) -> Vec<[f64; 2]> {
        match &self.shape {
            Shape::Indicator { region: RegionFn::Pullback { base_box, margins, .. }, .. } => {
                base_box
                    .iter()
                    .map(|[lo, hi]| [lo - margins[k], hi + margins[k]])
                    .collect()
            }
            _ => self.compact_box.clone(),
        }
    }

    pub fn level_ctx(&self) -> LevelCtx {
        LevelCtx::new(self.dim())
    }

    /// Level query at grid index `k` (negative/zero = inside).
    pub fn level_at(&self, ctx: &mut LevelCtx, k: usize, x: &[f64]) -> Result<f64> {
        let eps = self.grid.samples()[k];
        let strict = k >= self.grid.tail_start();
        self.shape.level(ctx, k, eps, x, strict)
    }

    /// Per-epsilon Lebesgue volume: closed formulas for the exact variants,
    /// refined slicing quadrature for indicator regions.
    pub fn volume(&self) -> Result<GenNet> {
        match &self.shape {
            Shape::Interval { a, b } => b.sub(a),
            Shape::Box { axes } => {
                let mut acc = GenNet::constant(Arc::clone(&self.grid), Value::Real(1.0));
                for (a, b) in axes {
                    acc = acc.mul(&b.sub(a)?)?;
                }
                Ok(acc)
            }
            Shape::Ball { center, radius } => {
                let n = center.len();
                let unit = match n {
                    1 => 2.0,
                    2 => std::f64::consts::PI,
                    3 => 4.0 * std::f64::consts::PI / 3.0,
                    _ => unreachable!("ball dimension checked at construction"),
                };
                Ok(radius.map(|r| {
                    let rv = r.re();
                    Value::Real(unit * rv.powi(n as i32))
                }))
            }
            Shape::Indicator { .. } => {
                crate::quad::indicator_volume(self, &crate::quad::QuadConfig::default())
            }
            Shape::CurveImage { .. } => Err(Error::Hypothesis(
                "curve images carry no n-dimensional volume".into(),
            )),
        }
    }

    /// Per-epsilon diameter: exact for interval/box/ball, sampled (256
    /// points, antipodal pairs included) for curve images.
    pub fn diameter(&self) -> Result<GenNet> {
        match &self.shape {
            Shape::Interval { a, b } => b.sub(a),
            Shape::Box { axes } => {
                let grid = Arc::clone(&self.grid);
                let n = grid.len();
                let mut values = Vec::with_capacity(n);
                for k in 0..n {
                    let mut ss = 0.0;
                    for (a, b) in axes {
                        let d = b.value_at(k).re() - a.value_at(k).re();
                        ss += d * d;
                    }
                    values.push(Value::Real(ss.sqrt()));
                }
                GenNet::new(grid, values)
            }
            Shape::Ball { radius, .. } => Ok(radius.scale(2.0)),
            Shape::CurveImage { curve, .. } => {
                let grid = Arc::clone(&self.grid);
                let m = 256usize;
                let mut env = Env::new();
                env.set("t", Value::Real(0.0));
                env.set("eps", Value::Real(1.0));
                let t_slot = env.index_of("t").unwrap();
                let e_slot = env.index_of("eps").unwrap();
                let mut values = Vec::with_capacity(grid.len());
                for (k, &eps) in grid.samples().iter().enumerate() {
                    let _ = k;
                    env.set_index(e_slot, Value::Real(eps));
                    let mut pts = Vec::with_capacity(m);
                    for j in 0..m {
                        env.set_index(t_slot, Value::Real(j as f64 / m as f64));
                        let mut p = Vec::with_capacity(curve.len());
                        for c in curve {
                            p.push(c.eval_in(&env, false)?.re());
                        }
                        pts.push(p);
                    }
                    let mut best = 0.0f64;
                    for i in 0..m {
                        for j in (i + 1)..m {
                            let mut ss = 0.0;
                            for (a, b) in pts[i].iter().zip(&pts[j]) {
                                ss += (a - b) * (a - b);
                            }
                            best = best.max(ss);
                        }
                    }
                    values.push(Value::Real(best.sqrt()));
                }
                GenNet::new(grid, values)
            }
            Shape::Indicator { .. } => Err(Error::Hypothesis(
                "diameter of an implicit indicator region is not computed".into(),
            )),
        }
    }
}

/// Declared topological flags of a history.  `simple` is taken on trust;
/// the others get numeric spot checks at construction.
#[derive(Clone, Copy, Debug, Default)]
pub struct HistoryFlags {
    pub closed: bool,
    pub simple: bool,
    pub positively_oriented: bool,
    pub contractible: bool,
}

impl HistoryFlags {
    pub fn closed_loop() -> HistoryFlags {
        HistoryFlags { closed: true, simple: true, positively_oriented: true, contractible: true }
    }
}

/// An epsilon-indexed family of C^1 curves `[0,1] -> R^n` with a declared
/// derivative growth bound `|gamma'_eps(t)| <= c * eps^-N`.
#[derive(Clone, Debug)]
pub struct History {
    grid: Arc<EpsilonGrid>,
    curve: Vec<Expr>,
    derivative: Vec<Expr>,
    growth_c: f64,
    growth_n: u32,
    flags: HistoryFlags,
    compact_box: Vec<[f64; 2]>,
}

impl History {
    pub fn new<S: AsRef<str>>(
        grid: Arc<EpsilonGrid>,
        curve_srcs: &[S],
        growth: (f64, u32),
        flags: HistoryFlags,
    ) -> Result<History> {
        let mut curve = Vec::with_capacity(curve_srcs.len());
        for s in curve_srcs {
            curve.push(parse(s.as_ref(), &["t"])?);
        }
        History::from_exprs(grid, curve, growth, flags, None)
    }

    pub fn from_exprs(
        grid: Arc<EpsilonGrid>,
        curve: Vec<Expr>,
        (growth_c, growth_n): (f64, u32),
        flags: HistoryFlags,
        compact_box: Option<Vec<[f64; 2]>>,
    ) -> Result<History> {
        if curve.is_empty() {
            return Err(Error::DimensionMismatch("curve needs at least one component".into()));
        }
        if !(growth_c > 0.0) {
            return Err(Error::InvalidInput("growth constant c must be positive".into()));
        }
        for c in &curve {
            if c.has_imag() {
                return Err(Error::InvalidInput(
                    "curve components must be real (write the circle as cos/sin pairs)".into(),
                ));
            }
            for v in c.free_vars() {
                if v != "t" && v != "eps" {
                    return Err(Error::InvalidInput(format!(
                        "curve component references `{v}` beyond t and eps"
                    )));
                }
            }
        }
        let derivative: Vec<Expr> = curve.iter().map(|c| differentiate(c, "t")).collect();
        let h = History {
            grid,
            curve,
            derivative,
            growth_c,
            growth_n,
            flags,
            compact_box: Vec::new(),
        };
        let observed = h.check_growth()?;
        h.check_closure()?;
        h.check_orientation()?;
        let auto_box = h.image_hull(observed)?;
        let mut h = h;
        h.compact_box = match compact_box {
            Some(cb) => {
                if cb.len() != h.dim() {
                    return Err(Error::DimensionMismatch("compact box arity mismatch".into()));
                }
                for ([dlo, dhi], [alo, ahi]) in cb.iter().zip(&auto_box) {
                    if !(dlo <= alo && ahi <= dhi) {
                        return Err(Error::Compactness(
                            "declared compact box does not contain the sampled image".into(),
                        ));
                    }
                }
                cb
            }
            None => auto_box,
        };
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.curve.len()
    }

    pub fn grid(&self) -> &Arc<EpsilonGrid> {
        &self.grid
    }

    pub fn flags(&self) -> HistoryFlags {
        self.flags
    }

    pub fn compact_box(&self) -> &[[f64; 2]] {
        &self.compact_box
    }

    pub fn curve_exprs(&self) -> &[Expr] {
        &self.curve
    }

    pub fn growth(&self) -> (f64, u32) {
        (self.growth_c, self.growth_n)
    }

    fn curve_env(&self) -> (Env, usize, usize) {
        let mut env = Env::new();
        env.set("t", Value::Real(0.0));
        env.set("eps", Value::Real(1.0));
        let t = env.index_of("t").unwrap();
        let e = env.index_of("eps").unwrap();
        (env, t, e)
    }

    /// Curve point at grid index `k`.
    pub fn point_at(&self, k: usize, t: f64) -> Result<Vec<f64>> {
        let (mut env, ts, es) = self.curve_env();
        env.set_index(ts, Value::Real(t));
        env.set_index(es, Value::Real(self.grid.samples()[k]));
        self.curve
            .iter()
            .map(|c| Ok(c.eval_in(&env, false)?.re()))
            .collect()
    }

    /// Curve velocity (symbolic derivative) at grid index `k`.
    pub fn velocity_at(&self, k: usize, t: f64) -> Result<Vec<f64>> {
        let (mut env, ts, es) = self.curve_env();
        env.set_index(ts, Value::Real(t));
        env.set_index(es, Value::Real(self.grid.samples()[k]));
        self.derivative
            .iter()
            .map(|c| Ok(c.eval_in(&env, false)?.re()))
            .collect()
    }

    /// Growth check `|gamma'| * eps^N <= c` over 64 t-samples and the tail;
    /// returns the observed maximum |gamma'| for the image-hull padding.
    fn check_growth(&self) -> Result<f64> {
        let (mut env, ts, es) = self.curve_env();
        let mut max_speed = 0.0f64;
        for k in self.grid.tail_start()..self.grid.len() {
            let eps = self.grid.samples()[k];
            env.set_index(es, Value::Real(eps));
            for j in 0..64 {
                let t = j as f64 / 63.0;
                env.set_index(ts, Value::Real(t));
                let mut ss = 0.0;
                for d in &self.derivative {
                    let v = d.eval_in(&env, false)?.re();
                    ss += v * v;
                }
                let speed = ss.sqrt();
                max_speed = max_speed.max(speed);
                if speed * eps.powi(self.growth_n as i32) > self.growth_c * (1.0 + 1e-9) {
                    return Err(Error::Hypothesis(format!(
                        "history growth bound violated: |gamma'|={speed:.6e} at t={t}, eps={eps:.3e} exceeds c*eps^-N with c={}, N={}",
                        self.growth_c, self.growth_n
                    )));
                }
            }
        }
        Ok(max_speed)
    }

    fn check_closure(&self) -> Result<()> {
        if !self.flags.closed {
            return Ok(());
        }
        for k in self.grid.tail_start()..self.grid.len() {
            let p0 = self.point_at(k, 0.0)?;
            let p1 = self.point_at(k, 1.0)?;
            let gap: f64 = p0
                .iter()
                .zip(&p1)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if gap >= 1e-12 {
                return Err(Error::Hypothesis(format!(
                    "closed flag declared but endpoint gap {gap:.3e} at tail sample {k}"
                )));
            }
        }
        Ok(())
    }

    /// Orientation spot check (closed plane curves only): signed shoelace
    /// area over 256 samples at the first tail epsilon must be positive.
    fn check_orientation(&self) -> Result<()> {
        if !(self.flags.closed && self.flags.positively_oriented && self.dim() == 2) {
            return Ok(());
        }
        let k = self.grid.tail_start();
        let m = 256;
        let mut pts = Vec::with_capacity(m);
        for j in 0..m {
            pts.push(self.point_at(k, j as f64 / m as f64)?);
        }
        // Shoelace around the centroid: translation-invariant mathematically,
        // and numerically safe for tiny loops far from the origin.
        let cx = pts.iter().map(|p| p[0]).sum::<f64>() / m as f64;
        let cy = pts.iter().map(|p| p[1]).sum::<f64>() / m as f64;
        let mut area2 = 0.0;
        for j in 0..m {
            let p = &pts[j];
            let q = &pts[(j + 1) % m];
            area2 += (p[0] - cx) * (q[1] - cy) - (q[0] - cx) * (p[1] - cy);
        }
        if area2 <= 0.0 {
            return Err(Error::Hypothesis(
                "positively_oriented declared but sampled signed area is not positive \
                 (a loop below coordinate resolution also lands here)"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Hull of 257 sampled points over tail epsilons, padded by the sampling
    /// resolution bound (max observed speed / sample count).
    fn image_hull(&self, max_speed: f64) -> Result<Vec<[f64; 2]>> {
        let n = self.dim();
        let mut hull = vec![[f64::INFINITY, f64::NEG_INFINITY]; n];
        for k in self.grid.tail_start()..self.grid.len() {
            for j in 0..=256 {
                let p = self.point_at(k, j as f64 / 256.0)?;
                for (h, x) in hull.iter_mut().zip(&p) {
                    h[0] = h[0].min(*x);
                    h[1] = h[1].max(*x);
                }
            }
        }
        let pad = max_speed / 256.0 + 1e-12;
        for h in &mut hull {
            h[0] -= pad;
            h[1] += pad;
        }
        Ok(hull)
    }

    /// The curve's trace as a pre-membrane: an exact interval in dimension 1
    /// (sampled extrema), a `CurveImage` record in higher dimensions.
    pub fn image(&self) -> Result<PreMembrane> {
        if self.dim() == 1 {
            let n = self.grid.len();
            let mut lows = Vec::with_capacity(n);
            let mut highs = Vec::with_capacity(n);
            for k in 0..n {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for j in 0..=256 {
                    let p = self.point_at(k, j as f64 / 256.0)?;
                    lo = lo.min(p[0]);
                    hi = hi.max(p[0]);
                }
                lows.push(Value::Real(lo));
                highs.push(Value::Real(hi));
            }
            let a = GenNet::new(Arc::clone(&self.grid), lows)?;
            let b = GenNet::new(Arc::clone(&self.grid), highs)?;
            return PreMembrane::interval(a, b);
        }
        let bounding_box = self.compact_box.clone();
        Ok(PreMembrane {
            grid: Arc::clone(&self.grid),
            shape: Shape::CurveImage { curve: self.curve.clone(), bounding_box },
            compact_box: self.compact_box.clone(),
        })
    }
}

/// Chain rule along a curve: the net of `<grad f(gamma(t0)) | gamma'(t0)>`.
pub fn derivative_along_curve(f: &Representative, gamma: &History, t0: f64) -> Result<GenNet> {
    if f.arity() != gamma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "representative arity {} vs curve dimension {}",
            f.arity(),
            gamma.dim()
        )));
    }
    if !(0.0..=1.0).contains(&t0) {
        return Err(Error::InvalidInput("t0 must lie in [0, 1]".into()));
    }
    for (axis, ([glo, ghi], [dlo, dhi])) in
        gamma.compact_box().iter().zip(f.domain_box()).enumerate()
    {
        if !(dlo <= glo && ghi <= dhi) {
            return Err(Error::Compactness(format!(
                "curve image axis {} [{glo}, {ghi}] escapes the domain [{dlo}, {dhi}]",
                axis + 1
            )));
        }
    }
    let grad = f.gradient()?;
    let grid = Arc::clone(gamma.grid());
    let mut values = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let x = gamma.point_at(k, t0)?;
        let v = gamma.velocity_at(k, t0)?;
        let coords: Vec<Value> = x.iter().map(|&c| Value::Real(c)).collect();
        let eps = grid.samples()[k];
        let mut acc = Value::Real(0.0);
        for (g, vel) in grad.iter().zip(&v) {
            let gv = g.eval_raw(eps, &coords)?;
            acc = acc.add(gv.scale(*vel));
        }
        values.push(acc);
    }
    GenNet::new(grid, values)
}

/// A certified null perturbation `psi(eps, x)` with its sampled sup-norm
/// certificate over a reference box.
#[derive(Clone, Debug)]
pub struct NullPerturbation {
    psi: Vec<Expr>,
    certificate: NetClass,
    sup_net: GenNet,
    reference_box: Vec<[f64; 2]>,
}

impl NullPerturbation {
    pub fn new<S: AsRef<str>>(
        grid: Arc<EpsilonGrid>,
        psi_srcs: &[S],
        reference_box: Vec<[f64; 2]>,
        cfg: &ClassifyConfig,
    ) -> Result<NullPerturbation> {
        let dim = psi_srcs.len();
        let vars: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let mut psi = Vec::with_capacity(dim);
        for s in psi_srcs {
            psi.push(parse(s.as_ref(), &refs)?);
        }
        NullPerturbation::from_exprs(grid, psi, reference_box, cfg)
    }

    pub fn from_exprs(
        grid: Arc<EpsilonGrid>,
        psi: Vec<Expr>,
        reference_box: Vec<[f64; 2]>,
        cfg: &ClassifyConfig,
    ) -> Result<NullPerturbation> {
        let dim = psi.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch("perturbation needs components".into()));
        }
        if reference_box.len() != dim {
            return Err(Error::DimensionMismatch(
                "reference box arity differs from perturbation arity".into(),
            ));
        }
        for p in &psi {
            if p.has_imag() {
                return Err(Error::InvalidInput("perturbation components must be real".into()));
            }
            for v in p.free_vars() {
                let ok = v == "eps" || (1..=dim).any(|i| v == format!("x{i}"));
                if !ok {
                    return Err(Error::InvalidInput(format!(
                        "perturbation references `{v}` beyond x1..x{dim} and eps"
                    )));
                }
            }
        }
        // Sup-norm certificate over 64 seeded points of the reference box.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Vec<f64>> = (0..64)
            .map(|_| {
                reference_box
                    .iter()
                    .map(|[lo, hi]| if lo == hi { *lo } else { rng.gen_range(*lo..*hi) })
                    .collect()
            })
            .collect();
        let mut env = Env::new();
        for i in 1..=dim {
            env.set(&format!("x{i}"), Value::Real(0.0));
        }
        env.set("eps", Value::Real(1.0));
        let x_slots: Vec<usize> =
            (1..=dim).map(|i| env.index_of(&format!("x{i}")).unwrap()).collect();
        let e_slot = env.index_of("eps").unwrap();
        let mut sup_values = Vec::with_capacity(grid.len());
        for &eps in grid.samples() {
            env.set_index(e_slot, Value::Real(eps));
            let mut sup = 0.0f64;
            for pt in &points {
                for (s, c) in x_slots.iter().zip(pt) {
                    env.set_index(*s, Value::Real(*c));
                }
                let mut ss = 0.0;
                for p in &psi {
                    let v = p.eval_in(&env, false)?.re();
                    ss += v * v;
                }
                sup = sup.max(ss.sqrt());
            }
            sup_values.push(Value::Real(sup));
        }
        let sup_net = GenNet::new(Arc::clone(&grid), sup_values)?;
        let certificate = sup_net.classify(cfg);
        if certificate.kind != NetKind::Null {
            return Err(Error::Hypothesis(format!(
                "perturbation is not null: sup-norm certificate classified {:?} (valuation {:.3})",
                certificate.kind, certificate.estimated_valuation
            )));
        }
        Ok(NullPerturbation { psi, certificate, sup_net, reference_box })
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn certificate(&self) -> NetClass {
        self.certificate
    }

    pub fn components(&self) -> &[Expr] {
        &self.psi
    }

    pub fn reference_box(&self) -> &[[f64; 2]] {
        &self.reference_box
    }

    /// Largest sampled sup-norm across the whole grid (head included); used
    /// to inflate compact boxes after perturbation.
    pub fn max_displacement(&self) -> f64 {
        self.sup_net
            .values()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.magnitude()))
    }
}

/// Per-epsilon structure of an affine perturbation `psi(x) = A x + d` with
/// diagonal A.  Non-affine or non-diagonal perturbations fall back to the
/// indicator pullback.
enum AffineKind {
    Affine { diag: Vec<Vec<f64>>, shift: Vec<Vec<f64>>, scalar: bool },
    NotAffine,
}

fn affine_structure(psi: &[Expr], grid: &EpsilonGrid) -> Result<AffineKind> {
    let n = psi.len();
    let vars: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    // psi is affine iff every partial derivative is x-free.
    let mut partials = Vec::with_capacity(n);
    for p in psi {
        let mut row = Vec::with_capacity(n);
        for v in &vars {
            let d = differentiate(p, v);
            if d.free_vars().iter().any(|w| vars.contains(w)) {
                return Ok(AffineKind::NotAffine);
            }
            row.push(d);
        }
        partials.push(row);
    }
    let mut env = Env::new();
    env.set("eps", Value::Real(1.0));
    for v in &vars {
        env.set(v, Value::Real(0.0));
    }
    let e_slot = env.index_of("eps").unwrap();
    let mut diag = Vec::with_capacity(grid.len());
    let mut shift = Vec::with_capacity(grid.len());
    let mut scalar = true;
    for &eps in grid.samples() {
        env.set_index(e_slot, Value::Real(eps));
        let mut row_diag = Vec::with_capacity(n);
        for (i, row) in partials.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                let a = d.eval_in(&env, false)?.re();
                if i == j {
                    row_diag.push(a);
                } else if a != 0.0 {
                    return Ok(AffineKind::NotAffine);
                }
            }
        }
        if row_diag.iter().any(|&a| a != row_diag[0]) {
            scalar = false;
        }
        // Shift d = psi(0): affine bodies evaluate anywhere, x is folded out.
        let mut row_shift = Vec::with_capacity(n);
        for p in psi {
            row_shift.push(p.eval_in(&env, false)?.re());
        }
        diag.push(row_diag);
        shift.push(row_shift);
    }
    Ok(AffineKind::Affine { diag, shift, scalar })
}

/// Map one axis `[a, b]` through `x -> (1 + lambda) x + d` per epsilon,
/// keeping endpoint order.
fn map_axis(
    grid: &Arc<EpsilonGrid>,
    a: &GenNet,
    b: &GenNet,
    lam: impl Fn(usize) -> f64,
    d: impl Fn(usize) -> f64,
) -> Result<(GenNet, GenNet)> {
    let n = grid.len();
    let mut lows = Vec::with_capacity(n);
    let mut highs = Vec::with_capacity(n);
    for k in 0..n {
        let s = 1.0 + lam(k);
        let av = s * a.value_at(k).re() + d(k);
        let bv = s * b.value_at(k).re() + d(k);
        lows.push(Value::Real(av.min(bv)));
        highs.push(Value::Real(av.max(bv)));
    }
    Ok((
        GenNet::new(Arc::clone(grid), lows)?,
        GenNet::new(Arc::clone(grid), highs)?,
    ))
}

/// Image of a membrane under `phi(x) = x + psi(eps, x)` for a certified null
/// perturbation.
///
/// Intervals and boxes stay exact under diagonal affine psi, balls under
/// scalar affine psi; every other combination becomes an indicator region
/// whose membership pulls back through the fixed-point inverse of `phi`.
/// The compact box is the input's, inflated by the certified sup-norm.
pub fn perturb(m: &PreMembrane, psi: &NullPerturbation) -> Result<PreMembrane> {
    if psi.dim() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "perturbation arity {} vs membrane dimension {}",
            psi.dim(),
            m.dim()
        )));
    }
    if matches!(m.shape, Shape::CurveImage { .. }) {
        return Err(Error::Hypothesis("curve images cannot be perturbed".into()));
    }
    for ([mlo, mhi], [rlo, rhi]) in m.compact_box().iter().zip(psi.reference_box()) {
        if !(rlo <= mlo && mhi <= rhi) {
            return Err(Error::Hypothesis(
                "perturbation certificate box does not cover the membrane's compact box".into(),
            ));
        }
    }
    let grid = Arc::clone(m.grid());
    let margin = psi.max_displacement() + 1e-12;
    let enlarged: Vec<[f64; 2]> = m
        .compact_box()
        .iter()
        .map(|[lo, hi]| [lo - margin, hi + margin])
        .collect();

    let structure = affine_structure(psi.components(), &grid)?;
    let mut out = match (&m.shape, &structure) {
        (Shape::Interval { a, b }, AffineKind::Affine { diag, shift, .. }) => {
            let (a2, b2) = map_axis(&grid, a, b, |k| diag[k][0], |k| shift[k][0])?;
            PreMembrane::interval(a2, b2)?
        }
        (Shape::Box { axes }, AffineKind::Affine { diag, shift, .. }) => {
            let mut mapped = Vec::with_capacity(axes.len());
            for (i, (a, b)) in axes.iter().enumerate() {
                mapped.push(map_axis(&grid, a, b, |k| diag[k][i], |k| shift[k][i])?);
            }
            PreMembrane::boxed(mapped)?
        }
        (Shape::Ball { center, radius }, AffineKind::Affine { diag, shift, scalar: true }) => {
            let n = grid.len();
            let mut new_center = Vec::with_capacity(center.len());
            for (i, c) in center.iter().enumerate() {
                let mut vals = Vec::with_capacity(n);
                for k in 0..n {
                    vals.push(Value::Real(
                        (1.0 + diag[k][0]) * c.value_at(k).re() + shift[k][i],
                    ));
                }
                new_center.push(GenNet::new(Arc::clone(&grid), vals)?);
            }
            let mut rvals = Vec::with_capacity(n);
            for k in 0..n {
                rvals.push(Value::Real((1.0 + diag[k][0]).abs() * radius.value_at(k).re()));
            }
            PreMembrane::ball(new_center, GenNet::new(Arc::clone(&grid), rvals)?)?
        }
        _ => PreMembrane {
            grid: Arc::clone(&grid),
            shape: Shape::Indicator {
                region: RegionFn::Pullback {
                    inner: Box::new(m.shape.clone()),
                    psi: psi.components().to_vec(),
                    base_box: m.compact_box().to_vec(),
                    // Doubled sampled sup: covers certificate undershoot on
                    // the head, and is exactly zero wherever the
                    // displacement itself evaluates to zero.
                    margins: psi
                        .sup_net
                        .values()
                        .iter()
                        .map(|v| 2.0 * v.magnitude())
                        .collect(),
                },
                dim: m.dim(),
                bounding_box: enlarged.clone(),
            },
            compact_box: enlarged.clone(),
        },
    };
    // The sampled sup-norm certificate can undershoot the true sup, so keep
    // the union of the rebuilt hull and the inflated input hull.
    out.compact_box = out
        .compact_box
        .iter()
        .zip(&enlarged)
        .map(|(a, b)| [a[0].min(b[0]), a[1].max(b[1])])
        .collect();
    Ok(out)
}
