use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::expr::{differentiate, parse, Env, Expr};
use crate::gennum::{ClassifyConfig, GenNet};
use crate::grid::{compatible, EpsilonGrid};
use crate::value::Value;
use crate::Result;

/// Declared codomain of a representative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Codomain {
    Real,
    Complex,
}

/// A generalized function's representative: a closed-form expression in the
/// coordinates and `eps`, together with the compact reference box on which
/// it is meant to be evaluated.
///
/// An optional `window` (an open box) turns the expression into a compactly
/// supported function: outside the window the representative is defined to
/// be zero, and the body is never evaluated there.  This is how bump data
/// like `exp(-1/(1-x1^2))` on (-1, 1) are expressed without piecewise
/// syntax.
#[derive(Clone, Debug)]
pub struct Representative {
    body: Expr,
    vars: Vec<String>,
    domain_box: Vec<[f64; 2]>,
    codomain: Codomain,
    window: Option<Vec<[f64; 2]>>,
    has_imag: bool,
}

fn check_box(b: &[[f64; 2]], what: &str) -> Result<()> {
    if b.is_empty() {
        return Err(Error::DimensionMismatch(format!("{what} box is empty")));
    }
    for [lo, hi] in b {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidInput(format!(
                "{what} box interval [{lo}, {hi}] is invalid"
            )));
        }
    }
    Ok(())
}

impl Representative {
    /// Standard constructor: coordinates are named `x1..xn`.
    pub fn new(
        body_src: &str,
        arity: usize,
        domain_box: Vec<[f64; 2]>,
        codomain: Codomain,
    ) -> Result<Representative> {
        let vars: Vec<String> = (1..=arity).map(|k| format!("x{k}")).collect();
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let body = parse(body_src, &refs)?;
        Representative::from_expr(body, vars, domain_box, codomain)
    }

    /// Constructor with caller-chosen coordinate names (e.g. `["z"]` for
    /// complex functions, `["x1", "t"]` for space-time sources).
    pub fn with_vars<S: AsRef<str>>(
        body_src: &str,
        vars: &[S],
        domain_box: Vec<[f64; 2]>,
        codomain: Codomain,
    ) -> Result<Representative> {
        let body = parse(body_src, vars)?;
        let vars = vars.iter().map(|s| s.as_ref().to_string()).collect();
        Representative::from_expr(body, vars, domain_box, codomain)
    }

    pub fn from_expr(
        body: Expr,
        vars: Vec<String>,
        domain_box: Vec<[f64; 2]>,
        codomain: Codomain,
    ) -> Result<Representative> {
        if vars.is_empty() {
            return Err(Error::DimensionMismatch("representative needs at least one coordinate".into()));
        }
        if domain_box.len() != vars.len() {
            return Err(Error::DimensionMismatch(format!(
                "domain box has {} intervals for {} coordinates",
                domain_box.len(),
                vars.len()
            )));
        }
        check_box(&domain_box, "domain")?;
        for v in body.free_vars() {
            if v != "eps" && !vars.iter().any(|w| *w == v) {
                return Err(Error::InvalidInput(format!(
                    "body references `{v}` which is not a declared coordinate"
                )));
            }
        }
        let has_imag = body.has_imag();
        if has_imag && codomain == Codomain::Real {
            return Err(Error::InvalidInput(
                "body contains the imaginary unit but codomain is declared real".into(),
            ));
        }
        let rep = Representative { body, vars, domain_box, codomain, window: None, has_imag };
        rep.spot_check_moderateness()?;
        Ok(rep)
    }

    /// Restrict support to an open window box: outside it the function is
    /// identically zero (and the body is not evaluated).
    pub fn windowed(mut self, window: Vec<[f64; 2]>) -> Result<Representative> {
        if window.len() != self.vars.len() {
            return Err(Error::DimensionMismatch(
                "window box arity differs from coordinate count".into(),
            ));
        }
        check_box(&window, "window")?;
        self.window = Some(window);
        Ok(self)
    }

    /// Moderateness spot check: at 32 seeded-random points of the domain
    /// box, the net `eps -> f(eps, x)` must not grow faster than any power
    /// of `1/eps` (and must evaluate to finite values).  Judged on the
    /// standard grid so validity does not depend on the caller's grid.
    fn spot_check_moderateness(&self) -> Result<()> {
        let grid = EpsilonGrid::standard();
        let cfg = ClassifyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let complex = self.has_imag;
        let mut env = Env::new();
        env.set("eps", Value::Real(1.0));
        for v in &self.vars {
            env.set(v, Value::Real(0.0));
        }
        let eps_slot = env.index_of("eps").unwrap();
        for _ in 0..32 {
            let coords: Vec<f64> = self
                .domain_box
                .iter()
                .map(|[lo, hi]| if lo == hi { *lo } else { rng.gen_range(*lo..*hi) })
                .collect();
            for (v, c) in self.vars.iter().zip(&coords) {
                env.set(v, Value::Real(*c));
            }
            let mut values = Vec::with_capacity(grid.len());
            let mut failed = false;
            for &eps in grid.samples() {
                env.set_index(eps_slot, Value::Real(eps));
                match self.eval_env(&env, complex, &coords) {
                    Ok(v) => {
                        if !v.is_finite() {
                            return Err(Error::Hypothesis(format!(
                                "moderateness spot check: non-finite value at x = {coords:?}, eps = {eps}"
                            )));
                        }
                        values.push(v);
                    }
                    // A domain error at an isolated random point (e.g. a
                    // pole inside the box) only voids this probe; genuinely
                    // undefined-on-domain bodies fail most probes and the
                    // caller sees the error on evaluation instead.
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                continue;
            }
            let net = GenNet::new(Arc::clone(&grid), values)?;
            if net.superpolynomial_growth(&cfg) {
                return Err(Error::Hypothesis(format!(
                    "moderateness spot check failed at x = {coords:?}: growth beyond eps^-{}",
                    cfg.null_threshold
                )));
            }
        }
        Ok(())
    }

    fn eval_env(&self, env: &Env, complex: bool, coords: &[f64]) -> Result<Value> {
        if let Some(window) = &self.window {
            for (c, [lo, hi]) in coords.iter().zip(window) {
                if !(c > lo && c < hi) {
                    return Ok(Value::Real(0.0));
                }
            }
        }
        self.body.eval_in(env, complex)
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn body(&self) -> &Expr {
        &self.body
    }

    pub fn domain_box(&self) -> &[[f64; 2]] {
        &self.domain_box
    }

    pub fn codomain(&self) -> Codomain {
        self.codomain
    }

    pub fn window(&self) -> Option<&[[f64; 2]]> {
        self.window.as_deref()
    }

    /// Evaluate at one epsilon and coordinate tuple.  Containment policy
    /// lives in the callers: tail samples are guaranteed in-domain by the
    /// GenPoint/membrane checks, head samples evaluate wherever they land.
    pub fn eval_raw(&self, eps: f64, coords: &[Value]) -> Result<Value> {
        if coords.len() != self.vars.len() {
            return Err(Error::DimensionMismatch(format!(
                "representative of arity {} evaluated at {} coordinates",
                self.vars.len(),
                coords.len()
            )));
        }
        if let Some(window) = &self.window {
            for (c, [lo, hi]) in coords.iter().zip(window) {
                let inside = if c.is_complex() {
                    c.re() > *lo && c.re() < *hi && c.im() > *lo && c.im() < *hi
                } else {
                    c.re() > *lo && c.re() < *hi
                };
                if !inside {
                    return Ok(Value::Real(0.0));
                }
            }
        }
        let mut env = Env::new();
        env.set("eps", Value::Real(eps));
        for (v, c) in self.vars.iter().zip(coords) {
            env.set(v, *c);
        }
        let complex = self.has_imag || coords.iter().any(Value::is_complex);
        self.body.eval_in(&env, complex)
    }

    /// Build a reusable evaluation context for this representative.  The
    /// environment is allocated once; `eval_fast` overwrites its slots, so
    /// tight quadrature loops carry no per-node allocation.
    pub fn eval_ctx(&self) -> EvalCtx {
        let mut env = Env::new();
        for v in &self.vars {
            env.set(v, Value::Real(0.0));
        }
        env.set("eps", Value::Real(1.0));
        let slots = self.vars.iter().map(|v| env.index_of(v).unwrap()).collect();
        let eps_slot = env.index_of("eps").unwrap();
        EvalCtx { env, slots, eps_slot }
    }

    /// Real-coordinate evaluation through a context from `eval_ctx` (same
    /// representative only).  Same containment policy as `eval_raw`.
    pub fn eval_fast(&self, ctx: &mut EvalCtx, eps: f64, coords: &[f64]) -> Result<Value> {
        if let Some(window) = &self.window {
            for (c, [lo, hi]) in coords.iter().zip(window) {
                if !(c > lo && c < hi) {
                    return Ok(Value::Real(0.0));
                }
            }
        }
        ctx.env.set_index(ctx.eps_slot, Value::Real(eps));
        for (s, c) in ctx.slots.iter().zip(coords) {
            ctx.env.set_index(*s, Value::Real(*c));
        }
        self.body.eval_in(&ctx.env, self.has_imag)
    }

    /// Componentwise symbolic gradient.  Skips the constructor's spot check:
    /// derivatives of a valid representative may contain `sign` factors that
    /// fail random probing yet are fine where they are actually used.
    pub fn gradient(&self) -> Result<Vec<Representative>> {
        self.vars
            .iter()
            .map(|v| {
                let d = differentiate(&self.body, v);
                Ok(Representative {
                    body: d,
                    vars: self.vars.clone(),
                    domain_box: self.domain_box.clone(),
                    codomain: self.codomain,
                    window: self.window.clone(),
                    has_imag: self.has_imag,
                })
            })
            .collect()
    }

    /// Derivative with respect to one named coordinate, as a representative.
    pub fn partial(&self, var: &str) -> Result<Representative> {
        if !self.vars.iter().any(|v| v == var) {
            return Err(Error::InvalidInput(format!("no coordinate named `{var}`")));
        }
        Ok(Representative {
            body: differentiate(&self.body, var),
            vars: self.vars.clone(),
            domain_box: self.domain_box.clone(),
            codomain: self.codomain,
            window: self.window.clone(),
            has_imag: self.has_imag,
        })
    }
}

/// Reusable slot-indexed environment for `Representative::eval_fast`.
pub struct EvalCtx {
    env: Env,
    slots: Vec<usize>,
    eps_slot: usize,
}

/// A compactly supported generalized point: coordinate nets plus the compact
/// box certified to contain every tail sample.
#[derive(Clone, Debug)]
pub struct GenPoint {
    coords: Vec<GenNet>,
    compact_box: Vec<[f64; 2]>,
}

impl GenPoint {
    pub fn new(coords: Vec<GenNet>, compact_box: Vec<[f64; 2]>) -> Result<GenPoint> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch("point needs at least one coordinate".into()));
        }
        if coords.len() != compact_box.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates with a {}-interval compact box",
                coords.len(),
                compact_box.len()
            )));
        }
        check_box(&compact_box, "compact")?;
        let grid = Arc::clone(coords[0].grid());
        for c in &coords[1..] {
            if !compatible(&grid, c.grid()) {
                return Err(Error::GridMismatch("point coordinates on different grids".into()));
            }
        }
        let start = grid.tail_start();
        let mut offenders = Vec::new();
        for (axis, (c, [lo, hi])) in coords.iter().zip(&compact_box).enumerate() {
            for k in start..grid.len() {
                let v = c.value_at(k);
                let inside = if v.is_complex() {
                    v.re() >= *lo && v.re() <= *hi && v.im() >= *lo && v.im() <= *hi
                } else {
                    v.re() >= *lo && v.re() <= *hi
                };
                if !inside {
                    offenders.push(format!(
                        "axis {} sample {} = {} outside [{lo}, {hi}]",
                        axis + 1,
                        k,
                        v
                    ));
                }
            }
        }
        if !offenders.is_empty() {
            return Err(Error::Compactness(format!(
                "tail samples escape the compact box: {}",
                offenders.join("; ")
            )));
        }
        Ok(GenPoint { coords, compact_box })
    }

    /// A classical (epsilon-independent) point with a degenerate box.
    pub fn classical(grid: Arc<EpsilonGrid>, coords: &[f64]) -> Result<GenPoint> {
        let nets: Vec<GenNet> = coords
            .iter()
            .map(|&c| GenNet::constant(Arc::clone(&grid), Value::Real(c)))
            .collect();
        let boxes: Vec<[f64; 2]> = coords.iter().map(|&c| [c, c]).collect();
        GenPoint::new(nets, boxes)
    }

    /// Infer the compact box as the hull of tail samples, padded.
    pub fn from_nets(coords: Vec<GenNet>, pad: f64) -> Result<GenPoint> {
        if coords.is_empty() {
            return Err(Error::DimensionMismatch("point needs at least one coordinate".into()));
        }
        let grid = coords[0].grid();
        let start = grid.tail_start();
        let mut boxes = Vec::with_capacity(coords.len());
        for c in &coords {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for k in start..grid.len() {
                let v = c.value_at(k);
                lo = lo.min(v.re()).min(if v.is_complex() { v.im() } else { v.re() });
                hi = hi.max(v.re()).max(if v.is_complex() { v.im() } else { v.re() });
            }
            boxes.push([lo - pad, hi + pad]);
        }
        GenPoint::new(coords, boxes)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[GenNet] {
        &self.coords
    }

    pub fn coord(&self, axis: usize) -> &GenNet {
        &self.coords[axis]
    }

    pub fn compact_box(&self) -> &[[f64; 2]] {
        &self.compact_box
    }

    pub fn grid(&self) -> &Arc<EpsilonGrid> {
        self.coords[0].grid()
    }
}

/// The point evaluation (kappa action): the net `eps -> f(eps, x_eps)`.
///
/// The point's compact box must sit strictly inside the representative's
/// domain box.
pub fn evaluate_at(f: &Representative, x: &GenPoint) -> Result<GenNet> {
    if f.arity() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "representative arity {} vs point dimension {}",
            f.arity(),
            x.dim()
        )));
    }
    for (axis, ([plo, phi], [dlo, dhi])) in
        x.compact_box().iter().zip(f.domain_box()).enumerate()
    {
        if !(dlo < plo && phi < dhi) {
            return Err(Error::Compactness(format!(
                "axis {}: compact box [{plo}, {phi}] not interior to domain [{dlo}, {dhi}]",
                axis + 1
            )));
        }
    }
    let grid = Arc::clone(x.grid());
    let mut values = Vec::with_capacity(grid.len());
    let mut coords = vec![Value::Real(0.0); x.dim()];
    for k in 0..grid.len() {
        for (slot, c) in coords.iter_mut().zip(x.coords()) {
            *slot = c.value_at(k);
        }
        values.push(f.eval_raw(grid.samples()[k], &coords)?);
    }
    GenNet::new(grid, values)
}
