//! Closed-form transport and one-dimensional wave solutions over epsilon
//! nets, with finite-difference residual verification.
//!
//! `transport_solve` realizes `u(x, t) = g(x - t b)` plus a Duhamel slice
//! integral for the source term; `wave_solve` realizes the unit-speed
//! d'Alembert formula.  Both return evaluator objects producing one sample
//! per grid epsilon.  `residual_check` probes any candidate field with
//! central differences and classifies the assembled equation residual
//! twice: raw, and with samples below the finite-difference noise floor
//! snapped to zero.  The second judgment is the meaningful one whenever
//! the data are epsilon-dependent, because the FD truncation error itself
//! grows like a power of `1/eps` for such solutions.

use std::sync::Arc;

use crate::error::Error;
use crate::genfun::{Codomain, EvalCtx, GenPoint, Representative};
use crate::gennum::{ClassifyConfig, GenNet, NetClass, NetKind};
use crate::grid::{compatible, EpsilonGrid};
use crate::quad::rule;
use crate::value::Value;
use crate::Result;

/// Gauss order for the Duhamel slice and d'Alembert velocity integrals.
const SOURCE_NODES: usize = 64;

/// Default central-difference step for `residual_check`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Constant-velocity transport: `u_t + <grad_x u | b> = f`, `u(x, 0) = g(x)`.
///
/// The velocity is a generalized vector (one net per component, constant in
/// `x` and `t`); the data enter as closed-form representatives.  The source,
/// when present, is defined on `space x (-a, inf)` with `a > 0`.
#[derive(Clone)]
pub struct TransportProblem {
    b: Vec<GenNet>,
    g: Representative,
    f: Option<Representative>,
    a: f64,
}

impl TransportProblem {
    /// Homogeneous problem.  Velocity components must be real nets that do
    /// not classify `Indeterminate`; the initial datum must be real-valued
    /// with one variable per velocity component.
    pub fn new(b: Vec<GenNet>, g: Representative, ccfg: &ClassifyConfig) -> Result<TransportProblem> {
        if b.is_empty() {
            return Err(Error::DimensionMismatch(
                "velocity needs at least one component".into(),
            ));
        }
        let grid = Arc::clone(b[0].grid());
        for c in &b[1..] {
            if !compatible(&grid, c.grid()) {
                return Err(Error::GridMismatch(
                    "velocity components on different grids".into(),
                ));
            }
        }
        for (i, c) in b.iter().enumerate() {
            if c.is_complex() {
                return Err(Error::InvalidInput(format!(
                    "velocity component {} is complex; transport runs over real space",
                    i + 1
                )));
            }
            if c.classify(ccfg).kind == NetKind::Indeterminate {
                return Err(Error::Hypothesis(format!(
                    "velocity component {} classifies Indeterminate; a moderate net is required",
                    i + 1
                )));
            }
        }
        if g.arity() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "initial datum has {} variables for {} velocity components",
                g.arity(),
                b.len()
            )));
        }
        if g.codomain() != Codomain::Real {
            return Err(Error::InvalidInput("initial datum must be real-valued".into()));
        }
        Ok(TransportProblem { b, g, f: None, a: 1.0 })
    }

    /// Attach a source term `f(x1..xn, t)` defined for `t > -a`.  The
    /// trailing variable is time; its domain interval must reach down to
    /// `-a` so the slice integral stays inside the declared box.
    pub fn with_source(mut self, f: Representative, a: f64) -> Result<TransportProblem> {
        if f.arity() != self.b.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "source must take {} space variables plus time, has arity {}",
                self.b.len(),
                f.arity()
            )));
        }
        if f.codomain() != Codomain::Real {
            return Err(Error::InvalidInput("source must be real-valued".into()));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidInput(
                "source time margin must be positive and finite".into(),
            ));
        }
        let [tlo, _] = f.domain_box()[self.b.len()];
        if tlo > -a {
            return Err(Error::InvalidInput(format!(
                "source time domain starts at {tlo}, above the declared margin -{a}"
            )));
        }
        self.f = Some(f);
        self.a = a;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn grid(&self) -> &Arc<EpsilonGrid> {
        self.b[0].grid()
    }

    pub fn velocity(&self) -> &[GenNet] {
        &self.b
    }

    pub fn initial_datum(&self) -> &Representative {
        &self.g
    }

    pub fn source(&self) -> Option<&Representative> {
        self.f.as_ref()
    }

    pub fn time_margin(&self) -> f64 {
        self.a
    }

    /// Interval containment for everything the solution formula touches when
    /// the probe block is `x_i -+ m`, `t -+ m` at grid index `k`.  Used on
    /// tail samples; heads evaluate wherever they land.
    fn check_block(&self, k: usize, x: &[f64], t: f64, m: f64) -> Result<()> {
        let tlo = t - m;
        let thi = t + m;
        for (i, (xi, bi)) in x.iter().zip(&self.b).enumerate() {
            let bik = bi.value_at(k).re();
            let shift_lo = (tlo * bik).min(thi * bik);
            let shift_hi = (tlo * bik).max(thi * bik);
            let lo = xi - m - shift_hi;
            let hi = xi + m - shift_lo;
            let [dlo, dhi] = self.g.domain_box()[i];
            if !(dlo < lo && hi < dhi) {
                return Err(Error::Compactness(format!(
                    "initial-datum argument range [{lo}, {hi}] on axis {} leaves its domain [{dlo}, {dhi}]",
                    i + 1
                )));
            }
        }
        if let Some(f) = &self.f {
            // The slice parameter runs over [-t', 0] for each time t' in the
            // block, so evaluation times cover [min(0, tlo), max(0, thi)].
            let time_lo = tlo.min(0.0);
            let time_hi = thi.max(0.0);
            if time_lo <= -self.a {
                return Err(Error::domain(
                    "source",
                    format!("slice time {time_lo} leaves the source half-line t > -{}", self.a),
                ));
            }
            let [dlo, dhi] = f.domain_box()[self.b.len()];
            if !(dlo < time_lo && time_hi < dhi) {
                return Err(Error::Compactness(format!(
                    "slice time range [{time_lo}, {time_hi}] leaves the source time domain [{dlo}, {dhi}]"
                )));
            }
            for (i, (xi, bi)) in x.iter().zip(&self.b).enumerate() {
                let bik = bi.value_at(k).re();
                // s*b_i over s in [-(t+m), 0] (t > 0 on tails).
                let span = -(thi) * bik;
                let lo = xi - m + span.min(0.0);
                let hi = xi + m + span.max(0.0);
                let [dlo, dhi] = f.domain_box()[i];
                if !(dlo < lo && hi < dhi) {
                    return Err(Error::Compactness(format!(
                        "slice argument range [{lo}, {hi}] on axis {} leaves the source domain [{dlo}, {dhi}]",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Unit-speed wave problem on the line: `u_tt - u_xx = 0` with position
/// datum `g` and velocity datum `h` at `t = 0`.
#[derive(Clone)]
pub struct WaveProblem {
    g: Representative,
    h: Representative,
}

impl WaveProblem {
    pub fn new(g: Representative, h: Representative) -> Result<WaveProblem> {
        if g.arity() != 1 || h.arity() != 1 {
            return Err(Error::DimensionMismatch(
                "wave data must each take a single space variable".into(),
            ));
        }
        if g.codomain() != Codomain::Real || h.codomain() != Codomain::Real {
            return Err(Error::InvalidInput("wave data must be real-valued".into()));
        }
        Ok(WaveProblem { g, h })
    }

    pub fn position_datum(&self) -> &Representative {
        &self.g
    }

    pub fn velocity_datum(&self) -> &Representative {
        &self.h
    }

    /// Containment of the d'Alembert arguments for the block `x -+ m`,
    /// `t -+ m`: both characteristics into the position datum's domain, the
    /// full cone base into the velocity datum's.
    fn check_block(&self, x: f64, t: f64, m: f64) -> Result<()> {
        let [glo, ghi] = self.g.domain_box()[0];
        for (lo, hi, which) in [
            (x + t - 2.0 * m, x + t + 2.0 * m, "forward"),
            (x - t - 2.0 * m, x - t + 2.0 * m, "backward"),
        ] {
            if !(glo < lo && hi < ghi) {
                return Err(Error::Compactness(format!(
                    "{which} characteristic range [{lo}, {hi}] leaves the position-datum domain [{glo}, {ghi}]"
                )));
            }
        }
        let [hlo, hhi] = self.h.domain_box()[0];
        let lo = x - t - 2.0 * m;
        let hi = x + t + 2.0 * m;
        if !(hlo < lo && hi < hhi) {
            return Err(Error::Compactness(format!(
                "cone base [{lo}, {hi}] leaves the velocity-datum domain [{hlo}, {hhi}]"
            )));
        }
        Ok(())
    }
}

/// A field that can be sampled per grid epsilon; the common face of the
/// built solvers and of closed-form candidates handed to `residual_check`.
/// `k` indexes the grid and `eps` is its sample, passed together so
/// implementations neither look grids up nor own one.
pub trait SolutionField: Sync {
    fn space_dim(&self) -> usize;

    /// One epsilon sample of the field.
    fn value(&self, k: usize, eps: f64, x: &[f64], t: f64) -> Result<f64>;

    /// Check the block `x_i -+ m`, `t -+ m` stays where the field is
    /// defined (called on tail indices before differencing).
    fn contains(&self, k: usize, x: &[f64], t: f64, m: f64) -> Result<()>;
}

/// Reusable evaluation state for one `TransportSolution`.
pub struct TransportCtx {
    g: EvalCtx,
    f: Option<EvalCtx>,
    shifted: Vec<f64>,
    slice: Vec<f64>,
}

/// Evaluator for the transport solution `g(x - t b)` plus, when a source is
/// present, the slice integral of `s -> f(x + s b, t + s)` over `[-t, 0]`.
pub struct TransportSolution {
    problem: TransportProblem,
    b_vals: Vec<Vec<f64>>,
}

pub fn transport_solve(problem: TransportProblem) -> TransportSolution {
    let grid = Arc::clone(problem.grid());
    let b_vals = (0..grid.len())
        .map(|k| problem.b.iter().map(|c| c.value_at(k).re()).collect())
        .collect();
    TransportSolution { problem, b_vals }
}

impl TransportSolution {
    pub fn problem(&self) -> &TransportProblem {
        &self.problem
    }

    pub fn ctx(&self) -> TransportCtx {
        TransportCtx {
            g: self.problem.g.eval_ctx(),
            f: self.problem.f.as_ref().map(Representative::eval_ctx),
            shifted: vec![0.0; self.problem.dim()],
            slice: vec![0.0; self.problem.dim() + 1],
        }
    }

    /// One epsilon sample through a reusable context.
    pub fn value_ctx(&self, ctx: &mut TransportCtx, k: usize, eps: f64, x: &[f64], t: f64) -> Result<f64> {
        let b = &self.b_vals[k];
        for ((s, xi), bi) in ctx.shifted.iter_mut().zip(x).zip(b) {
            *s = xi - t * bi;
        }
        let mut w = self.problem.g.eval_fast(&mut ctx.g, eps, &ctx.shifted)?.re();
        if let Some(f) = &self.problem.f {
            if t <= -self.problem.a {
                return Err(Error::domain(
                    "source",
                    format!("evaluation time {t} leaves the source half-line t > -{}", self.problem.a),
                ));
            }
            let gauss = rule(SOURCE_NODES);
            let fctx = ctx.f.as_mut().expect("context built from this solution");
            let mid = -t / 2.0;
            let half = t / 2.0;
            let mut acc = 0.0;
            for (node, wgt) in gauss.nodes.iter().zip(&gauss.weights) {
                let s = mid + half * node;
                for ((slot, xi), bi) in ctx.slice.iter_mut().zip(x).zip(b) {
                    *slot = xi + s * bi;
                }
                let nd = self.problem.dim();
                ctx.slice[nd] = t + s;
                acc += wgt * f.eval_fast(fctx, eps, &ctx.slice)?.re();
            }
            w += half * acc;
        }
        Ok(w)
    }

    /// The solution net at a generalized point and generalized time.  Tail
    /// time samples must be positive; tail evaluation blocks must sit inside
    /// the data domains, while head samples evaluate wherever they land.
    pub fn eval(&self, x: &GenPoint, t: &GenNet) -> Result<GenNet> {
        let grid = self.problem.grid();
        if x.dim() != self.problem.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point dimension {} vs space dimension {}",
                x.dim(),
                self.problem.dim()
            )));
        }
        if !compatible(grid, x.grid()) || !compatible(grid, t.grid()) {
            return Err(Error::GridMismatch(
                "point, time and velocity must share one grid".into(),
            ));
        }
        if t.is_complex() || x.coords().iter().any(GenNet::is_complex) {
            return Err(Error::InvalidInput("evaluation point and time must be real".into()));
        }
        let start = grid.tail_start();
        let mut ctx = self.ctx();
        let mut xk = vec![0.0; x.dim()];
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let eps = grid.samples()[k];
            let tk = t.value_at(k).re();
            for (slot, c) in xk.iter_mut().zip(x.coords()) {
                *slot = c.value_at(k).re();
            }
            if k >= start {
                if !(tk > 0.0) {
                    return Err(Error::Hypothesis(format!(
                        "time tail sample {k} = {tk} is not positive"
                    )));
                }
                self.problem.check_block(k, &xk, tk, 0.0)?;
            }
            values.push(Value::Real(self.value_ctx(&mut ctx, k, eps, &xk, tk)?));
        }
        GenNet::new(Arc::clone(grid), values)
    }
}

impl SolutionField for TransportSolution {
    fn space_dim(&self) -> usize {
        self.problem.dim()
    }

    fn value(&self, k: usize, eps: f64, x: &[f64], t: f64) -> Result<f64> {
        let mut ctx = self.ctx();
        self.value_ctx(&mut ctx, k, eps, x, t)
    }

    fn contains(&self, k: usize, x: &[f64], t: f64, m: f64) -> Result<()> {
        self.problem.check_block(k, x, t, m)
    }
}

/// Reusable evaluation state for one `WaveSolution`.
pub struct WaveCtx {
    g: EvalCtx,
    h: EvalCtx,
}

/// Evaluator for the d'Alembert solution
/// `(g(x+t) + g(x-t))/2 + (1/2) * integral of h over [x-t, x+t]`.
pub struct WaveSolution {
    problem: WaveProblem,
}

pub fn wave_solve(problem: WaveProblem) -> WaveSolution {
    WaveSolution { problem }
}

impl WaveSolution {
    pub fn problem(&self) -> &WaveProblem {
        &self.problem
    }

    pub fn ctx(&self) -> WaveCtx {
        WaveCtx { g: self.problem.g.eval_ctx(), h: self.problem.h.eval_ctx() }
    }

    pub fn value_ctx(&self, ctx: &mut WaveCtx, eps: f64, x: f64, t: f64) -> Result<f64> {
        let gp = self.problem.g.eval_fast(&mut ctx.g, eps, &[x + t])?.re();
        let gm = self.problem.g.eval_fast(&mut ctx.g, eps, &[x - t])?.re();
        let gauss = rule(SOURCE_NODES);
        let mut acc = 0.0;
        for (node, wgt) in gauss.nodes.iter().zip(&gauss.weights) {
            acc += wgt * self.problem.h.eval_fast(&mut ctx.h, eps, &[x + t * node])?.re();
        }
        Ok(0.5 * (gp + gm) + 0.5 * t * acc)
    }

    /// The solution net at generalized position and time (tail time
    /// samples positive, tail cones inside the data domains).
    pub fn eval(&self, x: &GenNet, t: &GenNet) -> Result<GenNet> {
        let grid = Arc::clone(x.grid());
        if !compatible(&grid, t.grid()) {
            return Err(Error::GridMismatch("position and time on different grids".into()));
        }
        if x.is_complex() || t.is_complex() {
            return Err(Error::InvalidInput("evaluation point and time must be real".into()));
        }
        let start = grid.tail_start();
        let mut ctx = self.ctx();
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let eps = grid.samples()[k];
            let xk = x.value_at(k).re();
            let tk = t.value_at(k).re();
            if k >= start {
                if !(tk > 0.0) {
                    return Err(Error::Hypothesis(format!(
                        "time tail sample {k} = {tk} is not positive"
                    )));
                }
                self.problem.check_block(xk, tk, 0.0)?;
            }
            values.push(Value::Real(self.value_ctx(&mut ctx, eps, xk, tk)?));
        }
        GenNet::new(grid, values)
    }
}

impl SolutionField for WaveSolution {
    fn space_dim(&self) -> usize {
        1
    }

    fn value(&self, _k: usize, eps: f64, x: &[f64], t: f64) -> Result<f64> {
        let mut ctx = self.ctx();
        self.value_ctx(&mut ctx, eps, x[0], t)
    }

    fn contains(&self, _k: usize, x: &[f64], t: f64, m: f64) -> Result<()> {
        self.problem.check_block(x[0], t, m)
    }
}

/// A candidate field given in closed form over `(x1..xn, t)`, so that
/// `residual_check` can score arbitrary formulas against an equation, not
/// only the built solvers.
pub struct ExprSolution {
    rep: Representative,
}

impl ExprSolution {
    /// The representative's last variable is time; at least one space
    /// variable must precede it.
    pub fn new(rep: Representative) -> Result<ExprSolution> {
        if rep.arity() < 2 {
            return Err(Error::DimensionMismatch(
                "candidate needs at least one space variable plus time".into(),
            ));
        }
        if rep.codomain() != Codomain::Real {
            return Err(Error::InvalidInput("candidate must be real-valued".into()));
        }
        Ok(ExprSolution { rep })
    }

    pub fn representative(&self) -> &Representative {
        &self.rep
    }
}

impl SolutionField for ExprSolution {
    fn space_dim(&self) -> usize {
        self.rep.arity() - 1
    }

    fn value(&self, _k: usize, eps: f64, x: &[f64], t: f64) -> Result<f64> {
        let mut ctx = self.rep.eval_ctx();
        let mut coords = Vec::with_capacity(x.len() + 1);
        coords.extend_from_slice(x);
        coords.push(t);
        Ok(self.rep.eval_fast(&mut ctx, eps, &coords)?.re())
    }

    fn contains(&self, _k: usize, x: &[f64], t: f64, m: f64) -> Result<()> {
        for (i, (c, [dlo, dhi])) in
            x.iter().chain(std::iter::once(&t)).zip(self.rep.domain_box()).enumerate()
        {
            if !(*dlo < c - m && c + m < *dhi) {
                return Err(Error::Compactness(format!(
                    "probe block [{}, {}] on variable {} leaves the candidate domain [{dlo}, {dhi}]",
                    c - m,
                    c + m,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Which equation a residual is assembled for.
pub enum Pde<'a> {
    Transport(&'a TransportProblem),
    Wave(&'a WaveProblem),
}

/// Outcome of `residual_check`.  `worst` is the per-epsilon maximum of
/// `|residual|` over the probes; `floor` the per-epsilon finite-difference
/// noise bound (truncation plus roundoff) the scaled judgment used.  `raw`
/// classifies `worst` as is; `scaled` classifies it with samples at or
/// below the floor snapped to zero.  A field solves the equation when
/// `scaled` is `Null`; `raw` stays informative for exactly-cancelling
/// residuals.
pub struct ResidualReport {
    pub worst: GenNet,
    pub floor: GenNet,
    pub raw: NetClass,
    pub scaled: NetClass,
}

/// Probe a candidate field with central differences and classify the
/// equation residual.  Probes are `(point, time)` pairs on one grid; the
/// stencil block must stay interior to `t > 0` and to the candidate's and
/// data's domains by `2 * h_fd` on every tail sample.
pub fn residual_check(
    w: &dyn SolutionField,
    pde: Pde<'_>,
    probes: &[(GenPoint, GenNet)],
    h_fd: f64,
    ccfg: &ClassifyConfig,
) -> Result<ResidualReport> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("residual check needs at least one probe".into()));
    }
    if !h_fd.is_finite() || h_fd <= 0.0 || h_fd >= 0.1 {
        return Err(Error::InvalidInput(
            "finite-difference step must lie in (0, 0.1)".into(),
        ));
    }
    let n = match pde {
        Pde::Transport(p) => p.dim(),
        Pde::Wave(_) => 1,
    };
    if w.space_dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "candidate field has {} space variables, the equation has {n}",
            w.space_dim()
        )));
    }
    let grid = Arc::clone(probes[0].0.grid());
    if let Pde::Transport(p) = pde {
        if !compatible(&grid, p.grid()) {
            return Err(Error::GridMismatch("probes and velocity on different grids".into()));
        }
    }
    for (x, t) in probes {
        if x.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "probe dimension {} vs space dimension {n}",
                x.dim()
            )));
        }
        if !compatible(&grid, x.grid()) || !compatible(&grid, t.grid()) {
            return Err(Error::GridMismatch("probes on different grids".into()));
        }
        if t.is_complex() || x.coords().iter().any(GenNet::is_complex) {
            return Err(Error::InvalidInput("probes must be real".into()));
        }
    }
    let len = grid.len();
    let start = grid.tail_start();
    let margin = 2.0 * h_fd;
    let mut xk = vec![0.0; n];
    for (pi, (x, t)) in probes.iter().enumerate() {
        for k in start..len {
            let tk = t.value_at(k).re();
            for (slot, c) in xk.iter_mut().zip(x.coords()) {
                *slot = c.value_at(k).re();
            }
            if tk - margin <= 0.0 {
                return Err(Error::Hypothesis(format!(
                    "probe {}: time tail sample {tk} is not interior to t > 0 by margin {margin}",
                    pi + 1
                )));
            }
            w.contains(k, &xk, tk, margin)?;
            if let Pde::Transport(p) = pde {
                if let Some(f) = p.source() {
                    for (i, xi) in xk.iter().enumerate() {
                        let [dlo, dhi] = f.domain_box()[i];
                        if !(dlo < *xi && *xi < dhi) {
                            return Err(Error::Compactness(format!(
                                "probe {}: source argument {xi} on axis {} outside [{dlo}, {dhi}]",
                                pi + 1,
                                i + 1
                            )));
                        }
                    }
                    let [dlo, dhi] = f.domain_box()[n];
                    if !(dlo < tk && tk < dhi) {
                        return Err(Error::Compactness(format!(
                            "probe {}: time {tk} outside the source time domain [{dlo}, {dhi}]",
                            pi + 1
                        )));
                    }
                }
            }
        }
    }

    let order: i32 = match pde {
        Pde::Transport(_) => 1,
        Pde::Wave(_) => 2,
    };
    let h = h_fd;
    let h2 = h * h;
    let mut worst = vec![0.0f64; len];
    let mut floor = vec![0.0f64; len];
    let mut fctx = match pde {
        Pde::Transport(p) => p.source().map(Representative::eval_ctx),
        Pde::Wave(_) => None,
    };
    let mut xs = vec![0.0; n];
    let mut fcoords = Vec::with_capacity(n + 1);
    for (x, t) in probes {
        for k in 0..len {
            let eps = grid.samples()[k];
            let tk = t.value_at(k).re();
            for (slot, c) in xk.iter_mut().zip(x.coords()) {
                *slot = c.value_at(k).re();
            }
            let c = w.value(k, eps, &xk, tk)?;
            let tp = w.value(k, eps, &xk, tk + h)?;
            let tm = w.value(k, eps, &xk, tk - h)?;
            let mut big = c.abs().max(tp.abs()).max(tm.abs());
            let mut m2 = ((tp - 2.0 * c + tm) / h2).abs();
            let r = match pde {
                Pde::Transport(p) => {
                    let mut r = (tp - tm) / (2.0 * h);
                    for i in 0..n {
                        xs.copy_from_slice(&xk);
                        xs[i] = xk[i] + h;
                        let xp = w.value(k, eps, &xs, tk)?;
                        xs[i] = xk[i] - h;
                        let xm = w.value(k, eps, &xs, tk)?;
                        big = big.max(xp.abs()).max(xm.abs());
                        m2 = m2.max(((xp - 2.0 * c + xm) / h2).abs());
                        r += p.velocity()[i].value_at(k).re() * (xp - xm) / (2.0 * h);
                    }
                    if let Some(f) = p.source() {
                        fcoords.clear();
                        fcoords.extend_from_slice(&xk);
                        fcoords.push(tk);
                        let fctx = fctx.as_mut().expect("built above");
                        r -= f.eval_fast(fctx, eps, &fcoords)?.re();
                    }
                    r
                }
                Pde::Wave(_) => {
                    let dtt = (tp - 2.0 * c + tm) / h2;
                    xs.copy_from_slice(&xk);
                    xs[0] = xk[0] + h;
                    let xp = w.value(k, eps, &xs, tk)?;
                    xs[0] = xk[0] - h;
                    let xm = w.value(k, eps, &xs, tk)?;
                    big = big.max(xp.abs()).max(xm.abs());
                    let dxx = (xp - 2.0 * c + xm) / h2;
                    m2 = m2.max(dxx.abs());
                    dtt - dxx
                }
            };
            worst[k] = if worst[k].is_nan() || r.is_nan() {
                f64::NAN
            } else {
                worst[k].max(r.abs())
            };
            // Truncation scales with the largest second difference the
            // stencils saw; roundoff with the largest value over the h^order
            // amplification of central differencing.
            let noise = 10.0 * m2.max(1.0) * h2
                + 100.0 * f64::EPSILON * big.max(1.0) / h.powi(order);
            floor[k] = floor[k].max(noise);
        }
    }
    let worst = GenNet::new(Arc::clone(&grid), worst.into_iter().map(Value::Real).collect())?;
    let floor = GenNet::new(grid, floor.into_iter().map(Value::Real).collect())?;
    let snapped = worst.zip(&floor, |r, fl| {
        if r.re().abs() <= fl.re() {
            Value::Real(0.0)
        } else {
            r
        }
    })?;
    Ok(ResidualReport {
        raw: worst.classify(ccfg),
        scaled: snapped.classify(ccfg),
        worst,
        floor,
    })
}
