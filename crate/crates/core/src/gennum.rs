use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::expr::{Env, Expr};
use crate::grid::{compatible, EpsilonGrid};
use crate::value::Value;
use crate::Result;

/// Thresholds for asymptotic classification.
///
/// The decision is made on the tail of the grid from a least-squares fit of
/// `log |x_eps|` against `log eps`:
///
/// * slope at least `null_threshold` (with a good fit) reads as "decays
///   faster than any power we can distinguish" -> Null;
/// * a good fit whose pointwise exponents stay within `invertible_margin` of
///   the slope certifies a two-sided power bound -> Invertible;
/// * growth no worse than `eps^-null_threshold` -> Moderate;
/// * anything else is Indeterminate.
///
/// Magnitudes at or below `underflow_floor` are treated as having underflowed
/// to zero; a tail of underflows is the strongest possible Null evidence.
#[derive(Clone, Copy, Debug)]
pub struct ClassifyConfig {
    pub null_threshold: f64,
    pub residual_max: f64,
    pub invertible_margin: f64,
    pub underflow_floor: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            null_threshold: 25.0,
            residual_max: 0.5,
            invertible_margin: 2.0,
            underflow_floor: 1e-300,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NetKind {
    Null,
    Invertible,
    Moderate,
    Indeterminate,
}

/// Classification verdict.  `estimated_valuation` is the fitted slope
/// (`+inf` for an underflowed null, NaN when no fit was possible);
/// `fit_residual` is the RMS residual of the fit in log space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetClass {
    pub kind: NetKind,
    pub estimated_valuation: f64,
    pub fit_residual: f64,
}

impl NetClass {
    fn new(kind: NetKind, estimated_valuation: f64, fit_residual: f64) -> NetClass {
        NetClass { kind, estimated_valuation, fit_residual }
    }
}

// JSON cannot carry IEEE infinities or NaN, so the valuation serializes as a
// number, the string "inf", or null.
impl Serialize for NetClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("NetClass", 3)?;
        s.serialize_field("kind", &self.kind)?;
        if self.estimated_valuation.is_nan() {
            s.serialize_field("estimated_valuation", &Option::<f64>::None)?;
        } else if self.estimated_valuation.is_infinite() {
            s.serialize_field("estimated_valuation", "inf")?;
        } else {
            s.serialize_field("estimated_valuation", &self.estimated_valuation)?;
        }
        if self.fit_residual.is_nan() {
            s.serialize_field("fit_residual", &Option::<f64>::None)?;
        } else {
            s.serialize_field("fit_residual", &self.fit_residual)?;
        }
        s.end()
    }
}

/// Least-squares line through `(x_i, y_i)`: returns (slope, intercept, RMS
/// residual).
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = y - (slope * x + intercept);
        ss += r * r;
    }
    (slope, intercept, (ss / n).sqrt())
}

/// A generalized number: one sample per grid epsilon.
#[derive(Clone, Debug, PartialEq)]
pub struct GenNet {
    grid: Arc<EpsilonGrid>,
    values: Vec<Value>,
}

impl GenNet {
    pub fn new(grid: Arc<EpsilonGrid>, values: Vec<Value>) -> Result<GenNet> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "net has {} values for a grid of {} samples",
                values.len(),
                grid.len()
            )));
        }
        Ok(GenNet { grid, values })
    }

    pub fn constant(grid: Arc<EpsilonGrid>, value: Value) -> GenNet {
        let n = grid.len();
        GenNet { grid, values: vec![value; n] }
    }

    pub fn zero(grid: Arc<EpsilonGrid>) -> GenNet {
        GenNet::constant(grid, Value::Real(0.0))
    }

    /// The gauge net `eps^r`.
    pub fn alpha(grid: Arc<EpsilonGrid>, r: f64) -> GenNet {
        let values = grid.samples().iter().map(|&e| Value::Real(e.powf(r))).collect();
        GenNet { grid, values }
    }

    /// Evaluate an `eps`-only expression along the grid.
    pub fn from_expr(grid: Arc<EpsilonGrid>, e: &Expr) -> Result<GenNet> {
        for v in e.free_vars() {
            if v != "eps" {
                return Err(Error::InvalidInput(format!(
                    "net expression may only use `eps`, found `{v}`"
                )));
            }
        }
        let complex = e.has_imag();
        let mut env = Env::new();
        env.set("eps", Value::Real(1.0));
        let slot = env.index_of("eps").unwrap();
        let mut values = Vec::with_capacity(grid.len());
        for &eps in grid.samples() {
            env.set_index(slot, Value::Real(eps));
            values.push(e.eval_in(&env, complex)?);
        }
        Ok(GenNet { grid, values })
    }

    pub fn grid(&self) -> &Arc<EpsilonGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn value_at(&self, index: usize) -> Value {
        self.values[index]
    }

    pub fn is_complex(&self) -> bool {
        self.values.iter().any(Value::is_complex)
    }

    pub fn map(&self, f: impl Fn(Value) -> Value) -> GenNet {
        GenNet {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_grid(&self, other: &GenNet) -> Result<()> {
        if compatible(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "nets live on different epsilon grids".into(),
            ))
        }
    }

    pub fn zip(&self, other: &GenNet, f: impl Fn(Value, Value) -> Value) -> Result<GenNet> {
        self.check_grid(other)?;
        Ok(GenNet {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &GenNet) -> Result<GenNet> {
        self.zip(other, Value::add)
    }

    pub fn sub(&self, other: &GenNet) -> Result<GenNet> {
        self.zip(other, Value::sub)
    }

    pub fn mul(&self, other: &GenNet) -> Result<GenNet> {
        self.zip(other, Value::mul)
    }

    pub fn neg(&self) -> GenNet {
        self.map(Value::neg)
    }

    pub fn scale(&self, k: f64) -> GenNet {
        self.map(|v| v.scale(k))
    }

    /// Componentwise magnitude: a real net.
    pub fn magnitude(&self) -> GenNet {
        self.map(|v| Value::Real(v.magnitude()))
    }

    /// Division, defined only by an invertible denominator.  Head samples
    /// where the denominator vanishes are set to zero (the tail cannot
    /// vanish once invertibility is certified).
    pub fn div(&self, other: &GenNet, cfg: &ClassifyConfig) -> Result<GenNet> {
        self.check_grid(other)?;
        let class = other.classify(cfg);
        if class.kind != NetKind::Invertible {
            return Err(Error::Hypothesis(format!(
                "division requires an invertible denominator (got {:?})",
                class.kind
            )));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| {
                if b.is_zero() {
                    Value::Real(0.0)
                } else {
                    a.div(b).expect("nonzero denominator")
                }
            })
            .collect();
        Ok(GenNet { grid: Arc::clone(&self.grid), values })
    }

    /// Tail magnitudes paired with their epsilons.
    fn tail_mags(&self) -> (Vec<f64>, Vec<f64>) {
        let start = self.grid.tail_start();
        let eps: Vec<f64> = self.grid.samples()[start..].to_vec();
        let mags: Vec<f64> = self.values[start..].iter().map(Value::magnitude).collect();
        (eps, mags)
    }

    /// Classify the net's tail behavior.  See [`ClassifyConfig`] for the
    /// decision rules.  Note the estimator is deliberately blunt about
    /// extremely fast decay: any certified decay steeper than
    /// `eps^null_threshold` is reported Null even though such a net may be a
    /// large power of eps rather than genuinely sub-polynomial.
    pub fn classify(&self, cfg: &ClassifyConfig) -> NetClass {
        let (eps, mags) = self.tail_mags();
        if mags.iter().any(|m| !m.is_finite()) {
            return NetClass::new(NetKind::Indeterminate, f64::NAN, f64::NAN);
        }
        let underflowed = mags.iter().filter(|&&m| m <= cfg.underflow_floor).count();
        if underflowed == mags.len() {
            return NetClass::new(NetKind::Null, f64::INFINITY, 0.0);
        }
        if underflowed > 0 {
            // Mixed underflow: no trustworthy fit. A longer tail would be
            // needed to separate "crossing into underflow" from noise.
            return NetClass::new(NetKind::Indeterminate, f64::NAN, f64::NAN);
        }
        let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = mags.iter().map(|m| m.ln()).collect();
        let (slope, _icept, residual) = fit_line(&xs, &ys);
        if !slope.is_finite() || !residual.is_finite() {
            return NetClass::new(NetKind::Indeterminate, f64::NAN, f64::NAN);
        }
        // Pointwise exponents |x_eps| = eps^p.
        let pointwise: Vec<f64> = ys.iter().zip(&xs).map(|(y, x)| y / x).collect();
        let p_max = pointwise.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p_min = pointwise.iter().cloned().fold(f64::INFINITY, f64::min);

        if slope >= cfg.null_threshold && residual <= cfg.residual_max {
            return NetClass::new(NetKind::Null, slope, residual);
        }
        // Invertibility needs a two-sided bound: the fit must be tight and no
        // sample may decay much faster than the fitted power (that would
        // allow the net to dip toward zero along a subsequence).
        if residual <= cfg.residual_max && p_max <= slope + cfg.invertible_margin {
            return NetClass::new(NetKind::Invertible, slope, residual);
        }
        if p_min >= -cfg.null_threshold {
            return NetClass::new(NetKind::Moderate, slope, residual);
        }
        NetClass::new(NetKind::Indeterminate, slope, residual)
    }

    /// True when some tail sample grows faster than `eps^-null_threshold`;
    /// used to reject non-moderate data early.
    pub fn superpolynomial_growth(&self, cfg: &ClassifyConfig) -> bool {
        let (eps, mags) = self.tail_mags();
        for (e, m) in eps.iter().zip(&mags) {
            if !m.is_finite() {
                return true;
            }
            if *m > cfg.underflow_floor && m.ln() / e.ln() < -cfg.null_threshold {
                return true;
            }
        }
        false
    }

    /// Heuristic test for association to zero (`x_eps -> 0` without a rate):
    /// the tail follows a power law with strictly positive exponent, or
    /// underflows outright.  Weaker than Null — `1/(-log(eps))` is associated
    /// to zero yet has sharp norm 1.
    pub fn tends_to_zero(&self, cfg: &ClassifyConfig) -> bool {
        let class = self.classify(cfg);
        match class.kind {
            NetKind::Null => true,
            NetKind::Indeterminate => false,
            _ => class.estimated_valuation > 0.0 && class.fit_residual <= cfg.residual_max,
        }
    }

    /// Sharp norm `exp(-valuation)`: 0 for an underflowed null net, an error
    /// when the tail admits no classification.
    pub fn sharp_norm(&self, cfg: &ClassifyConfig) -> Result<f64> {
        let class = self.classify(cfg);
        match class.kind {
            NetKind::Indeterminate => Err(Error::Hypothesis(
                "sharp norm undefined: tail behavior is indeterminate".into(),
            )),
            _ => {
                if class.estimated_valuation.is_infinite() {
                    Ok(0.0)
                } else {
                    Ok((-class.estimated_valuation).exp())
                }
            }
        }
    }
}

/// Euclidean distance net between two points given componentwise.
pub fn gen_distance(xs: &[GenNet], ys: &[GenNet]) -> Result<GenNet> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!(
            "distance between points of dimension {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let grid = Arc::clone(xs[0].grid());
    for net in xs.iter().chain(ys) {
        if !compatible(&grid, net.grid()) {
            return Err(Error::GridMismatch("distance components on different grids".into()));
        }
    }
    let n = grid.len();
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let mut ss = 0.0f64;
        for (x, y) in xs.iter().zip(ys) {
            let d = x.value_at(k).sub(y.value_at(k));
            let m = d.magnitude();
            ss += m * m;
        }
        values.push(Value::Real(ss.sqrt()));
    }
    GenNet::new(grid, values)
}

/// Sharp norm of a vector of nets (norm of the componentwise magnitude).
pub fn sharp_norm_vec(xs: &[GenNet], cfg: &ClassifyConfig) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::DimensionMismatch("empty vector".into()));
    }
    let zeros: Vec<GenNet> = xs.iter().map(|x| GenNet::zero(Arc::clone(x.grid()))).collect();
    gen_distance(xs, &zeros)?.sharp_norm(cfg)
}

/// Membership in the sharp neighborhood of gauge radius `r` around `x0`:
/// true iff `|x_eps - x0_eps| <= eps^r` at every tail sample.  The
/// comparison is per-sample and boundary-inclusive, so `x0 + alpha(r)` lies
/// exactly on the boundary and is inside.
pub fn in_ball(x: &GenNet, x0: &GenNet, r: f64) -> Result<bool> {
    if !compatible(x.grid(), x0.grid()) {
        return Err(Error::GridMismatch("ball membership across different grids".into()));
    }
    let start = x.grid().tail_start();
    let eps = &x.grid().samples()[start..];
    for (k, &e) in eps.iter().enumerate() {
        let idx = start + k;
        let d = x.value_at(idx).sub(x0.value_at(idx)).magnitude();
        if !(d <= e.powf(r)) {
            return Ok(false);
        }
    }
    Ok(true)
}

// --- serialization -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SampleJson {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Serialize, Deserialize)]
struct NetJson {
    grid: Vec<f64>,
    #[serde(default)]
    tail_len: Option<usize>,
    values: Vec<SampleJson>,
}

impl Serialize for GenNet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let complex = self.is_complex();
        let values = self
            .values
            .iter()
            .map(|v| {
                if complex {
                    SampleJson::Complex([v.re(), v.im()])
                } else {
                    SampleJson::Real(v.re())
                }
            })
            .collect();
        NetJson {
            grid: self.grid.samples().to_vec(),
            tail_len: Some(self.grid.tail_len()),
            values,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GenNet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<GenNet, D::Error> {
        let raw = NetJson::deserialize(deserializer)?;
        let tail = raw.tail_len.unwrap_or_else(|| raw.grid.len().min(16));
        let grid = EpsilonGrid::new(raw.grid, tail).map_err(D::Error::custom)?;
        let values: Vec<Value> = raw
            .values
            .iter()
            .map(|s| match s {
                SampleJson::Real(x) => Value::Real(*x),
                SampleJson::Complex([re, im]) => Value::complex(*re, *im),
            })
            .collect();
        GenNet::new(grid, values).map_err(D::Error::custom)
    }
}
