use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::expr::powi;
use crate::genfun::{evaluate_at, GenPoint, Representative};
use crate::gennum::{ClassifyConfig, GenNet, NetClass, NetKind};
use crate::grid::compatible;
use crate::quad::{classify_gap, composite_nodes, QuadConfig};
use crate::membrane::History;
use crate::value::Value;
use crate::Result;

fn plane_point(v: Value) -> Complex64 {
    v.to_c64()
}

/// Per-epsilon distance from a (possibly complex) generalized point to the
/// trace of a plane history: a 1024-sample global scan followed by local
/// ternary refinement of the best bracket.
pub fn distance_to_history(x: &GenNet, gamma: &History) -> Result<GenNet> {
    if gamma.dim() != 2 {
        return Err(Error::DimensionMismatch(
            "history distance is computed for plane curves".into(),
        ));
    }
    if !compatible(x.grid(), gamma.grid()) {
        return Err(Error::GridMismatch("point and curve on different grids".into()));
    }
    let grid = Arc::clone(gamma.grid());
    let closed = gamma.flags().closed;
    let m = 1024usize;
    let values: Result<Vec<Value>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let z0 = plane_point(x.value_at(k));
            let sq = |p: &[f64]| {
                let dx = p[0] - z0.re;
                let dy = p[1] - z0.im;
                dx * dx + dy * dy
            };
            let mut best = f64::INFINITY;
            let mut best_j = 0usize;
            for j in 0..=m {
                let t = j as f64 / m as f64;
                let d = sq(&gamma.point_at(k, t)?);
                if d < best {
                    best = d;
                    best_j = j;
                }
            }
            // Refine around the best sample (wrap over the seam when closed).
            let span = 1.0 / m as f64;
            let (mut lo, mut hi) = if closed {
                (best_j as f64 * span - span, best_j as f64 * span + span)
            } else {
                (
                    (best_j as f64 * span - span).max(0.0),
                    (best_j as f64 * span + span).min(1.0),
                )
            };
            let wrap = |t: f64| t.rem_euclid(1.0);
            for _ in 0..100 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                let d1 = sq(&gamma.point_at(k, wrap(m1))?);
                let d2 = sq(&gamma.point_at(k, wrap(m2))?);
                if d1 < d2 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let refined = sq(&gamma.point_at(k, wrap(0.5 * (lo + hi)))?);
            Ok(Value::Real(best.min(refined).sqrt()))
        })
        .collect();
    GenNet::new(grid, values?)
}

/// A validated G-Cauchy configuration: an arity-1 integrand, a generalized
/// center, and a closed plane history that winds once around the center with
/// invertible separation.  Construction runs the hypothesis battery
/// (separation invertibility, winding number, a sampled Cauchy-Riemann
/// probe); the integral operators then assume it.
#[derive(Debug)]
pub struct ContourSetup {
    f: Representative,
    z0: GenNet,
    gamma: History,
    separation: GenNet,
    separation_class: NetClass,
}

impl ContourSetup {
    pub fn new(
        f: Representative,
        z0: GenNet,
        gamma: History,
        ccfg: &ClassifyConfig,
    ) -> Result<ContourSetup> {
        if f.arity() != 1 {
            return Err(Error::DimensionMismatch(
                "contour integrands take one complex coordinate".into(),
            ));
        }
        if gamma.dim() != 2 {
            return Err(Error::DimensionMismatch("contours are plane curves".into()));
        }
        let flags = gamma.flags();
        if !(flags.closed && flags.simple) {
            return Err(Error::Hypothesis(
                "contour must be declared closed and simple".into(),
            ));
        }
        if !compatible(z0.grid(), gamma.grid()) {
            return Err(Error::GridMismatch("center and contour on different grids".into()));
        }
        // The curve trace must sit inside the integrand's reference square.
        let [dlo, dhi] = f.domain_box()[0];
        for [glo, ghi] in gamma.compact_box() {
            if !(dlo <= *glo && *ghi <= dhi) {
                return Err(Error::Compactness(
                    "contour trace escapes the integrand's reference box".into(),
                ));
            }
        }

        let separation = distance_to_history(&z0, &gamma)?;
        let separation_class = separation.classify(ccfg);
        if separation_class.kind != NetKind::Invertible {
            return Err(Error::Hypothesis(format!(
                "separation d(z0, trace) must be invertible; classified {:?}",
                separation_class.kind
            )));
        }

        let grid = gamma.grid();
        // Discrete winding number at every tail epsilon: the 512-gon argument
        // sum must land on +1.
        for k in grid.tail_start()..grid.len() {
            let z0k = plane_point(z0.value_at(k));
            let m = 512usize;
            let mut prev = {
                let p = gamma.point_at(k, 0.0)?;
                Complex64::new(p[0], p[1]) - z0k
            };
            let mut total = 0.0f64;
            for j in 1..=m {
                let p = gamma.point_at(k, j as f64 / m as f64)?;
                let cur = Complex64::new(p[0], p[1]) - z0k;
                total += (cur / prev).arg();
                prev = cur;
            }
            let winding = total / (2.0 * std::f64::consts::PI);
            if (winding - 1.0).abs() > 1e-3 {
                return Err(Error::Hypothesis(format!(
                    "contour winding number is {winding:.6}, expected 1 (eps index {k})"
                )));
            }
        }

        // Sampled Cauchy-Riemann probe at the first tail epsilon: centered
        // finite differences along the real and imaginary axes must agree.
        let k0 = grid.tail_start();
        let eps0 = grid.samples()[k0];
        let z0k = plane_point(z0.value_at(k0));
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for probe in 0..32 {
            let t: f64 = rng.gen_range(0.0..1.0);
            let p = gamma.point_at(k0, t)?;
            let zc = Complex64::new(p[0], p[1]);
            // Alternate between contour points and points pulled toward the
            // center, covering the annulus the moments actually see.
            let z = if probe % 2 == 0 { zc } else { z0k + (zc - z0k).scale(0.5) };
            let h = 1e-6 * z.norm().max(1.0);
            let fv = |w: Complex64| -> Result<Complex64> {
                Ok(f.eval_raw(eps0, &[Value::Complex(w)])?.to_c64())
            };
            let dx = (fv(z + h)? - fv(z - h)?) / (2.0 * h);
            let dy = (fv(z + Complex64::new(0.0, h))? - fv(z - Complex64::new(0.0, h))?)
                / Complex64::new(0.0, 2.0 * h);
            let scale = dx.norm().max(dy.norm()).max(1.0);
            if (dx - dy).norm() > 1e-8 * scale {
                return Err(Error::Hypothesis(format!(
                    "Cauchy-Riemann probe failed near z = {z}: d/dx = {dx}, d/d(iy) = {dy}"
                )));
            }
        }

        Ok(ContourSetup { f, z0, gamma, separation, separation_class })
    }

    pub fn integrand(&self) -> &Representative {
        &self.f
    }

    pub fn center(&self) -> &GenNet {
        &self.z0
    }

    pub fn contour(&self) -> &History {
        &self.gamma
    }

    pub fn separation(&self) -> &GenNet {
        &self.separation
    }

    pub fn separation_class(&self) -> NetClass {
        self.separation_class
    }

    /// `eps -> (1/2*pi*i) * integral of f(zeta) / (zeta - z0)^(n+1) d(zeta)`.
    pub fn contour_moment(&self, n: u32, cfg: &QuadConfig) -> Result<GenNet> {
        if n > 127 {
            return Err(Error::InvalidInput("moment order capped at 127".into()));
        }
        let grid = Arc::clone(self.gamma.grid());
        let nodes = composite_nodes(0.0, 1.0, cfg.segments, cfg.gauss_order);
        let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
        let values: Result<Vec<Value>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let eps = grid.samples()[k];
                let z0 = plane_point(self.z0.value_at(k));
                let mut acc = Complex64::new(0.0, 0.0);
                for &(t, w) in &nodes {
                    let p = self.gamma.point_at(k, t)?;
                    let v = self.gamma.velocity_at(k, t)?;
                    let zeta = Complex64::new(p[0], p[1]);
                    let dz = Complex64::new(v[0], v[1]);
                    let fv = self.f.eval_raw(eps, &[Value::Complex(zeta)])?.to_c64();
                    let kernel = powi(1.0 / (zeta - z0), n as i32 + 1);
                    acc += fv * kernel * dz * w;
                }
                Ok(Value::Complex(acc / two_pi_i))
            })
            .collect();
        GenNet::new(grid, values?)
    }

    /// The G-Cauchy comparison: the 0-th contour moment against direct
    /// evaluation of the representative at the center.
    pub fn cauchy_eval(&self, cfg: &QuadConfig, ccfg: &ClassifyConfig) -> Result<CauchyReport> {
        let via_contour = self.contour_moment(0, cfg)?;
        let point = GenPoint::from_nets(vec![self.z0.clone()], 1e-6)?;
        let direct = evaluate_at(&self.f, &point)?;
        let gap = classify_gap(&via_contour, &direct, cfg, ccfg)?;
        Ok(CauchyReport { via_contour, direct, gap })
    }

    /// Goursat coefficient ladder: moments 0..=up_to.
    pub fn taylor_coefficients(&self, up_to: u32, cfg: &QuadConfig) -> Result<Vec<GenNet>> {
        (0..=up_to).map(|n| self.contour_moment(n, cfg)).collect()
    }

    /// Evaluate the truncated series `sum a_n (z - z0)^n` epsilon-wise.
    ///
    /// Convergence certificate (checked on tail samples): the sharp norm of
    /// z - z0 must not exceed 1, and |z_eps - z0_eps| must stay within an
    /// eighth of the separation — the proof-margin ball on which the
    /// geometric tail estimate holds.  Head samples are evaluated as-is.
    pub fn taylor_eval(
        &self,
        coeffs: &[GenNet],
        z: &GenNet,
        ccfg: &ClassifyConfig,
    ) -> Result<GenNet> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        }
        if !compatible(z.grid(), self.z0.grid()) {
            return Err(Error::GridMismatch("probe point on a different grid".into()));
        }
        let diff = z.sub(&self.z0)?;
        let norm = diff.sharp_norm(ccfg)?;
        if norm > 1.0 + 1e-9 {
            return Err(Error::Hypothesis(format!(
                "probe point leaves the unit sharp ball around the center (norm {norm:.6})"
            )));
        }
        let grid = Arc::clone(self.z0.grid());
        for k in grid.tail_start()..grid.len() {
            let d = diff.value_at(k).magnitude();
            let sep = self.separation.value_at(k).re();
            if d > sep / 8.0 {
                return Err(Error::Hypothesis(format!(
                    "probe point distance {d:.3e} exceeds an eighth of the separation {sep:.3e} at eps index {k}"
                )));
            }
        }
        let n = grid.len();
        let mut values = Vec::with_capacity(n);
        for k in 0..n {
            let d = diff.value_at(k).to_c64();
            let mut acc = Complex64::new(0.0, 0.0);
            for a in coeffs.iter().rev() {
                acc = acc * d + a.value_at(k).to_c64();
            }
            values.push(if acc.im == 0.0 {
                Value::Real(acc.re)
            } else {
                Value::Complex(acc)
            });
        }
        GenNet::new(grid, values)
    }
}

pub struct CauchyReport {
    pub via_contour: GenNet,
    pub direct: GenNet,
    pub gap: NetClass,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::Codomain;
    use crate::grid::EpsilonGrid;
    use crate::membrane::HistoryFlags;

    fn grid() -> Arc<EpsilonGrid> {
        EpsilonGrid::standard()
    }

    fn circle(g: &Arc<EpsilonGrid>, cx: f64, cy: f64, r: &str) -> History {
        let gc = 2.0 * std::f64::consts::PI * 1.05;
        History::new(
            Arc::clone(g),
            &[
                format!("{cx} + ({r})*cos(2*pi*t)"),
                format!("{cy} + ({r})*sin(2*pi*t)"),
            ],
            (gc, 0),
            HistoryFlags::closed_loop(),
        )
        .unwrap()
    }

    fn zrep(body: &str, half_width: f64, codomain: Codomain) -> Representative {
        Representative::with_vars(body, &["z"], vec![[-half_width, half_width]], codomain)
            .unwrap()
    }

    #[test]
    fn distance_to_circle_traces() {
        let g = grid();
        let z0 = GenNet::constant(Arc::clone(&g), Value::Real(0.0));
        let d = distance_to_history(&z0, &circle(&g, 0.0, 0.0, "1")).unwrap();
        for v in d.values() {
            assert!((v.re() - 1.0).abs() < 1e-12);
        }
        // Shrinking circle: the distance from its center is the gauge itself.
        // Centered at the origin so eps^2 coordinates stay exactly representable
        // (an offset center would absorb sub-ulp radii into rounding).
        let d = distance_to_history(&z0, &circle(&g, 0.0, 0.0, "eps^2")).unwrap();
        for (k, v) in d.values().iter().enumerate() {
            let exact = g.samples()[k].powi(2);
            assert!((v.re() - exact).abs() < 1e-9 * exact, "eps index {k}");
        }
    }

    #[test]
    fn setup_rejects_bad_hypotheses() {
        let g = grid();
        let ccfg = ClassifyConfig::default();
        let f = zrep("exp(z)", 4.0, Codomain::Complex);
        // Center on the trace: separation not invertible.
        let on_curve = GenNet::constant(Arc::clone(&g), Value::Real(1.0));
        let err = ContourSetup::new(f.clone(), on_curve, circle(&g, 0.0, 0.0, "1"), &ccfg)
            .unwrap_err();
        assert!(err.is_hypothesis(), "{err}");
        // Center outside: winding 0.
        let outside = GenNet::constant(Arc::clone(&g), Value::Real(3.0));
        let err = ContourSetup::new(f.clone(), outside, circle(&g, 0.0, 0.0, "1"), &ccfg)
            .unwrap_err();
        assert!(matches!(err, Error::Hypothesis(ref m) if m.contains("winding")), "{err}");
        // Non-holomorphic integrand: Cauchy-Riemann probe fails.
        let re_part = zrep("re(z)", 4.0, Codomain::Real);
        let z0 = GenNet::constant(Arc::clone(&g), Value::Real(0.0));
        let err = ContourSetup::new(re_part, z0, circle(&g, 0.0, 0.0, "1"), &ccfg).unwrap_err();
        assert!(matches!(err, Error::Hypothesis(ref m) if m.contains("Cauchy-Riemann")), "{err}");
    }

    #[test]
    fn cauchy_formula_for_exp() {
        let g = grid();
        let cfg = QuadConfig::default();
        let ccfg = ClassifyConfig::default();
        let f = zrep("exp(z)", 4.0, Codomain::Complex);
        let z0 = GenNet::constant(Arc::clone(&g), Value::complex(0.2, 0.1));
        let setup = ContourSetup::new(f, z0, circle(&g, 0.2, 0.1, "1"), &ccfg).unwrap();
        let report = setup.cauchy_eval(&cfg, &ccfg).unwrap();
        assert_eq!(report.gap.kind, NetKind::Null);
        for (v, d) in report.via_contour.values().iter().zip(report.direct.values()) {
            let gap = v.sub(*d).magnitude();
            assert!(gap <= 1e-9 * d.magnitude().max(1.0));
        }
    }

    #[test]
    fn goursat_coefficients_exp_and_geometric() {
        let g = grid();
        let cfg = QuadConfig::default();
        let ccfg = ClassifyConfig::default();
        let f = zrep("exp(z)", 4.0, Codomain::Complex);
        let z0 = GenNet::constant(Arc::clone(&g), Value::Real(0.0));
        let setup = ContourSetup::new(f, z0.clone(), circle(&g, 0.0, 0.0, "1"), &ccfg).unwrap();
        let coeffs = setup.taylor_coefficients(10, &cfg).unwrap();
        let mut fact = 1.0f64;
        for (n, a) in coeffs.iter().enumerate() {
            if n > 0 {
                fact *= n as f64;
            }
            for v in a.values() {
                assert!(
                    (v.to_c64() - 1.0 / fact).norm() < 1e-9,
                    "n={n}: {} vs {}",
                    v.to_c64(),
                    1.0 / fact
                );
            }
        }
        // Geometric series on a radius-1/2 contour.
        let fgeo = zrep("1/(1 - z)", 4.0, Codomain::Complex);
        let setup =
            ContourSetup::new(fgeo, z0, circle(&g, 0.0, 0.0, "1/2"), &ccfg).unwrap();
        let coeffs = setup.taylor_coefficients(10, &cfg).unwrap();
        for (n, a) in coeffs.iter().enumerate() {
            for v in a.values() {
                assert!((v.to_c64() - 1.0).norm() < 1e-8, "n={n}: {}", v.to_c64());
            }
        }
    }

    #[test]
    fn coefficients_radius_independent() {
        let g = grid();
        let cfg = QuadConfig::default();
        let ccfg = ClassifyConfig::default();
        let z0 = GenNet::constant(Arc::clone(&g), Value::Real(0.0));
        let s1 = ContourSetup::new(
            zrep("exp(z)", 4.0, Codomain::Complex),
            z0.clone(),
            circle(&g, 0.0, 0.0, "1/2"),
            &ccfg,
        )
        .unwrap();
        let s2 = ContourSetup::new(
            zrep("exp(z)", 4.0, Codomain::Complex),
            z0,
            circle(&g, 0.0, 0.0, "4/5"),
            &ccfg,
        )
        .unwrap();
        let c1 = s1.taylor_coefficients(6, &cfg).unwrap();
        let c2 = s2.taylor_coefficients(6, &cfg).unwrap();
        for (a, b) in c1.iter().zip(&c2) {
            assert_eq!(classify_gap(a, b, &cfg, &ccfg).unwrap().kind, NetKind::Null);
        }
    }

    #[test]
    fn taylor_eval_matches_direct_and_enforces_margin() {
        let g = grid();
        let cfg = QuadConfig::default();
        let ccfg = ClassifyConfig::default();
        let f = zrep("exp(z)", 4.0, Codomain::Complex);
        let z0 = GenNet::constant(Arc::clone(&g), Value::Real(0.0));
        let setup = ContourSetup::new(f.clone(), z0, circle(&g, 0.0, 0.0, "1"), &ccfg).unwrap();
        let coeffs = setup.taylor_coefficients(24, &cfg).unwrap();
        // Probe inside the margin: z = 0.05 * alpha_1.
        let z = GenNet::alpha(Arc::clone(&g), 1.0).scale(0.05);
        let series = setup.taylor_eval(&coeffs, &z, &ccfg).unwrap();
        let direct = evaluate_at(&f, &GenPoint::from_nets(vec![z], 1e-6).unwrap()).unwrap();
        assert_eq!(
            classify_gap(&series, &direct, &cfg, &ccfg).unwrap().kind,
            NetKind::Null
        );
        // A constant offset beyond separation/8 is refused.
        let far = GenNet::constant(Arc::clone(&g), Value::Real(0.5));
        let err = setup.taylor_eval(&coeffs, &far, &ccfg).unwrap_err();
        assert!(err.is_hypothesis(), "{err}");
    }

    #[test]
    fn scaled_pole_integrand() {
        // f = z/eps: moderate but eps-growing values; the formula still holds
        // sample-exactly relative to direct evaluation.
        let g = grid();
        let cfg = QuadConfig::default();
        let ccfg = ClassifyConfig::default();
        let f = zrep("z/eps", 4.0, Codomain::Complex);
        let z0 = GenNet::constant(Arc::clone(&g), Value::complex(0.25, -0.3));
        let setup = ContourSetup::new(f, z0, circle(&g, 0.25, -0.3, "1"), &ccfg).unwrap();
        let report = setup.cauchy_eval(&cfg, &ccfg).unwrap();
        assert_eq!(report.gap.kind, NetKind::Null);
        for (k, (v, d)) in report
            .via_contour
            .values()
            .iter()
            .zip(report.direct.values())
            .enumerate()
        {
            let gap = v.sub(*d).magnitude();
            assert!(
                gap <= 1e-9 * d.magnitude().max(1.0),
                "eps index {k}: |{:?} - {:?}|",
                v,
                d
            );
        }
    }
}
