//! End-to-end acceptance checks.  Each test exercises one headline guarantee
//! at its stated tolerance and prints a single PASS line (visible under
//! `--nocapture`); a failed assertion means the corresponding guarantee is
//! broken.

use std::sync::Arc;
use std::time::Instant;

use membrane_calc::genfun::{Codomain, GenPoint, Representative};
use membrane_calc::gennum::{ClassifyConfig, GenNet, NetKind};
use membrane_calc::grid::EpsilonGrid;
use membrane_calc::holo::ContourSetup;
use membrane_calc::membrane::{perturb, History, HistoryFlags, NullPerturbation, PreMembrane};
use membrane_calc::pde::{
    residual_check, transport_solve, wave_solve, ExprSolution, Pde, TransportProblem,
    WaveProblem, DEFAULT_FD_STEP,
};
use membrane_calc::quad::{
    classify_gap, green_check, integrate_membrane, interval_consistency, QuadConfig,
};
use membrane_calc::Value;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> Arc<EpsilonGrid> {
    EpsilonGrid::standard()
}

fn rep(body: &str, dom: Vec<[f64; 2]>) -> Representative {
    let names: Vec<String> = (1..=dom.len()).map(|i| format!("x{i}")).collect();
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    Representative::with_vars(body, &vars, dom, Codomain::Real).unwrap()
}

fn rep_xt(body: &str) -> Representative {
    Representative::with_vars(
        body,
        &["x1", "t"],
        vec![[-12.0, 12.0], [-3.0, 3.0]],
        Codomain::Real,
    )
    .unwrap()
}

fn zrep(body: &str, half_width: f64) -> Representative {
    Representative::with_vars(
        body,
        &["z"],
        vec![[-half_width, half_width]],
        Codomain::Complex,
    )
    .unwrap()
}

fn const_net(g: &Arc<EpsilonGrid>, v: f64) -> GenNet {
    GenNet::constant(Arc::clone(g), Value::Real(v))
}

fn circle(g: &Arc<EpsilonGrid>, cx: f64, cy: f64, r: &str, c: f64) -> History {
    History::new(
        Arc::clone(g),
        &[
            format!("{cx} + ({r})*cos(2*pi*t)"),
            format!("{cy} + ({r})*sin(2*pi*t)"),
        ],
        (c, 0),
        HistoryFlags::closed_loop(),
    )
    .unwrap()
}

#[test]
fn a01_shrinking_ball_volumes() {
    let start = Instant::now();
    let g = grid();
    let cfg = QuadConfig::default();
    let ccfg = ClassifyConfig::default();
    let one = rep("1", vec![[-1.0, 1.0], [-1.0, 1.0]]);
    for s in [0.5, 1.0, 2.0] {
        let ball = PreMembrane::ball(
            vec![GenNet::zero(Arc::clone(&g)), GenNet::zero(Arc::clone(&g))],
            GenNet::alpha(Arc::clone(&g), s),
        )
        .unwrap();
        let vol = integrate_membrane(&one, &ball, &cfg).unwrap();
        for (k, v) in vol.values().iter().enumerate() {
            let expect = std::f64::consts::PI * g.samples()[k].powf(2.0 * s);
            assert!(
                (v.re() - expect).abs() <= 1e-6 * expect,
                "s = {s}, sample {k}: {} vs {expect}",
                v.re()
            );
        }
        let class = vol.classify(&ccfg);
        assert!(
            (class.estimated_valuation - 2.0 * s).abs() <= 0.05,
            "s = {s}: valuation {} should be {}",
            class.estimated_valuation,
            2.0 * s
        );
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "took {dt:?}, budget 5 s");
    println!("ACCEPTANCE 01 PASS — shrinking-ball volumes track pi*eps^(2s) within 1e-6 and valuations within 0.05 ({dt:?})");
}

#[test]
fn a02_sharp_norm_of_inverse_gauge_scalings() {
    let g = grid();
    let ccfg = ClassifyConfig::default();
    let e = std::f64::consts::E;
    for x0 in [3.7f64, -0.25] {
        let net = GenNet::alpha(Arc::clone(&g), -1.0).scale(x0);
        let norm = net.sharp_norm(&ccfg).unwrap();
        assert!((norm - e).abs() <= 1e-6, "x0 = {x0}: sharp norm {norm}");
    }
    // A complex scaling has the same contraction rate.
    let net = GenNet::alpha(Arc::clone(&g), -1.0)
        .map(|v| Value::complex(1.3 * v.re(), -2.0 * v.re()));
    let norm = net.sharp_norm(&ccfg).unwrap();
    assert!((norm - e).abs() <= 1e-6, "complex scaling: sharp norm {norm}");
    println!("ACCEPTANCE 02 PASS — sharp norm of eps^(-1) scalings equals e within 1e-6");
}

#[test]
fn a03_classification_fixed_points() {
    let g = grid();
    let ccfg = ClassifyConfig::default();
    let flat = GenNet::from_expr(Arc::clone(&g), &membrane_calc::expr::parse("exp(-1/eps)", &[] as &[&str]).unwrap())
        .unwrap();
    assert_eq!(flat.classify(&ccfg).kind, NetKind::Null);
    let cube = GenNet::alpha(Arc::clone(&g), 3.0);
    let class = cube.classify(&ccfg);
    assert_eq!(class.kind, NetKind::Invertible);
    assert!((class.estimated_valuation - 3.0).abs() <= 1e-6);
    println!("ACCEPTANCE 03 PASS — exp(-1/eps) is null, eps^3 is invertible with valuation 3");
}

#[test]
fn a04_integrals_ignore_representative_and_membrane_drift() {
    let start = Instant::now();
    let g = grid();
    let cfg = QuadConfig::default();
    let ccfg = ClassifyConfig::default();
    // (integrand, drifted integrand, membrane, displacement field)
    let catalog: Vec<(Representative, Representative, PreMembrane, NullPerturbation)> = vec![
        (
            rep("sin(x1) + x1^2", vec![[-3.0, 3.0]]),
            rep("sin(x1) + x1^2 + exp(-1/eps)*x1^3", vec![[-3.0, 3.0]]),
            PreMembrane::interval(const_net(&g, 0.0), const_net(&g, 1.0)).unwrap(),
            NullPerturbation::new(
                Arc::clone(&g),
                &["exp(-1/eps)*(1 + x1/4)"],
                vec![[-1.0, 2.0]],
                &ccfg,
            )
            .unwrap(),
        ),
        (
            rep("cos(x1)*exp(x1)", vec![[-2.0, 2.0]]),
            rep("cos(x1)*exp(x1) + exp(-1/eps)*(x1 - 1)", vec![[-2.0, 2.0]]),
            PreMembrane::interval(GenNet::zero(Arc::clone(&g)), GenNet::alpha(Arc::clone(&g), 1.0))
                .unwrap(),
            NullPerturbation::new(Arc::clone(&g), &["exp(-1/eps)*x1"], vec![[-1.0, 1.0]], &ccfg)
                .unwrap(),
        ),
        (
            rep("exp(x1)*x2 + x1", vec![[-4.0, 4.0], [-4.0, 4.0]]),
            rep("exp(x1)*x2 + x1 + exp(-1/eps)*x1*x2", vec![[-4.0, 4.0], [-4.0, 4.0]]),
            PreMembrane::boxed(vec![
                (const_net(&g, 0.0), const_net(&g, 1.0)),
                (const_net(&g, -1.0), const_net(&g, 1.0)),
            ])
            .unwrap(),
            NullPerturbation::new(
                Arc::clone(&g),
                &["exp(-1/eps)*(x1 - 2)", "exp(-1/eps)*(x2 + 1)"],
                vec![[-3.0, 3.0], [-3.0, 3.0]],
                &ccfg,
            )
            .unwrap(),
        ),
        (
            rep("x1^2 + x2^2", vec![[-4.0, 4.0], [-4.0, 4.0]]),
            rep("x1^2 + x2^2 + exp(-1/eps)*(x1 + x2)", vec![[-4.0, 4.0], [-4.0, 4.0]]),
            PreMembrane::ball(
                vec![const_net(&g, 0.2), const_net(&g, -0.3)],
                const_net(&g, 0.8),
            )
            .unwrap(),
            NullPerturbation::new(
                Arc::clone(&g),
                &["exp(-1/eps)*(x1/2 + 1)", "exp(-1/eps)*(x2/2 - 2)"],
                vec![[-3.0, 3.0], [-3.0, 3.0]],
                &ccfg,
            )
            .unwrap(),
        ),
        (
            rep("1 + x1*x2", vec![[-4.0, 4.0], [-4.0, 4.0]]),
            rep("1 + x1*x2 + exp(-1/eps)*cos(x1)", vec![[-4.0, 4.0], [-4.0, 4.0]]),
            PreMembrane::indicator(
                Arc::clone(&g),
                "x1^2 + x2^2 - 1",
                2,
                vec![[-1.5, 1.5], [-1.5, 1.5]],
            )
            .unwrap(),
            NullPerturbation::new(
                Arc::clone(&g),
                &["exp(-1/eps)*sin(x1)", "exp(-1/eps)*cos(x2)"],
                vec![[-3.0, 3.0], [-3.0, 3.0]],
                &ccfg,
            )
            .unwrap(),
        ),
    ];
    for (i, (f, f2, m, psi)) in catalog.iter().enumerate() {
        let m2 = perturb(m, psi).unwrap();
        let base = integrate_membrane(f, m, &cfg).unwrap();
        for (label, other) in [
            ("drifted membrane", integrate_membrane(f, &m2, &cfg).unwrap()),
            ("drifted integrand", integrate_membrane(f2, m, &cfg).unwrap()),
            ("both drifted", integrate_membrane(f2, &m2, &cfg).unwrap()),
        ] {
            let class = other.sub(&base).unwrap().classify(&ccfg);
            assert_eq!(
                class.kind,
                NetKind::Null,
                "case {i} ({label}): integral moved (valuation {})",
                class.estimated_valuation
            );
        }
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "took {dt:?}, budget 60 s");
    println!("ACCEPTANCE 04 PASS — 5-triple catalog: all drift differences classify null ({dt:?})");
}

#[test]
fn a05_contour_evaluation_matches_direct_values() {
    let g = grid();
    let cfg = QuadConfig::default();
    let ccfg = ClassifyConfig::default();
    let tau = 2.0 * std::f64::consts::PI;
    // (f, z0, loop center, loop radius)
    let cases: Vec<(Representative, (f64, f64), (f64, f64), f64)> = vec![
        (zrep("exp(z)", 4.0), (0.3, -0.1), (0.25, 0.0), 0.75),
        (zrep("z^2", 4.0), (-0.2, 0.3), (0.0, 0.2), 0.8),
        (zrep("1/(1 - z)", 0.9), (0.2, 0.1), (0.0, 0.0), 0.5),
        (zrep("z/eps", 4.0), (0.2, 0.1), (0.2, 0.1), 0.5),
    ];
    for (i, (f, z0, c, r)) in cases.into_iter().enumerate() {
        let z0net = GenNet::constant(Arc::clone(&g), Value::complex(z0.0, z0.1));
        let gamma = circle(&g, c.0, c.1, &format!("{r}"), tau * r * 1.05);
        let setup = ContourSetup::new(f, z0net, gamma, &ccfg).unwrap();
        let report = setup.cauchy_eval(&cfg, &ccfg).unwrap();
        for (k, (via, direct)) in
            report.via_contour.values().iter().zip(report.direct.values()).enumerate()
        {
            let d = ((via.re() - direct.re()).powi(2) + (via.im() - direct.im()).powi(2)).sqrt();
            assert!(
                d <= 1e-9 * direct.magnitude().max(1.0),
                "case {i}, sample {k}: contour vs direct gap {d:.3e}"
            );
        }
        assert_eq!(report.gap.kind, NetKind::Null, "case {i}: gap class");
    }
    println!("ACCEPTANCE 05 PASS — contour evaluation matches direct values within 1e-9 relative, gaps null");
}

#[test]
fn a06_series_coefficients_and_truncated_evaluation() {
    let g = grid();
    let cfg = QuadConfig::default();
    let ccfg = ClassifyConfig::default();
    let tau = 2.0 * std::f64::consts::PI;
    let origin = GenNet::constant(Arc::clone(&g), Value::complex(0.0, 0.0));

    let exp_setup = ContourSetup::new(
        zrep("exp(z)", 4.0),
        origin.clone(),
        circle(&g, 0.0, 0.0, "1", tau * 1.05),
        &ccfg,
    )
    .unwrap();
    let coeffs = exp_setup.taylor_coefficients(10, &cfg).unwrap();
    let mut fact = 1.0f64;
    for (n, a) in coeffs.iter().enumerate() {
        if n > 0 {
            fact *= n as f64;
        }
        let target = 1.0 / fact;
        for (k, v) in a.values().iter().enumerate() {
            let d = ((v.re() - target).powi(2) + v.im().powi(2)).sqrt();
            assert!(d <= 1e-9, "exp coefficient {n}, sample {k}: off by {d:.3e}");
        }
    }

    let geo_setup = ContourSetup::new(
        zrep("1/(1 - z)", 0.9),
        origin,
        circle(&g, 0.0, 0.0, "0.5", tau * 0.5 * 1.05),
        &ccfg,
    )
    .unwrap();
    for (n, a) in geo_setup.taylor_coefficients(10, &cfg).unwrap().iter().enumerate() {
        for (k, v) in a.values().iter().enumerate() {
            let d = ((v.re() - 1.0).powi(2) + v.im().powi(2)).sqrt();
            assert!(d <= 1e-8, "geometric coefficient {n}, sample {k}: off by {d:.3e}");
        }
    }

    // Truncated evaluation vs direct evaluation at probes strictly inside
    // the unit sharp ball around the center.
    for (c, r, theta) in [
        (0.5, 0.25, 0.0),
        (0.3, 0.5, 1.0),
        (0.7, 0.25, 2.0),
        (0.2, 1.0, 4.0),
        (0.6, 0.5, 5.0),
    ] {
        let (ct, st) = ((theta as f64).cos(), (theta as f64).sin());
        let mut zvals = Vec::with_capacity(g.len());
        let mut direct = Vec::with_capacity(g.len());
        for &eps in g.samples() {
            let m = c * eps.powf(r);
            let (re, im) = (m * ct, m * st);
            zvals.push(Value::complex(re, im));
            let mag = re.exp();
            direct.push(Value::complex(mag * im.cos(), mag * im.sin()));
        }
        let z = GenNet::new(Arc::clone(&g), zvals).unwrap();
        let norm = z.sharp_norm(&ccfg).unwrap();
        assert!(norm < 1.0, "probe norm {norm} not inside the unit sharp ball");
        let via_series = exp_setup.taylor_eval(&coeffs, &z, &ccfg).unwrap();
        let direct = GenNet::new(Arc::clone(&g), direct).unwrap();
        let gap = classify_gap(&via_series, &direct, &cfg, &ccfg).unwrap();
        assert_eq!(gap.kind, NetKind::Null, "series probe ({c}, {r}, {theta})");
    }
    println!("ACCEPTANCE 06 PASS — series coefficients exact within 1e-9/1e-8, truncated evaluation gaps null");
}

#[test]
fn a07_boundary_circulation_equals_curl_integral() {
    let g = grid();
    let cfg = QuadConfig::default();
    let ccfg = ClassifyConfig::default();
    let tau = 2.0 * std::f64::consts::PI;
    let dom = vec![[-3.0, 3.0], [-3.0, 3.0]];

    let unit_ball = PreMembrane::ball(
        vec![GenNet::zero(Arc::clone(&g)), GenNet::zero(Arc::clone(&g))],
        const_net(&g, 1.0),
    )
    .unwrap();
    let ellipse_region = PreMembrane::indicator(
        Arc::clone(&g),
        "x1^2/4 + x2^2 - 1",
        2,
        vec![[-2.2, 2.2], [-1.2, 1.2]],
    )
    .unwrap();
    let shrinking_ball = PreMembrane::ball(
        vec![GenNet::zero(Arc::clone(&g)), GenNet::zero(Arc::clone(&g))],
        GenNet::alpha(Arc::clone(&g), 1.0),
    )
    .unwrap();

    let ellipse = History::new(
        Arc::clone(&g),
        &["2*cos(2*pi*t)", "sin(2*pi*t)"],
        (2.0 * tau * 1.05, 0),
        HistoryFlags::closed_loop(),
    )
    .unwrap();
    let eps_circle = History::new(
        Arc::clone(&g),
        &["eps*cos(2*pi*t)", "eps*sin(2*pi*t)"],
        (tau, 0),
        HistoryFlags::closed_loop(),
    )
    .unwrap();

    let cases: Vec<(Representative, Representative, &PreMembrane, History)> = vec![
        (
            rep("-x2^3", dom.clone()),
            rep("x1^3", dom.clone()),
            &unit_ball,
            circle(&g, 0.0, 0.0, "1", tau * 1.05),
        ),
        (
            rep("-x2/2", dom.clone()),
            rep("x1/2", dom.clone()),
            &ellipse_region,
            ellipse,
        ),
        (
            rep("-x2^3", dom.clone()),
            rep("x1^3", dom.clone()),
            &shrinking_ball,
            eps_circle,
        ),
    ];
    for (i, (p, q, omega, gamma)) in cases.into_iter().enumerate() {
        let report = green_check(&p, &q, omega, &gamma, &cfg, &ccfg).unwrap();
        for (k, (lhs, rhs)) in
            report.boundary.values().iter().zip(report.area.values()).enumerate()
        {
            let d = (lhs.re() - rhs.re()).abs();
            assert!(
                d <= 1e-8 * lhs.re().abs().max(1.0),
                "case {i}, sample {k}: circulation {} vs curl integral {}",
                lhs.re(),
                rhs.re()
            );
        }
        assert_eq!(report.gap.kind, NetKind::Null, "case {i}: gap class");
    }
    println!("ACCEPTANCE 07 PASS — circulation equals curl integral within 1e-8 relative on all three regions, gaps null");
}

#[test]
fn a08_evolution_residuals_accept_solutions_and_reject_fakes() {
    let start = Instant::now();
    let g = grid();
    let ccfg = ClassifyConfig::default();
    let probes: Vec<(GenPoint, GenNet)> = vec![
        (GenPoint::classical(Arc::clone(&g), &[0.3]).unwrap(), const_net(&g, 0.7)),
        (GenPoint::classical(Arc::clone(&g), &[-1.2]).unwrap(), const_net(&g, 0.4)),
        (GenPoint::classical(Arc::clone(&g), &[0.8]).unwrap(), const_net(&g, 1.1)),
        (
            GenPoint::from_nets(
                vec![GenNet::alpha(Arc::clone(&g), 1.0).add(&const_net(&g, 0.3)).unwrap()],
                0.2,
            )
            .unwrap(),
            const_net(&g, 0.9),
        ),
    ];

    // Homogeneous drift along characteristics.
    let hom = TransportProblem::new(
        vec![const_net(&g, 1.0)],
        rep("sin(x1)", vec![[-8.0, 8.0]]),
        &ccfg,
    )
    .unwrap();
    let hom_sol = transport_solve(hom.clone());
    let report = residual_check(&hom_sol, Pde::Transport(&hom), &probes, DEFAULT_FD_STEP, &ccfg)
        .unwrap();
    assert_eq!(report.scaled.kind, NetKind::Null, "homogeneous transport residual");

    // Forced drift with a hand-integrable source: the source term x
    // contributes exactly x*t - t^2/2 along unit-speed characteristics.
    let forced = TransportProblem::new(
        vec![const_net(&g, 1.0)],
        rep("sin(x1)", vec![[-8.0, 8.0]]),
        &ccfg,
    )
    .unwrap()
    .with_source(rep_xt("x1"), 2.0)
    .unwrap();
    let forced_sol = transport_solve(forced.clone());
    for (x, t) in [(0.4f64, 0.6f64), (-0.9, 1.1)] {
        let point = GenPoint::classical(Arc::clone(&g), &[x]).unwrap();
        let w = forced_sol.eval(&point, &const_net(&g, t)).unwrap();
        let expect = (x - t).sin() + x * t - t * t / 2.0;
        for v in w.values() {
            assert!(
                (v.re() - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                "forced value at ({x}, {t}): {} vs {expect}",
                v.re()
            );
        }
    }
    let report =
        residual_check(&forced_sol, Pde::Transport(&forced), &probes, DEFAULT_FD_STEP, &ccfg)
            .unwrap();
    assert_eq!(report.scaled.kind, NetKind::Null, "forced transport residual");

    // Second-order oscillation: sin(x)*cos(t) from d'Alembert data.
    let wave = WaveProblem::new(
        rep("sin(x1)", vec![[-20.0, 20.0]]),
        rep("0", vec![[-20.0, 20.0]]),
    )
    .unwrap();
    let wave_sol = wave_solve(wave.clone());
    for (x, t) in [(0.5f64, 0.8f64), (-1.1, 0.6)] {
        let w = wave_sol.eval(&const_net(&g, x), &const_net(&g, t)).unwrap();
        let expect = x.sin() * t.cos();
        for v in w.values() {
            assert!((v.re() - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }
    let report = residual_check(&wave_sol, Pde::Wave(&wave), &probes, 1e-3, &ccfg).unwrap();
    assert_eq!(report.scaled.kind, NetKind::Null, "standing wave residual");

    // A candidate drifting against the flow must be rejected.
    let fake = ExprSolution::new(rep_xt("sin(x1 + t)")).unwrap();
    let report = residual_check(&fake, Pde::Transport(&hom), &probes, DEFAULT_FD_STEP, &ccfg)
        .unwrap();
    assert_ne!(report.scaled.kind, NetKind::Null, "wrong-direction candidate accepted");

    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "took {dt:?}, budget 30 s");
    println!("ACCEPTANCE 08 PASS — evolution residuals: solutions null, wrong-direction candidate rejected ({dt:?})");
}

#[test]
fn a09_membrane_and_line_integrals_agree_on_intervals() {
    let g = grid();
    let cfg = QuadConfig::default();
    let ccfg = ClassifyConfig::default();
    let cases: Vec<(Representative, GenNet, GenNet)> = vec![
        (rep("sin(x1) + x1^2", vec![[-4.0, 4.0]]), const_net(&g, 0.0), const_net(&g, 1.0)),
        (rep("exp(x1)", vec![[-4.0, 4.0]]), const_net(&g, -0.5), const_net(&g, 0.5)),
        (rep("x1^3 - x1", vec![[-4.0, 4.0]]), const_net(&g, -1.0), const_net(&g, 2.0)),
        (rep("1/(1 + x1^2)", vec![[-4.0, 4.0]]), const_net(&g, 0.0), const_net(&g, 2.0)),
        (
            rep("cos(x1)", vec![[-4.0, 4.0]]),
            GenNet::zero(Arc::clone(&g)),
            GenNet::alpha(Arc::clone(&g), 1.0),
        ),
    ];
    for (i, (f, a, b)) in cases.iter().enumerate() {
        let report = interval_consistency(f, a, b, &cfg, &ccfg).unwrap();
        assert_eq!(report.gap.kind, NetKind::Null, "case {i}: membrane vs line gap");
    }
    println!("ACCEPTANCE 09 PASS — membrane and line integrals agree (null gaps) on 5 interval cases");
}

#[test]
fn a10_gauge_calibration_and_derivative_spot_checks() {
    let g = grid();
    let ccfg = ClassifyConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for _ in 0..20 {
        let r: f64 = rng.gen_range(-5.0..5.0);
        let class = GenNet::alpha(Arc::clone(&g), r).classify(&ccfg);
        assert!(
            (class.estimated_valuation - r).abs() <= 1e-9,
            "gauge power {r}: valuation {}",
            class.estimated_valuation
        );
    }
    // Compact symbolic-vs-finite-difference check on smooth bodies.
    for body in [
        "sin(x1)*x1",
        "exp(x1/2) + x1^2",
        "x1^3 - 2*x1",
        "cos(x1)^2",
        "1/(1 + x1^2)",
        "sqrt(1 + x1^2)",
    ] {
        let e = membrane_calc::expr::parse(body, &["x1"]).unwrap();
        let d = membrane_calc::expr::differentiate(&e, "x1");
        let mut env = membrane_calc::expr::Env::with(&[("x1", Value::Real(0.0))]);
        let slot = env.index_of("x1").unwrap();
        let h = 1e-6;
        for j in 0..25 {
            let x = -2.0 + 4.0 * (j as f64) / 24.0;
            env.set_index(slot, Value::Real(x + h));
            let fp = e.eval(&env).unwrap().re();
            env.set_index(slot, Value::Real(x - h));
            let fm = e.eval(&env).unwrap().re();
            env.set_index(slot, Value::Real(x));
            let sym = d.eval(&env).unwrap().re();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (fd - sym).abs() <= 1e-5 * sym.abs().max(1.0),
                "{body} at x = {x}: fd {fd} vs symbolic {sym}"
            );
        }
    }
    println!("ACCEPTANCE 10 PASS — 20 random gauge valuations within 1e-9, derivative spot checks within 1e-5");
}
