use super::{Expr, Func};

/// Exact symbolic derivative of `e` with respect to `var`, with constant
/// folding.  No simplification beyond folding is guaranteed; results are
/// meant to be evaluated, not read.
///
/// `abs` differentiates to `sign(u) * u'`; `sign` is treated as locally
/// constant (derivative zero), and evaluating `sign` at zero raises the
/// non-differentiability as a domain error.  `re` and `im` differentiate
/// componentwise.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    match e {
        Expr::Number(_) | Expr::Imag => Expr::Number(0.0),
        Expr::Var(v) => {
            if v == var {
                Expr::Number(1.0)
            } else {
                Expr::Number(0.0)
            }
        }
        Expr::Add(a, b) => Expr::add(differentiate(a, var), differentiate(b, var)),
        Expr::Sub(a, b) => Expr::sub(differentiate(a, var), differentiate(b, var)),
        Expr::Mul(a, b) => {
            let da = differentiate(a, var);
            let db = differentiate(b, var);
            Expr::add(
                Expr::mul(da, (**b).clone()),
                Expr::mul((**a).clone(), db),
            )
        }
        Expr::Div(a, b) => {
            let da = differentiate(a, var);
            let db = differentiate(b, var);
            Expr::div(
                Expr::sub(
                    Expr::mul(da, (**b).clone()),
                    Expr::mul((**a).clone(), db),
                ),
                Expr::pow((**b).clone(), Expr::Number(2.0)),
            )
        }
        Expr::Pow(a, b) => {
            let u = (**a).clone();
            let v = (**b).clone();
            if !v.depends_on(var) {
                // d(u^c) = c * u^(c-1) * u'
                Expr::mul(
                    Expr::mul(
                        v.clone(),
                        Expr::pow(u.clone(), Expr::sub(v, Expr::Number(1.0))),
                    ),
                    differentiate(a, var),
                )
            } else {
                // d(u^v) = u^v * (v' log u + v u' / u)
                Expr::mul(
                    Expr::pow(u.clone(), v.clone()),
                    Expr::add(
                        Expr::mul(differentiate(b, var), Expr::func(Func::Log, u.clone())),
                        Expr::div(Expr::mul(v, differentiate(a, var)), u),
                    ),
                )
            }
        }
        Expr::Neg(a) => Expr::neg(differentiate(a, var)),
        Expr::Func(f, a) => {
            let u = (**a).clone();
            let du = differentiate(a, var);
            match f {
                Func::Sin => Expr::mul(Expr::func(Func::Cos, u), du),
                Func::Cos => Expr::neg(Expr::mul(Expr::func(Func::Sin, u), du)),
                Func::Exp => Expr::mul(Expr::func(Func::Exp, u), du),
                Func::Log => Expr::div(du, u),
                Func::Sqrt => Expr::div(
                    du,
                    Expr::mul(Expr::Number(2.0), Expr::func(Func::Sqrt, u)),
                ),
                Func::Abs => Expr::mul(Expr::func(Func::Sign, u), du),
                Func::Sign => Expr::Number(0.0),
                Func::Re => Expr::func(Func::Re, du),
                Func::Im => Expr::func(Func::Im, du),
            }
        }
    }
}
