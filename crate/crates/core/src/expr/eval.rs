use num_complex::Complex64;

use super::{Expr, Func};
use crate::error::Error;
use crate::value::Value;
use crate::Result;

/// Variable bindings for evaluation.  Small and linear: expression arities
/// here are at most a handful of coordinates plus `eps` and `t`.
#[derive(Clone, Debug, Default)]
pub struct Env {
    slots: Vec<(String, Value)>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn with(bindings: &[(&str, Value)]) -> Env {
        let mut env = Env::new();
        for (name, v) in bindings {
            env.set(name, *v);
        }
        env
    }

    /// Bind `name`, replacing any existing binding.
    pub fn set(&mut self, name: &str, value: Value) {
        for slot in &mut self.slots {
            if slot.0 == name {
                slot.1 = value;
                return;
            }
        }
        self.slots.push((name.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.slots.iter().find(|s| s.0 == name).map(|s| s.1)
    }

    /// Slot index for fast rebinding in inner loops.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.0 == name)
    }

    pub fn set_index(&mut self, index: usize, value: Value) {
        self.slots[index].1 = value;
    }

    pub fn any_complex(&self) -> bool {
        self.slots.iter().any(|s| s.1.is_complex())
    }
}

impl Expr {
    /// Evaluate with automatic mode detection: complex semantics when the
    /// tree contains `i` or any binding is complex, real otherwise.
    pub fn eval(&self, env: &Env) -> Result<Value> {
        let complex = self.has_imag() || env.any_complex();
        self.eval_in(env, complex)
    }

    /// Evaluate with the mode fixed by the caller (callers that evaluate the
    /// same tree many times hoist the mode test out of the loop).
    ///
    /// In real mode, operations that leave the reals (square root or
    /// logarithm of a negative number, fractional power of a negative base)
    /// are domain errors.  In complex mode they promote to the principal
    /// branch.  Division by an exact zero is an error in both modes.
    pub fn eval_in(&self, env: &Env, complex: bool) -> Result<Value> {
        match self {
            Expr::Number(x) => Ok(Value::Real(*x)),
            Expr::Imag => Ok(Value::complex(0.0, 1.0)),
            Expr::Var(name) => env
                .get(name)
                .ok_or_else(|| Error::InvalidInput(format!("unbound variable `{name}`"))),
            Expr::Add(a, b) => Ok(a.eval_in(env, complex)?.add(b.eval_in(env, complex)?)),
            Expr::Sub(a, b) => Ok(a.eval_in(env, complex)?.sub(b.eval_in(env, complex)?)),
            Expr::Mul(a, b) => Ok(a.eval_in(env, complex)?.mul(b.eval_in(env, complex)?)),
            Expr::Div(a, b) => {
                let num = a.eval_in(env, complex)?;
                let den = b.eval_in(env, complex)?;
                if den.is_zero() {
                    return Err(Error::domain(b.to_string(), "division by zero"));
                }
                num.div(den)
            }
            Expr::Pow(a, b) => {
                let base = a.eval_in(env, complex)?;
                let exp = b.eval_in(env, complex)?;
                eval_pow(base, exp, complex).map_err(|msg| Error::domain(self.to_string(), msg))
            }
            Expr::Neg(a) => Ok(a.eval_in(env, complex)?.neg()),
            Expr::Func(f, a) => {
                let arg = a.eval_in(env, complex)?;
                eval_func(*f, arg, complex).map_err(|msg| Error::domain(self.to_string(), msg))
            }
        }
    }
}

fn eval_pow(base: Value, exp: Value, complex: bool) -> std::result::Result<Value, String> {
    // Zero base: defined only for positive real exponent (and 0^0 = 1).
    if base.is_zero() {
        let e_re = exp.re();
        if exp.im() == 0.0 {
            if e_re == 0.0 {
                return Ok(Value::Real(1.0));
            }
            if e_re > 0.0 {
                return Ok(if base.is_complex() || exp.is_complex() {
                    Value::complex(0.0, 0.0)
                } else {
                    Value::Real(0.0)
                });
            }
        }
        return Err("zero base with non-positive exponent".into());
    }
    match (base, exp) {
        (Value::Real(b), Value::Real(e)) => {
            if b < 0.0 && e.fract() != 0.0 {
                if complex {
                    return Ok(Value::Complex(Complex64::new(b, 0.0).powc(Complex64::new(e, 0.0))));
                }
                return Err("negative base with fractional exponent".into());
            }
            // IEEE pow handles negative bases with integer exponents.
            Ok(Value::Real(b.powf(e)))
        }
        (b, e) => {
            let e = e.to_c64();
            if e.im == 0.0 && e.re.fract() == 0.0 && e.re.abs() <= 128.0 {
                // Integer powers by repeated multiplication are noticeably
                // more accurate than exp/log and arise constantly in the
                // contour kernels.
                Ok(Value::Complex(powi(b.to_c64(), e.re as i32)))
            } else {
                Ok(Value::Complex(b.to_c64().powc(e)))
            }
        }
    }
}

/// Integer power by binary exponentiation.
pub(crate) fn powi(z: Complex64, n: i32) -> Complex64 {
    if n < 0 {
        return 1.0 / powi(z, -n);
    }
    let mut acc = Complex64::new(1.0, 0.0);
    let mut base = z;
    let mut k = n as u32;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

fn eval_func(f: Func, arg: Value, complex: bool) -> std::result::Result<Value, String> {
    match (f, arg) {
        (Func::Sin, Value::Real(x)) => Ok(Value::Real(x.sin())),
        (Func::Cos, Value::Real(x)) => Ok(Value::Real(x.cos())),
        (Func::Exp, Value::Real(x)) => Ok(Value::Real(x.exp())),
        (Func::Sin, Value::Complex(z)) => Ok(Value::Complex(z.sin())),
        (Func::Cos, Value::Complex(z)) => Ok(Value::Complex(z.cos())),
        (Func::Exp, Value::Complex(z)) => Ok(Value::Complex(z.exp())),
        (Func::Log, Value::Real(x)) => {
            if x > 0.0 {
                Ok(Value::Real(x.ln()))
            } else if x == 0.0 {
                Err("log of zero".into())
            } else if complex {
                Ok(Value::Complex(Complex64::new(x, 0.0).ln()))
            } else {
                Err("log of a negative value".into())
            }
        }
        (Func::Log, Value::Complex(z)) => {
            if z.re == 0.0 && z.im == 0.0 {
                Err("log of zero".into())
            } else {
                Ok(Value::Complex(z.ln()))
            }
        }
        (Func::Sqrt, Value::Real(x)) => {
            if x >= 0.0 {
                Ok(Value::Real(x.sqrt()))
            } else if complex {
                Ok(Value::Complex(Complex64::new(x, 0.0).sqrt()))
            } else {
                Err("square root of a negative value".into())
            }
        }
        (Func::Sqrt, Value::Complex(z)) => Ok(Value::Complex(z.sqrt())),
        (Func::Abs, v) => Ok(Value::Real(v.magnitude())),
        (Func::Sign, Value::Real(x)) => {
            if x > 0.0 {
                Ok(Value::Real(1.0))
            } else if x < 0.0 {
                Ok(Value::Real(-1.0))
            } else {
                Err("sign of zero (absolute value is not differentiable here)".into())
            }
        }
        (Func::Sign, Value::Complex(_)) => Err("sign of a complex value".into()),
        (Func::Re, v) => Ok(Value::Real(v.re())),
        (Func::Im, v) => Ok(Value::Real(v.im())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn ev(src: &str, bindings: &[(&str, Value)]) -> Result<Value> {
        let vars: Vec<&str> = bindings.iter().map(|b| b.0).collect();
        let e = parse(src, &vars)?;
        e.eval(&Env::with(bindings))
    }

    #[test]
    fn real_arithmetic() {
        assert_eq!(
            ev("x1^2 + 3*x1", &[("x1", Value::Real(2.0))]).unwrap(),
            Value::Real(10.0)
        );
        assert_eq!(
            ev("-x1^2", &[("x1", Value::Real(3.0))]).unwrap(),
            Value::Real(-9.0) // -(x1^2) per the grammar
        );
    }

    #[test]
    fn log_of_negative_real_is_domain_error() {
        let err = ev("log(x1)", &[("x1", Value::Real(-1.0))]).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }), "{err}");
    }

    #[test]
    fn complex_mode_takes_principal_branches() {
        // i enters the tree, so sqrt(-1) promotes instead of erroring.
        let v = ev("sqrt(x1) + 0*i", &[("x1", Value::Real(-4.0))]).unwrap();
        assert!((v.re() - 0.0).abs() < 1e-15);
        assert!((v.im() - 2.0).abs() < 1e-15);
        // A complex binding triggers the same promotion.
        let v = ev("log(x1)", &[("x1", Value::complex(-1.0, 0.0))]).unwrap();
        assert!((v.im() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn division_by_zero_names_the_denominator() {
        let err = ev("1/(x1 - 2)", &[("x1", Value::Real(2.0))]).unwrap_err();
        match err {
            Error::Domain { expr, .. } => assert_eq!(expr, "x1 - 2"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_base_integer_exponent_is_fine() {
        assert_eq!(ev("x1^3", &[("x1", Value::Real(-2.0))]).unwrap(), Value::Real(-8.0));
        assert!(ev("x1^0.5", &[("x1", Value::Real(-2.0))]).is_err());
    }

    #[test]
    fn eps_binds_like_a_variable() {
        let e = parse("eps^2", &[] as &[&str]).unwrap();
        let mut env = Env::new();
        env.set("eps", Value::Real(0.1));
        let v = e.eval(&env).unwrap();
        assert!((v.re() - 0.01).abs() < 1e-17);
    }

    #[test]
    fn integer_complex_powers_use_repeated_multiplication() {
        let z = Complex64::new(0.0, 1.0);
        assert_eq!(powi(z, 4), Complex64::new(1.0, 0.0));
        let v = ev("i^4", &[]).unwrap();
        assert_eq!(v.to_c64(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn sign_at_zero_is_an_error() {
        assert!(ev("sign(x1)", &[("x1", Value::Real(0.0))]).is_err());
        assert_eq!(ev("sign(x1)", &[("x1", Value::Real(-0.5))]).unwrap(), Value::Real(-1.0));
    }
}
