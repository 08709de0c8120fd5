use num_complex::Complex64;
use std::fmt;

use crate::error::Error;

/// A scalar sample: real in the default mode, complex once any complex
/// quantity enters the computation.  Arithmetic promotes to complex as soon
/// as either operand is complex; nothing ever demotes (a complex value with
/// zero imaginary part stays complex, so the mode of a net is stable).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Real(f64),
    Complex(Complex64),
}

impl Value {
    pub fn complex(re: f64, im: f64) -> Value {
        Value::Complex(Complex64::new(re, im))
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Value::Complex(_))
    }

    pub fn re(&self) -> f64 {
        match self {
            Value::Real(x) => *x,
            Value::Complex(z) => z.re,
        }
    }

    pub fn im(&self) -> f64 {
        match self {
            Value::Real(_) => 0.0,
            Value::Complex(z) => z.im,
        }
    }

    pub fn to_c64(&self) -> Complex64 {
        match self {
            Value::Real(x) => Complex64::new(*x, 0.0),
            Value::Complex(z) => *z,
        }
    }

    /// Euclidean magnitude (absolute value / complex modulus).
    pub fn magnitude(&self) -> f64 {
        match self {
            Value::Real(x) => x.abs(),
            Value::Complex(z) => z.norm(),
        }
    }

    /// Exact-real view; `None` when complex (even with zero imaginary part).
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Complex(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Real(x) => x.is_finite(),
            Value::Complex(z) => z.re.is_finite() && z.im.is_finite(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Value::Real(x) => *x == 0.0,
            Value::Complex(z) => z.re == 0.0 && z.im == 0.0,
        }
    }

    pub fn add(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Value::Real(a), Value::Real(b)) => Value::Real(a + b),
            (a, b) => Value::Complex(a.to_c64() + b.to_c64()),
        }
    }

    pub fn sub(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Value::Real(a), Value::Real(b)) => Value::Real(a - b),
            (a, b) => Value::Complex(a.to_c64() - b.to_c64()),
        }
    }

    pub fn mul(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Value::Real(a), Value::Real(b)) => Value::Real(a * b),
            (a, b) => Value::Complex(a.to_c64() * b.to_c64()),
        }
    }

    /// Division; errors on an exactly zero denominator (IEEE infinities are
    /// never produced silently).
    pub fn div(self, rhs: Value) -> Result<Value, Error> {
        if rhs.is_zero() {
            return Err(Error::domain(rhs.to_string(), "division by zero"));
        }
        Ok(match (self, rhs) {
            (Value::Real(a), Value::Real(b)) => Value::Real(a / b),
            (a, b) => Value::Complex(a.to_c64() / b.to_c64()),
        })
    }

    pub fn neg(self) -> Value {
        match self {
            Value::Real(a) => Value::Real(-a),
            Value::Complex(z) => Value::Complex(-z),
        }
    }

    pub fn scale(self, k: f64) -> Value {
        match self {
            Value::Real(a) => Value::Real(k * a),
            Value::Complex(z) => Value::Complex(z * k),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Value {
        Value::Real(x)
    }
}

impl From<Complex64> for Value {
    fn from(z: Complex64) -> Value {
        Value::Complex(z)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Complex(z) => {
                if z.im >= 0.0 {
                    write!(f, "{}+{}i", z.re, z.im)
                } else {
                    write!(f, "{}{}i", z.re, z.im)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn promotion_is_sticky() {
        let a = Value::Real(2.0);
        let b = Value::complex(1.0, 0.0);
        assert!(a.add(b).is_complex());
        assert!(b.mul(a).is_complex());
        assert!(!a.add(a).is_complex());
    }

    #[test]
    fn division_by_exact_zero_fails() {
        assert!(Value::Real(1.0).div(Value::Real(0.0)).is_err());
        assert!(Value::Real(1.0).div(Value::complex(0.0, 0.0)).is_err());
        assert!(Value::Real(1.0).div(Value::Real(1e-300)).is_ok());
    }

    #[test]
    fn magnitude_matches_modulus() {
        assert_eq!(Value::Real(-3.0).magnitude(), 3.0);
        assert_eq!(Value::complex(3.0, 4.0).magnitude(), 5.0);
    }
}
