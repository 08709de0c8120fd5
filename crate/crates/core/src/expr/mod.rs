//! Closed-form expression language.
//!
//! Grammar (fixed; whitespace allowed between tokens, positions are 1-based
//! character indices):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' factor)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' atom
//! ```
//!
//! Numbers are plain decimals (no scientific notation); identifiers match
//! `[a-z][a-z0-9]*`.  `eps` is always in scope, `pi` is the circle constant,
//! `i` the imaginary unit.  Note the grammar places unary minus inside
//! `atom`, so `-x^2` parses as `(-x)^2`; the printer preserves tree shape
//! exactly, writing `-(x^2)` when negation wraps the power.

mod deriv;
mod eval;
mod parse;

pub use eval::Env;
pub(crate) use eval::powi;
pub use parse::parse;

use std::collections::BTreeSet;
use std::fmt;

/// Built-in unary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Re,
    Im,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Re => "re",
            Func::Im => "im",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "re" => Func::Re,
            "im" => Func::Im,
            _ => return None,
        })
    }
}

/// Expression tree.  `Number` payloads are always finite; the parser and the
/// folding constructors maintain that invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Number(f64),
    /// The imaginary unit literal `i`.
    Imag,
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn number(x: f64) -> Expr {
        Expr::Number(x)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    /// Sum with constant folding (`0 + e -> e`, literal arithmetic when the
    /// result stays finite).
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Number(x), Expr::Number(y)) if (x + y).is_finite() => Expr::Number(x + y),
            (Expr::Number(x), b) if x == 0.0 => b,
            (a, Expr::Number(y)) if y == 0.0 => a,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Number(x), Expr::Number(y)) if (x - y).is_finite() => Expr::Number(x - y),
            (a, Expr::Number(y)) if y == 0.0 => a,
            (Expr::Number(x), b) if x == 0.0 => Expr::neg(b),
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    /// Product with folding.  `0 * e` folds to `0`, which (as usual for
    /// constant folding) may erase a domain error the unfolded tree would
    /// raise.
    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Number(x), Expr::Number(y)) if (x * y).is_finite() => Expr::Number(x * y),
            (Expr::Number(x), _) | (_, Expr::Number(x)) if x == 0.0 => Expr::Number(0.0),
            (Expr::Number(x), b) if x == 1.0 => b,
            (a, Expr::Number(y)) if y == 1.0 => a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Number(x), Expr::Number(y)) if y != 0.0 && (x / y).is_finite() => {
                Expr::Number(x / y)
            }
            (Expr::Number(x), _) if x == 0.0 => Expr::Number(0.0),
            (a, Expr::Number(y)) if y == 1.0 => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (_, Expr::Number(y)) if y == 0.0 => Expr::Number(1.0),
            (a, Expr::Number(y)) if y == 1.0 => a,
            (Expr::Number(x), Expr::Number(y))
                if (x > 0.0 || (x != 0.0 && y.fract() == 0.0) || (x == 0.0 && y > 0.0))
                    && x.powf(y).is_finite() =>
            {
                Expr::Number(x.powf(y))
            }
            (a, b) => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    /// Negation; folds literal operands and double negation.
    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Number(x) => Expr::Number(-x),
            Expr::Neg(inner) => *inner,
            a => Expr::Neg(Box::new(a)),
        }
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        Expr::Func(f, Box::new(a))
    }

    /// True when the literal `i` occurs anywhere in the tree.
    pub fn has_imag(&self) -> bool {
        match self {
            Expr::Imag => true,
            Expr::Number(_) | Expr::Var(_) => false,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.has_imag() || b.has_imag(),
            Expr::Neg(a) | Expr::Func(_, a) => a.has_imag(),
        }
    }

    /// Variable names occurring in the tree (including `eps` if present).
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Number(_) | Expr::Imag => {}
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a) | Expr::Func(_, a) => a.collect_vars(out),
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Var(v) => v == name,
            Expr::Number(_) | Expr::Imag => false,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(name) || b.depends_on(name),
            Expr::Neg(a) | Expr::Func(_, a) => a.depends_on(name),
        }
    }

    /// Capture-free substitution of `replacement` for every occurrence of the
    /// variable `name`.
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Expr {
        match self {
            Expr::Var(v) if v == name => replacement.clone(),
            Expr::Var(_) | Expr::Number(_) | Expr::Imag => self.clone(),
            Expr::Add(a, b) => Expr::Add(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Sub(a, b) => Expr::Sub(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Mul(a, b) => Expr::Mul(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Div(a, b) => Expr::Div(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Pow(a, b) => Expr::Pow(
                Box::new(a.substitute(name, replacement)),
                Box::new(b.substitute(name, replacement)),
            ),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(name, replacement))),
            Expr::Func(f, a) => Expr::Func(*f, Box::new(a.substitute(name, replacement))),
        }
    }

    /// True for nodes the grammar treats as atoms (printable without parens
    /// in any operand slot).  `Neg` is not one: it binds looser than `^`.
    fn is_atom(&self) -> bool {
        matches!(
            self,
            Expr::Number(_) | Expr::Imag | Expr::Var(_) | Expr::Func(..)
        )
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, needs_parens: bool) -> fmt::Result {
        if needs_parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Printer.  Parenthesization preserves the exact tree shape under the fixed
/// grammar: `parse(print(e)) == e` structurally, hence also by evaluation.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(x) => write!(f, "{x}"),
            Expr::Imag => write!(f, "i"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => {
                a.fmt_operand(f, false)?;
                write!(f, " + ")?;
                // Right operand must not reparse as a continued sum.
                b.fmt_operand(f, matches!(**b, Expr::Add(..) | Expr::Sub(..)))
            }
            Expr::Sub(a, b) => {
                a.fmt_operand(f, false)?;
                write!(f, " - ")?;
                b.fmt_operand(f, matches!(**b, Expr::Add(..) | Expr::Sub(..)))
            }
            Expr::Mul(a, b) => {
                a.fmt_operand(f, matches!(**a, Expr::Add(..) | Expr::Sub(..)))?;
                write!(f, "*")?;
                b.fmt_operand(
                    f,
                    matches!(**b, Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Div(..)),
                )
            }
            Expr::Div(a, b) => {
                a.fmt_operand(f, matches!(**a, Expr::Add(..) | Expr::Sub(..)))?;
                write!(f, "/")?;
                b.fmt_operand(
                    f,
                    matches!(**b, Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Div(..)),
                )
            }
            Expr::Pow(a, b) => {
                // Base must be an atom, and a sign-negative literal would
                // also reparse as a negated power (`-2^2` is `-(2^2)`).
                let base_parens =
                    !a.is_atom() || matches!(**a, Expr::Number(x) if x.is_sign_negative());
                a.fmt_operand(f, base_parens)?;
                write!(f, "^")?;
                // Exponent may be another power or a leading minus, both of
                // which the grammar folds back into the exponent slot.
                b.fmt_operand(
                    f,
                    !b.is_atom() && !matches!(**b, Expr::Pow(..) | Expr::Neg(..)),
                )
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_operand(f, !a.is_atom())
            }
            Expr::Func(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}

pub use deriv::differentiate;

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(src: &str, vars: &[&str]) {
        let e = parse(src, vars).unwrap();
        let printed = e.to_string();
        let reparsed = parse(&printed, vars).unwrap();
        assert_eq!(e, reparsed, "print produced `{printed}`");
    }

    #[test]
    fn print_matches_input_shape() {
        let e = parse("x1^2 + eps", &["x1"]).unwrap();
        assert_eq!(e.to_string(), "x1^2 + eps");
    }

    #[test]
    fn unary_minus_binds_outside_power() {
        // Standard convention: -x^2 is -(x^2); (-x)^2 needs the parens.
        let e = parse("-x^2", &["x"]).unwrap();
        assert_eq!(
            e,
            Expr::Neg(Box::new(Expr::Pow(
                Box::new(Expr::var("x")),
                Box::new(Expr::Number(2.0))
            )))
        );
        let squared_neg = parse("(-x)^2", &["x"]).unwrap();
        assert_eq!(
            squared_neg,
            Expr::Pow(
                Box::new(Expr::Neg(Box::new(Expr::var("x")))),
                Box::new(Expr::Number(2.0))
            )
        );
        // Both shapes survive printing.
        roundtrip("-x^2", &["x"]);
        assert_eq!(squared_neg.to_string(), "(-x)^2");
        roundtrip("(-x)^2", &["x"]);
        // A sign-negative literal in base position keeps its parens too.
        let lit = Expr::Pow(Box::new(Expr::Number(-2.0)), Box::new(Expr::Number(2.0)));
        assert_eq!(lit.to_string(), "(-2)^2");
        // Exponent-side minus folds back without parens.
        roundtrip("x^-2", &["x"]);
    }

    #[test]
    fn shape_preserving_parens() {
        for src in [
            "x - (y - 1)",
            "x/(y*x)",
            "(x + y)*(x - y)",
            "(x^2)^3",
            "x^2^3",
            "2*x*sin(x) + x^2*cos(x)",
            "-(-x)",
            "1/(1 - z)",
        ] {
            roundtrip(src, &["x", "y", "z"]);
        }
    }

    #[test]
    fn folding_keeps_numbers_finite() {
        // A fold that would overflow is left symbolic.
        let big = Expr::Number(1e300);
        let e = Expr::mul(big.clone(), big);
        assert!(matches!(e, Expr::Mul(..)));
        // Negative literals fold through neg.
        assert_eq!(Expr::neg(Expr::Number(2.5)), Expr::Number(-2.5));
    }

    #[test]
    fn substitute_replaces_all_occurrences() {
        let e = parse("x*sin(x) + t", &["x", "t"]).unwrap();
        let r = parse("t - 1", &["t"]).unwrap();
        let s = e.substitute("x", &r);
        assert!(!s.depends_on("x"));
        assert!(s.depends_on("t"));
    }
}
