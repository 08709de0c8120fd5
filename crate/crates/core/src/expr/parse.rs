use super::{Expr, Func};
use crate::error::Error;
use crate::Result;

/// Names with fixed meaning; rejecting them as variable names keeps the
/// grammar unambiguous.
const RESERVED: &[&str] = &[
    "sin", "cos", "exp", "log", "sqrt", "abs", "sign", "re", "im", "pi", "i", "eps",
];

#[derive(Clone, Debug, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

#[derive(Clone, Debug)]
struct Tok {
    kind: TokKind,
    /// 1-based character position of the token's first character; for `Eof`
    /// the position just past the input.
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                toks.push(Tok { kind: TokKind::Plus, pos });
                i += 1;
            }
            '-' => {
                toks.push(Tok { kind: TokKind::Minus, pos });
                i += 1;
            }
            '*' => {
                toks.push(Tok { kind: TokKind::Star, pos });
                i += 1;
            }
            '/' => {
                toks.push(Tok { kind: TokKind::Slash, pos });
                i += 1;
            }
            '^' => {
                toks.push(Tok { kind: TokKind::Caret, pos });
                i += 1;
            }
            '(' => {
                toks.push(Tok { kind: TokKind::LParen, pos });
                i += 1;
            }
            ')' => {
                toks.push(Tok { kind: TokKind::RParen, pos });
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    if i + 1 >= chars.len() || !chars[i + 1].is_ascii_digit() {
                        return Err(Error::syntax(i + 1, "expected digits after decimal point"));
                    }
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text
                    .parse()
                    .map_err(|_| Error::syntax(pos, format!("invalid number `{text}`")))?;
                toks.push(Tok { kind: TokKind::Num(value), pos });
            }
            'a'..='z' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_lowercase() || chars[i].is_ascii_digit())
                {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                toks.push(Tok { kind: TokKind::Ident(name), pos });
            }
            _ => {
                return Err(Error::syntax(pos, format!("unexpected character `{c}`")));
            }
        }
    }
    toks.push(Tok { kind: TokKind::Eof, pos: chars.len() + 1 });
    Ok(toks)
}

struct Parser<'v> {
    toks: Vec<Tok>,
    i: usize,
    vars: &'v [String],
}

impl<'v> Parser<'v> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i]
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().kind {
                TokKind::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                TokKind::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().kind {
                TokKind::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                TokKind::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        // Unary minus binds looser than `^`: `-x^2` is `-(x^2)`, as in
        // ordinary mathematical notation.  `(-x)^2` needs the parens.
        if self.peek().kind == TokKind::Minus {
            self.bump();
            let inner = self.factor()?;
            // Fold a negated literal immediately so `-2.5` is a single
            // `Number`, matching what the folding constructors produce.
            return Ok(match inner {
                Expr::Number(x) => Expr::Number(-x),
                other => Expr::Neg(Box::new(other)),
            });
        }
        let base = self.atom()?;
        if self.peek().kind == TokKind::Caret {
            self.bump();
            let exp = self.factor()?; // right-associative; allows `x^-2`
            Ok(Expr::Pow(Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.bump();
        match tok.kind {
            TokKind::Num(x) => Ok(Expr::Number(x)),
            TokKind::LParen => {
                let inner = self.expr()?;
                let close = self.bump();
                if close.kind != TokKind::RParen {
                    return Err(Error::syntax(close.pos, "expected `)`"));
                }
                Ok(inner)
            }
            TokKind::Ident(name) => self.ident_atom(name, tok.pos),
            TokKind::Eof => Err(Error::syntax(tok.pos, "expected expression")),
            _ => Err(Error::syntax(tok.pos, "expected expression")),
        }
    }

    fn ident_atom(&mut self, name: String, pos: usize) -> Result<Expr> {
        if let Some(f) = Func::from_name(&name) {
            let open = self.bump();
            if open.kind != TokKind::LParen {
                return Err(Error::syntax(
                    open.pos,
                    format!("expected `(` after function `{name}`"),
                ));
            }
            let arg = self.expr()?;
            let close = self.bump();
            if close.kind != TokKind::RParen {
                return Err(Error::syntax(close.pos, "expected `)`"));
            }
            return Ok(Expr::Func(f, Box::new(arg)));
        }
        match name.as_str() {
            "pi" => Ok(Expr::Number(std::f64::consts::PI)),
            "i" => Ok(Expr::Imag),
            "eps" => Ok(Expr::Var(name)),
            _ => {
                if self.peek().kind == TokKind::LParen {
                    return Err(Error::syntax(pos, format!("unknown function `{name}`")));
                }
                if self.vars.iter().any(|v| v == &name) {
                    Ok(Expr::Var(name))
                } else {
                    Err(Error::UndeclaredVariable { name, pos })
                }
            }
        }
    }
}

/// Parse `src` against the declared variable list.  `eps` is implicitly in
/// scope; `pi` and `i` are literals.  Errors carry 1-based positions.
pub fn parse<S: AsRef<str>>(src: &str, vars: &[S]) -> Result<Expr> {
    let vars: Vec<String> = vars.iter().map(|s| s.as_ref().to_string()).collect();
    for v in &vars {
        if RESERVED.contains(&v.as_str()) {
            return Err(Error::InvalidInput(format!(
                "`{v}` is reserved and cannot be a variable name"
            )));
        }
        let valid = v
            .chars()
            .next()
            .map(|c| c.is_ascii_lowercase())
            .unwrap_or(false)
            && v.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit());
        if !valid {
            return Err(Error::InvalidInput(format!(
                "invalid variable name `{v}` (want [a-z][a-z0-9]*)"
            )));
        }
    }
    let toks = lex(src)?;
    let mut p = Parser { toks, i: 0, vars: &vars };
    let e = p.expr()?;
    let last = p.bump();
    if last.kind != TokKind::Eof {
        return Err(Error::syntax(last.pos, "unexpected trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dangling_operator_reports_position_past_end() {
        // 4 characters of input; the missing operand is reported at 5.
        let err = parse("x1 +", &["x1"]).unwrap_err();
        match err {
            Error::Syntax { pos, .. } => assert_eq!(pos, 5),
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn undeclared_variable_is_flagged_with_position() {
        let err = parse("x1 + y", &["x1"]).unwrap_err();
        match err {
            Error::UndeclaredVariable { name, pos } => {
                assert_eq!(name, "y");
                assert_eq!(pos, 6);
            }
            other => panic!("expected undeclared variable, got {other}"),
        }
    }

    #[test]
    fn eps_pi_i_have_fixed_meaning() {
        let vars: [&str; 0] = [];
        assert_eq!(parse("eps", &vars).unwrap(), Expr::var("eps"));
        assert_eq!(
            parse("pi", &vars).unwrap(),
            Expr::Number(std::f64::consts::PI)
        );
        assert_eq!(parse("i", &vars).unwrap(), Expr::Imag);
        assert!(parse("2*pi", &vars).is_ok());
    }

    #[test]
    fn rejects_uppercase_and_scientific_notation() {
        let vars: [&str; 0] = [];
        assert!(matches!(parse("X", &vars), Err(Error::Syntax { pos: 1, .. })));
        // `1e5` lexes as number 1 then identifier e5 -> trailing input.
        assert!(parse("1e5", &vars).is_err());
        assert!(matches!(parse("1.", &vars), Err(Error::Syntax { pos: 2, .. })));
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse("2^3^2", &[] as &[&str]).unwrap();
        assert_eq!(
            e,
            Expr::Pow(
                Box::new(Expr::Number(2.0)),
                Box::new(Expr::Pow(
                    Box::new(Expr::Number(3.0)),
                    Box::new(Expr::Number(2.0))
                ))
            )
        );
    }

    #[test]
    fn function_requires_parentheses() {
        assert!(parse("sin x", &["x"]).is_err());
        assert!(parse("sin(x)", &["x"]).is_ok());
        // A declared variable cannot be called.
        assert!(parse("x(1)", &["x"]).is_err());
    }

    #[test]
    fn reserved_names_rejected_as_variables() {
        assert!(parse("x", &["eps", "x"]).is_err());
        assert!(parse("x", &["sin"]).is_err());
    }

    #[test]
    fn unmatched_paren_position() {
        let err = parse("(x1 + 2", &["x1"]).unwrap_err();
        match err {
            Error::Syntax { pos, .. } => assert_eq!(pos, 8),
            other => panic!("unexpected {other}"),
        }
    }
}
