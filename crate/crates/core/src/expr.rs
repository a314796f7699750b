//! A small arithmetic expression language for custom maps and conformal factors.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! map     := expr ',' expr
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | 'y' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func    := 'exp' | 'sin' | 'cos' | 'sqrt' | 'log'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x^2`
//! reads as `-(x^2)`. Expressions evaluate over any [`DualNum`], which is how
//! exact differentials of custom maps are obtained.

use std::fmt;

use num_dual::DualNum;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Log,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: D, y: D) -> D {
        match self {
            Expr::Num(c) => D::from(*c),
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Neg(inner) => -inner.eval(x, y),
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval(x, y);
                match op {
                    BinOp::Add => a + rhs.eval(x, y),
                    BinOp::Sub => a - rhs.eval(x, y),
                    BinOp::Mul => a * rhs.eval(x, y),
                    BinOp::Div => a / rhs.eval(x, y),
                    BinOp::Pow => match **rhs {
                        Expr::Num(c) if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 => {
                            a.powi(c as i32)
                        }
                        Expr::Num(c) => a.powf(c),
                        _ => a.powd(rhs.eval(x, y)),
                    },
                }
            }
            Expr::Call(func, arg) => {
                let v = arg.eval(x, y);
                match func {
                    Func::Exp => v.exp(),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt => v.sqrt(),
                    Func::Log => v.ln(),
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a}{sym}{b})")
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: unexpected `{0}`")]
    Unexpected(String),
    #[error("syntax error: unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("malformed number `{0}`")]
    BadNumber(String),
    #[error("expected {expected} comma-separated components")]
    ComponentCount { expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
    text: String,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part: 1e-3, 2.5E+4
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut k = i + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    i = k;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::BadNumber(text.to_string()),
            })?;
            out.push(Token {
                tok: Tok::Num(value),
                offset: start,
                text: text.to_string(),
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let text = &src[start..i];
            out.push(Token {
                tok: Tok::Ident(text.to_string()),
                offset: start,
                text: text.to_string(),
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Token {
                tok: Tok::Sym(c),
                offset: i,
                text: c.to_string(),
            });
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(ParseError {
                offset: i,
                kind: ParseErrorKind::Unexpected(ch.to_string()),
            });
        }
    }
    out.push(Token {
        tok: Tok::End,
        offset: src.len(),
        text: String::new(),
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        let t = self.peek();
        let kind = match t.tok {
            Tok::End => ParseErrorKind::UnexpectedEnd,
            _ => ParseErrorKind::Unexpected(t.text.clone()),
        };
        ParseError {
            offset: t.offset,
            kind,
        }
    }

    fn is_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.is_sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.is_sym('+') {
                BinOp::Add
            } else if self.is_sym('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_sym('*') {
                BinOp::Mul
            } else if self.is_sym('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_sym('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.is_sym('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(*v))
            }
            Tok::Sym('(') => {
                self.bump();
                let inner = self.expr()?;
                self.expect_sym(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "x" => Ok(Expr::Var(Var::X)),
                    "y" => Ok(Expr::Var(Var::Y)),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => Ok(Expr::Num(std::f64::consts::E)),
                    other => match Func::from_name(other) {
                        Some(func) => {
                            self.expect_sym('(')?;
                            let arg = self.expr()?;
                            self.expect_sym(')')?;
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        None => Err(ParseError {
                            offset: t.offset,
                            kind: ParseErrorKind::UnknownIdentifier(other.to_string()),
                        }),
                    },
                }
            }
            _ => Err(self.unexpected()),
        }
    }
}

fn parse_components(text: &str, count: usize) -> Result<Vec<Expr>, ParseError> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let mut components = Vec::with_capacity(count);
    loop {
        components.push(parser.expr()?);
        if parser.is_sym(',') {
            if components.len() == count {
                return Err(ParseError {
                    offset: parser.peek().offset,
                    kind: ParseErrorKind::ComponentCount { expected: count },
                });
            }
            parser.bump();
            continue;
        }
        if parser.peek().tok != Tok::End {
            return Err(parser.unexpected());
        }
        break;
    }
    if components.len() != count {
        return Err(ParseError {
            offset: text.len(),
            kind: ParseErrorKind::ComponentCount { expected: count },
        });
    }
    Ok(components)
}

/// Parses a single scalar expression in `x` and `y`.
pub fn parse_scalar(text: &str) -> Result<Expr, ParseError> {
    Ok(parse_components(text, 1)?.remove(0))
}

/// A parsed two-component map `(x, y) -> (f1, f2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapExpression {
    source: String,
    components: [Expr; 2],
}

impl MapExpression {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn components(&self) -> &[Expr; 2] {
        &self.components
    }

    pub fn apply<D: DualNum<Primitive = f64> + Copy>(&self, x: D, y: D) -> [D; 2] {
        [self.components[0].eval(x, y), self.components[1].eval(x, y)]
    }
}

/// Parses `"f1, f2"` into a map evaluator.
pub fn parse_map_expression(text: &str) -> Result<MapExpression, ParseError> {
    let mut parts = parse_components(text, 2)?;
    let second = parts.pop().expect("two components");
    let first = parts.pop().expect("two components");
    Ok(MapExpression {
        source: text.to_string(),
        components: [first, second],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: f64, y: f64) -> f64 {
        parse_scalar(src).unwrap().eval(x, y)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(eval("2 ^ 3 ^ 2", 0.0, 0.0), 512.0);
        assert_eq!(eval("-x^2", 3.0, 0.0), -9.0);
        assert_eq!(eval("(1 - 2) - 3", 0.0, 0.0), -4.0);
        assert_eq!(eval("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(eval("2.5e-1 * 4", 0.0, 0.0), 1.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval("exp(log(x)) + sin(pi) + cos(0)", 2.0, 0.0) - 3.0).abs() < 1e-15);
        assert_eq!(eval("sqrt(x*x + y*y)", 3.0, 4.0), 5.0);
        assert!((eval("e", 0.0, 0.0) - std::f64::consts::E).abs() < 1e-16);
        // negative base with integer exponent stays real
        assert_eq!(eval("(-2)^3", 0.0, 0.0), -8.0);
    }

    #[test]
    fn identity_map_parses() {
        let m = parse_map_expression("x, y").unwrap();
        assert_eq!(m.apply(0.3, -0.7), [0.3, -0.7]);
    }

    #[test]
    fn dangling_operator_reports_offset() {
        let err = parse_map_expression("x, +").unwrap_err();
        assert_eq!(err.offset, 3);
        assert!(matches!(err.kind, ParseErrorKind::Unexpected(ref s) if s == "+"));
    }

    #[test]
    fn unknown_identifier_reports_offset() {
        let err = parse_map_expression("x, tan(y)").unwrap_err();
        assert_eq!(err.offset, 3);
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("tan".into()));
    }

    #[test]
    fn component_count_is_checked() {
        assert!(matches!(
            parse_map_expression("x").unwrap_err().kind,
            ParseErrorKind::ComponentCount { expected: 2 }
        ));
        let err = parse_map_expression("x, y, x").unwrap_err();
        assert_eq!(err.offset, 4);
        assert!(parse_scalar("x, y").is_err());
    }

    #[test]
    fn unbalanced_parenthesis() {
        let err = parse_scalar("exp(x").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(err.offset, 5);
        let err = parse_scalar("x)").unwrap_err();
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn bad_character() {
        let err = parse_scalar("x $ y").unwrap_err();
        assert_eq!(err.offset, 2);
    }

    #[test]
    fn dual_evaluation_gives_exact_derivative() {
        use num_dual::Dual64;
        let e = parse_scalar("x^3 * sin(y)").unwrap();
        let d = e.eval(Dual64::new(2.0, 1.0), Dual64::new(0.5, 0.0));
        assert!((d.eps - 12.0 * 0.5f64.sin()).abs() < 1e-14);
    }
}
