//! A small C¹ expression language for the nonlinearity `g` and the delay
//! functions, with exact forward-mode gradients.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?            (right associative)
//! atom   := number | var | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | tanh | log | sqrt
//! ```
//!
//! `abs`, `min`, `max` and conditionals are deliberately absent: every
//! expression denotes a C¹ map on its domain of definition.

mod eval;
mod parse;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use eval::Dual;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Log,
    Sqrt,
}

impl Func {
    pub(crate) fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Abstract syntax tree. Variables are indices into the declared list.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        offset: usize,
    },
}

/// A parsed expression together with its variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    ast: Expr,
    vars: Arc<[String]>,
}

impl Expression {
    pub fn parse<S: AsRef<str>>(text: &str, vars: &[S]) -> Result<Self, ParseError> {
        let vars: Arc<[String]> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        let ast = parse::Parser::new(text, &vars).parse()?;
        Ok(Expression { ast, vars })
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    /// Number of declared variables.
    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub(crate) fn render(&self, e: &Expr) -> String {
        let mut out = String::new();
        write_expr(&mut out, e, &self.vars).expect("writing to a String cannot fail");
        out
    }
}

fn write_expr(out: &mut impl fmt::Write, e: &Expr, vars: &[String]) -> fmt::Result {
    match e {
        Expr::Num(x) => write!(out, "{x:?}"),
        Expr::Var(i) => write!(out, "{}", vars[*i]),
        Expr::Neg(a) => {
            write!(out, "(-")?;
            write_expr(out, a, vars)?;
            write!(out, ")")
        }
        Expr::Bin(op, a, b) => {
            write!(out, "(")?;
            write_expr(out, a, vars)?;
            write!(out, " {} ", op.symbol())?;
            write_expr(out, b, vars)?;
            write!(out, ")")
        }
        Expr::Call(f, a) => {
            write!(out, "{}(", f.name())?;
            write_expr(out, a, vars)?;
            write!(out, ")")
        }
    }
}

/// Prints a fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, &self.ast, &self.vars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars2() -> Vec<&'static str> {
        vec!["x1", "x2"]
    }

    #[test]
    fn parses_precedence() {
        let e = Expression::parse("x1 + 2*x2", &vars2()).unwrap();
        assert_eq!(
            e.ast(),
            &Expr::bin(
                BinOp::Add,
                Expr::Var(0),
                Expr::bin(BinOp::Mul, Expr::Num(2.0), Expr::Var(1))
            )
        );
        let e = Expression::parse("sin(x1)^2", &vars2()).unwrap();
        assert_eq!(
            e.ast(),
            &Expr::bin(BinOp::Pow, Expr::call(Func::Sin, Expr::Var(0)), Expr::Num(2.0))
        );
    }

    #[test]
    fn power_is_right_associative_and_binds_tighter_than_minus() {
        let e = Expression::parse("2^3^2", &vars2()).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 512.0);
        let e = Expression::parse("-x1^2", &vars2()).unwrap();
        assert_eq!(e.eval(&[3.0, 0.0]).unwrap(), -9.0);
        let e = Expression::parse("2^-1", &vars2()).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn whitespace_insensitive() {
        let a = Expression::parse("  x1*\t(x2 -1.5e0 )", &vars2()).unwrap();
        let b = Expression::parse("x1*(x2-1.5)", &vars2()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            Expression::parse("x3", &vars2()),
            Err(ParseError::UnknownIdentifier { ref name, offset: 0 }) if name == "x3"
        ));
        assert!(matches!(
            Expression::parse("abs(x1)", &vars2()),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            Expression::parse("sin(x1, x2)", &vars2()),
            Err(ParseError::Arity {
                expected: 1,
                found: 2,
                ..
            })
        ));
        assert!(matches!(
            Expression::parse("x1 + ", &vars2()),
            Err(ParseError::Syntax { offset: 5, .. })
        ));
        assert!(matches!(
            Expression::parse("x1 $ x2", &vars2()),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            Expression::parse("(x1", &vars2()),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            Expression::parse("sin x1", &vars2()),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            Expression::parse("1e999", &vars2()),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn print_round_trip() {
        for text in [
            "x1 + 2*x2",
            "-x1^2/(1+x2^2)",
            "tanh(x1)/ (1+x2^2)",
            "exp(-0.5*x1)*cos(3*x2) - sqrt(1 + x1*x1)",
            "log(2 + sin(x1)) ^ 3 ^ 0.5",
            "1e-7 * x2 - .25",
        ] {
            let e = Expression::parse(text, &vars2()).unwrap();
            let printed = e.to_string();
            let again = Expression::parse(&printed, &vars2()).unwrap();
            assert_eq!(e, again, "{text} -> {printed}");
            assert_eq!(printed, again.to_string());
        }
    }
}
