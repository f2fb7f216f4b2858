use super::{BinOp, Expr, Func, ParseError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

pub(super) struct Parser<'a> {
    src: &'a str,
    vars: &'a [String],
    pos: usize,
    tok: Tok,
    tok_start: usize,
}

fn syntax(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        offset,
        message: message.into(),
    }
}

impl<'a> Parser<'a> {
    pub(super) fn new(src: &'a str, vars: &'a [String]) -> Self {
        Parser {
            src,
            vars,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
        }
    }

    pub(super) fn parse(mut self) -> Result<Expr, ParseError> {
        self.advance()?;
        let e = self.expr()?;
        if self.tok != Tok::End {
            return Err(syntax(self.tok_start, "unexpected trailing input"));
        }
        Ok(e)
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            self.tok = Tok::End;
            return Ok(());
        };
        self.tok = match c {
            b'0'..=b'9' | b'.' => {
                let start = self.pos;
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                    self.pos += 1;
                }
                if self.pos < bytes.len() && matches!(bytes[self.pos], b'e' | b'E') {
                    let mut p = self.pos + 1;
                    if p < bytes.len() && matches!(bytes[p], b'+' | b'-') {
                        p += 1;
                    }
                    if p < bytes.len() && bytes[p].is_ascii_digit() {
                        while p < bytes.len() && bytes[p].is_ascii_digit() {
                            p += 1;
                        }
                        self.pos = p;
                    }
                }
                let text = &self.src[start..self.pos];
                match text.parse::<f64>() {
                    Ok(x) if x.is_finite() => Tok::Num(x),
                    _ => return Err(syntax(start, format!("invalid number `{text}`"))),
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            _ => {
                let ch = self.src[self.pos..].chars().next().unwrap_or('?');
                return Err(syntax(self.pos, format!("unexpected character `{ch}`")));
            }
        };
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.tok {
            Tok::Op('-') => {
                self.advance()?;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.advance()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.advance()?;
            let exponent = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.tok_start;
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(x) => {
                self.advance()?;
                Ok(Expr::Num(x))
            }
            Tok::Ident(name) => {
                self.advance()?;
                if self.tok == Tok::LParen {
                    return self.call(name, start);
                }
                if Func::from_name(&name).is_some() {
                    return Err(syntax(self.tok_start, format!("expected `(` after `{name}`")));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(ParseError::UnknownIdentifier { name, offset: start }),
                }
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(syntax(self.tok_start, "expected `)`"));
                }
                self.advance()?;
                Ok(e)
            }
            Tok::End => Err(syntax(start, "unexpected end of input")),
            other => {
                self.tok = other;
                Err(syntax(start, "expected a number, variable, call or `(`"))
            }
        }
    }

    fn call(&mut self, name: String, start: usize) -> Result<Expr, ParseError> {
        let func = Func::from_name(&name);
        // consume '('
        self.advance()?;
        let mut args = Vec::new();
        if self.tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                match self.tok {
                    Tok::Comma => self.advance()?,
                    Tok::RParen => break,
                    _ => return Err(syntax(self.tok_start, "expected `,` or `)`")),
                }
            }
        }
        self.advance()?;
        let Some(func) = func else {
            return Err(ParseError::UnknownIdentifier { name, offset: start });
        };
        if args.len() != 1 {
            return Err(ParseError::Arity {
                name,
                expected: 1,
                found: args.len(),
                offset: start,
            });
        }
        Ok(Expr::call(func, args.pop().expect("one argument")))
    }
}
