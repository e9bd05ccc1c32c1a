//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = atom [ "^" unary ] ;            (* right-associative *)
//! atom    = number | "pi" | ident | ident "(" expr ")" | "(" expr ")" ;
//! number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//!         | "." digits [ exponent ] ;
//! ident   = ( letter | "_" ) { letter | digit | "_" } ;
//! ```
//!
//! Identifiers resolve to coordinates, `<coord>_dot` velocities, or
//! parameters of the supplied [`SymbolTable`].

use thiserror::Error;

use super::ast::{BinOp, Expr, Func, SymbolTable};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("function `{func}` at offset {offset} takes 1 argument, found {found}")]
    Arity {
        offset: usize,
        func: String,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(u8),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((start, Tok::End));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start).map(|n| (start, Tok::Num(n)));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let ident = std::str::from_utf8(&self.src[start..self.pos])
                .expect("ascii")
                .to_string();
            return Ok((start, Tok::Ident(ident)));
        }
        self.pos += 1;
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", c as char),
                })
            }
        };
        Ok((start, tok))
    }

    fn digits(&mut self) -> usize {
        let s = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - s
    }

    fn number(&mut self, start: usize) -> Result<f64, ParseError> {
        let int_digits = self.digits();
        let mut frac_digits = 0;
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac_digits = self.digits();
        }
        if int_digits + frac_digits == 0 {
            return Err(ParseError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                // `2e` is a number followed by an identifier; let the parser reject it.
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| ParseError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
    table: &'a SymbolTable,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (off, tok) = self.lexer.next()?;
        self.offset = off;
        self.tok = tok;
        Ok(())
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let found = match &self.tok {
            Tok::End => "end of input".to_string(),
            Tok::Num(n) => format!("number {n}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{}`", *c as char),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        };
        ParseError::Syntax {
            offset: self.offset,
            message: format!("expected {wanted}, found {found}"),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op(b'+') => BinOp::Add,
                Tok::Op(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op(b'*') => BinOp::Mul,
                Tok::Op(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Op(b'-') {
            self.bump()?;
            return Ok(Expr::neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Op(b'^') {
            self.bump()?;
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset;
        match self.tok.clone() {
            Tok::Num(n) => {
                self.bump()?;
                Ok(Expr::Const(n))
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if self.tok == Tok::LParen {
                    return self.call(&name, start);
                }
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                if let Some(i) = self.table.lookup_variable(&name) {
                    return Ok(Expr::Var(i));
                }
                if let Some(i) = self.table.lookup_param(&name) {
                    return Ok(Expr::Param(i));
                }
                Err(ParseError::UnknownIdentifier {
                    offset: start,
                    name,
                })
            }
            _ => Err(self.unexpected("a number, identifier or `(`")),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Expr, ParseError> {
        let Some(func) = Func::from_name(name) else {
            return Err(ParseError::UnknownIdentifier {
                offset: start,
                name: name.to_string(),
            });
        };
        self.bump()?; // (
        let mut args = Vec::new();
        if self.tok != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if self.tok == Tok::Comma {
                    self.bump()?;
                    continue;
                }
                break;
            }
        }
        if self.tok != Tok::RParen {
            return Err(self.unexpected("`,` or `)`"));
        }
        self.bump()?;
        if args.len() != 1 {
            return Err(ParseError::Arity {
                offset: start,
                func: name.to_string(),
                found: args.len(),
            });
        }
        Ok(Expr::call(func, args.pop().expect("one argument")))
    }
}

/// Parse `source` against `table`.
pub fn parse(source: &str, table: &SymbolTable) -> Result<Expr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        lexer: Lexer {
            src: source.as_bytes(),
            pos: 0,
        },
        tok: Tok::End,
        offset: 0,
        table,
    };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.unexpected("an operator or end of input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ast::BinOp::*;

    fn table() -> SymbolTable {
        SymbolTable::new(&["q", "x"], &[("k", 3.0)]).unwrap()
    }

    #[test]
    fn quotient_of_power() {
        let t = SymbolTable::new(&["x"], &[]).unwrap();
        let e = parse("x_dot^2/2", &t).unwrap();
        assert_eq!(
            e,
            Expr::binary(Div, Expr::binary(Pow, Expr::Var(1), Expr::Const(2.0)), Expr::Const(2.0))
        );
    }

    #[test]
    fn call_plus_product_with_param() {
        let t = SymbolTable::new(&["q"], &[("k", 1.0)]).unwrap();
        let e = parse("sin(q) + k*q", &t).unwrap();
        assert_eq!(
            e,
            Expr::binary(
                Add,
                Expr::call(Func::Sin, Expr::Var(0)),
                Expr::binary(Mul, Expr::Param(0), Expr::Var(0))
            )
        );
    }

    #[test]
    fn dangling_operator_reports_offset() {
        let t = SymbolTable::new(&["q"], &[]).unwrap();
        let err = parse("q +", &t).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { offset: 3, .. }), "{err:?}");
    }

    #[test]
    fn precedence_and_associativity() {
        let t = table();
        // unary minus binds looser than ^
        assert_eq!(
            parse("-q^2", &t).unwrap(),
            Expr::neg(Expr::binary(Pow, Expr::Var(0), Expr::Const(2.0)))
        );
        // ^ is right-associative
        assert_eq!(
            parse("q^2^3", &t).unwrap(),
            Expr::binary(
                Pow,
                Expr::Var(0),
                Expr::binary(Pow, Expr::Const(2.0), Expr::Const(3.0))
            )
        );
        // - is left-associative
        assert_eq!(
            parse("q - x - 1", &t).unwrap(),
            Expr::binary(
                Sub,
                Expr::binary(Sub, Expr::Var(0), Expr::Var(1)),
                Expr::Const(1.0)
            )
        );
        // * binds tighter than +
        assert_eq!(
            parse("1 + q*x", &t).unwrap(),
            Expr::binary(
                Add,
                Expr::Const(1.0),
                Expr::binary(Mul, Expr::Var(0), Expr::Var(1))
            )
        );
        assert_eq!(
            parse("2^-1", &t).unwrap(),
            Expr::binary(Pow, Expr::Const(2.0), Expr::neg(Expr::Const(1.0)))
        );
    }

    #[test]
    fn numbers_and_constants() {
        let t = table();
        assert_eq!(parse("1.5e-3", &t).unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse(".25", &t).unwrap(), Expr::Const(0.25));
        assert_eq!(parse("pi", &t).unwrap(), Expr::Pi);
    }

    #[test]
    fn error_cases() {
        let t = table();
        assert_eq!(parse("   ", &t), Err(ParseError::Empty));
        assert_eq!(
            parse("q + zz", &t),
            Err(ParseError::UnknownIdentifier {
                offset: 4,
                name: "zz".into()
            })
        );
        assert_eq!(
            parse("sin(q, x)", &t),
            Err(ParseError::Arity {
                offset: 0,
                func: "sin".into(),
                found: 2
            })
        );
        assert!(matches!(parse("foo(q)", &t), Err(ParseError::UnknownIdentifier { offset: 0, .. })));
        assert!(matches!(parse("(q", &t), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("q $ 1", &t), Err(ParseError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("q x", &t), Err(ParseError::Syntax { offset: 2, .. })));
    }
}
