use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{BinaryOp, Expr, Function, ObjectiveExpr, ParseError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(v) => alloc::format!("number {v}"),
            Tok::Ident(name) => alloc::format!("identifier `{name}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lexer.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        while matches!(self.peek_byte(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok((Tok::End, start));
        };
        let single = match b {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if b.is_ascii_digit() {
            return self.number(start);
        }
        if b.is_ascii_lowercase() {
            while matches!(self.peek_byte(), Some(b'a'..=b'z' | b'0'..=b'9' | b'_')) {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        let found = self.src[start..]
            .chars()
            .next()
            .map(|c| alloc::format!("character {c:?}"))
            .unwrap_or_default();
        Err(ParseError::Syntax {
            offset: start,
            expected: vec!["number", "identifier", "`(`", "operator"],
            found,
        })
    }

    fn digits(&mut self) -> usize {
        let from = self.pos;
        while matches!(self.peek_byte(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.pos - from
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        self.digits();
        if self.peek_byte() == Some(b'.') {
            self.pos += 1;
            if self.digits() == 0 {
                return Err(self.bad_number("digit after `.`"));
            }
        }
        if matches!(self.peek_byte(), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.peek_byte(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                return Err(self.bad_number("exponent digits"));
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((Tok::Number(v), start)),
            _ => Err(ParseError::Syntax {
                offset: start,
                expected: vec!["finite number"],
                found: alloc::format!("`{text}`"),
            }),
        }
    }

    fn bad_number(&self, expected: &'static str) -> ParseError {
        let found = self.src[self.pos..]
            .chars()
            .next()
            .map(|c| alloc::format!("character {c:?}"))
            .unwrap_or_else(|| "end of input".into());
        ParseError::Syntax {
            offset: self.pos,
            expected: vec![expected],
            found,
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

// Nesting guard so hostile input cannot exhaust the stack.
const MAX_DEPTH: usize = 256;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn offset(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            expected,
            found: self.peek().describe(),
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if depth > MAX_DEPTH {
            return Err(ParseError::Syntax {
                offset: self.offset(),
                expected: vec!["shallower nesting"],
                found: "nesting limit".into(),
            });
        }
        let mut lhs = self.term(depth)?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            let (_, offset) = self.bump();
            let rhs = self.term(depth)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                offset,
            };
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr, ParseError> {
        let mut lhs = self.unary(depth)?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            let (_, offset) = self.bump();
            let rhs = self.unary(depth)?;
            if op == BinaryOp::Div && matches!(rhs, Expr::Number(v) if v == 0.0) {
                return Err(ParseError::DivisionByLiteralZero { offset });
            }
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                offset,
            };
        }
    }

    fn unary(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            if depth > MAX_DEPTH {
                return Err(self.unexpected(vec!["shallower nesting"]));
            }
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary(depth + 1)?)));
        }
        self.primary(depth)
    }

    fn primary(&mut self, depth: usize) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Number(v) => {
                self.bump();
                Ok(Expr::Number(v))
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                if *self.peek() == Tok::LParen {
                    let func = Function::from_name(&name)
                        .ok_or(ParseError::UnknownFunction { name, offset })?;
                    self.bump();
                    self.call(func, offset, depth)
                } else if Function::from_name(&name).is_some() {
                    Err(self.unexpected(vec!["`(`"]))
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr(depth + 1)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            _ => Err(self.unexpected(vec!["number", "identifier", "`(`", "`-`"])),
        }
    }

    fn call(&mut self, func: Function, offset: usize, depth: usize) -> Result<Expr, ParseError> {
        let mut args = vec![self.expr(depth + 1)?];
        while *self.peek() == Tok::Comma {
            self.bump();
            args.push(self.expr(depth + 1)?);
        }
        self.expect_rparen()?;
        if args.len() != func.arity() {
            return Err(ParseError::Arity {
                name: func.name(),
                expected: func.arity(),
                found: args.len(),
                offset,
            });
        }
        Ok(Expr::Call { func, args })
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(vec!["`)`", "`,`", "operator"]))
        }
    }
}

pub fn parse(source: &str) -> Result<ObjectiveExpr, ParseError> {
    let toks = Lexer::tokenize(source)?;
    let mut parser = Parser { toks, at: 0 };
    let root = parser.expr(0)?;
    if *parser.peek() != Tok::End {
        return Err(parser.unexpected(vec!["operator", "end of input"]));
    }
    Ok(ObjectiveExpr::from_root(root))
}
