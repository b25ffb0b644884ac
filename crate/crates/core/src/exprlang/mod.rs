//! Objective-expression language.
//!
//! ```text
//! expr    = term , { ("+" | "-") , term } ;
//! term    = unary , { ("*" | "/") , unary } ;
//! unary   = "-" , unary | primary ;
//! primary = number | call | ident | "(" , expr , ")" ;
//! call    = ("max" | "min" | "abs") , "(" , expr , { "," , expr } , ")" ;
//! ident   = lower , { lower | digit | "_" } ;
//! number  = digit , { digit } , [ "." , digit , { digit } ] , [ ("e" | "E") , [ "+" | "-" ] , digit , { digit } ] ;
//! ```
//!
//! `months` and `years` (= months / 12) are builtins supplied by the
//! evaluation scope; every other identifier must be bound.

mod eval;
mod parse;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use eval::{CompiledExpr, EvalScope};
pub use parse::parse;

pub const BUILTINS: [&str; 2] = ["months", "years"];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

/// Function names cannot be used as plain identifiers.
pub fn is_reserved(name: &str) -> bool {
    Function::from_name(name).is_some()
}

/// `[a-z][a-z0-9_]*`
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Function {
    Max,
    Min,
    Abs,
}

impl Function {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "max" => Some(Function::Max),
            "min" => Some(Function::Min),
            "abs" => Some(Function::Abs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Max => "max",
            Function::Min => "min",
            Function::Abs => "abs",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Function::Max | Function::Min => 2,
            Function::Abs => 1,
        }
    }
}

/// Expression tree. `offset` on binary nodes is the byte offset of the
/// operator in the source; it is ignored by `PartialEq`.
#[derive(Debug, Clone)]
pub enum Expr {
    Number(f64),
    Ident(String),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        offset: usize,
    },
    Neg(Box<Expr>),
    Call { func: Function, args: Vec<Expr> },
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Expr::Number(a), Expr::Number(b)) => a.to_bits() == b.to_bits(),
            (Expr::Ident(a), Expr::Ident(b)) => a == b,
            (
                Expr::Binary { op: oa, lhs: la, rhs: ra, .. },
                Expr::Binary { op: ob, lhs: lb, rhs: rb, .. },
            ) => oa == ob && la == lb && ra == rb,
            (Expr::Neg(a), Expr::Neg(b)) => a == b,
            (Expr::Call { func: fa, args: aa }, Expr::Call { func: fb, args: ab }) => {
                fa == fb && aa == ab
            }
            _ => false,
        }
    }
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
            offset: 0,
        }
    }

    pub fn ident(name: &str) -> Expr {
        Expr::Ident(name.into())
    }

    pub fn call(func: Function, args: Vec<Expr>) -> Expr {
        Expr::Call { func, args }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 4,
        }
    }

    fn write_source(&self, out: &mut String) {
        use core::fmt::Write;
        match self {
            Expr::Number(v) => {
                let _ = write!(out, "{v}");
            }
            Expr::Ident(name) => out.push_str(name),
            Expr::Binary { op, lhs, rhs, .. } => {
                let p = op.precedence();
                write_child(lhs, lhs.precedence() < p, out);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                // right operand of equal precedence needs parentheses to keep
                // the tree shape under left associativity
                write_child(rhs, rhs.precedence() <= p, out);
            }
            Expr::Neg(child) => {
                out.push('-');
                write_child(child, child.precedence() < 3, out);
            }
            Expr::Call { func, args } => {
                out.push_str(func.name());
                out.push('(');
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    arg.write_source(out);
                }
                out.push(')');
            }
        }
    }

    fn collect_identifiers(&self, out: &mut Vec<String>) {
        match self {
            Expr::Number(_) => {}
            Expr::Ident(name) => {
                if !is_builtin(name) && !out.iter().any(|n| n == name) {
                    out.push(name.clone());
                }
            }
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_identifiers(out);
                rhs.collect_identifiers(out);
            }
            Expr::Neg(child) => child.collect_identifiers(out),
            Expr::Call { args, .. } => args.iter().for_each(|a| a.collect_identifiers(out)),
        }
    }
}

fn write_child(child: &Expr, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        child.write_source(out);
        out.push(')');
    } else {
        child.write_source(out);
    }
}

/// A parsed objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveExpr {
    root: Expr,
}

impl ObjectiveExpr {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        parse(source)
    }

    pub fn from_root(root: Expr) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn to_source(&self) -> String {
        let mut out = String::new();
        self.root.write_source(&mut out);
        out
    }

    /// Non-builtin identifiers in first-occurrence order.
    pub fn identifiers(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.root.collect_identifiers(&mut out);
        out
    }

    pub fn eval(&self, scope: &EvalScope) -> Result<f64, EvalError> {
        let names = self.identifiers();
        let mut slots = Vec::with_capacity(names.len());
        for name in &names {
            match scope.get(name) {
                Some(v) => slots.push(v),
                None => return Err(EvalError::UnboundIdentifier(name.clone())),
            }
        }
        let compiled = self.compile(&names);
        compiled.eval(&slots, scope.months(), &mut Vec::new())
    }

    /// Compile against a fixed slot order. Identifiers absent from `slots`
    /// evaluate to an `UnboundIdentifier` error.
    pub fn compile<S: AsRef<str>>(&self, slots: &[S]) -> CompiledExpr {
        CompiledExpr::new(&self.root, slots)
    }
}

impl fmt::Display for ObjectiveExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_source())
    }
}

pub fn identifiers(expr: &ObjectiveExpr) -> Vec<String> {
    expr.identifiers()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("`{name}` takes {expected} argument(s), got {found} (offset {offset})")]
    Arity {
        name: &'static str,
        expected: usize,
        found: usize,
        offset: usize,
    },
    #[error("division by literal zero at offset {offset}")]
    DivisionByLiteralZero { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownFunction { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::DivisionByLiteralZero { offset } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),
    #[error("division by zero at offset {offset}")]
    DivisionByZero { offset: usize },
    #[error("non-finite result")]
    NonFiniteResult,
}
