use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{BinaryOp, EvalError, Expr, Function};

/// Identifier values plus the `months` builtin (`years` is derived).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalScope {
    values: BTreeMap<String, f64>,
    months: f64,
}

impl EvalScope {
    pub fn new(months: f64) -> Self {
        Self {
            values: BTreeMap::new(),
            months,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "months" => Some(self.months),
            "years" => Some(self.years()),
            _ => self.values.get(name).copied(),
        }
    }

    pub fn months(&self) -> f64 {
        self.months
    }

    pub fn years(&self) -> f64 {
        self.months / 12.0
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Const(f64),
    Slot(usize),
    Unbound(String),
    Months,
    Years,
    Binary(BinaryOp, usize),
    Neg,
    Call(Function),
}

/// Stack-machine form of an expression with identifiers resolved to slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    max_stack: usize,
}

impl CompiledExpr {
    pub(super) fn new<S: AsRef<str>>(root: &Expr, slots: &[S]) -> Self {
        let mut ops = Vec::new();
        emit(root, slots, &mut ops);
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Slot(_) | Op::Unbound(_) | Op::Months | Op::Years => depth += 1,
                Op::Binary(..) => depth -= 1,
                Op::Neg => {}
                Op::Call(f) => depth -= f.arity() - 1,
            }
            max_stack = max_stack.max(depth);
        }
        Self { ops, max_stack }
    }

    /// Evaluate with `slots[i]` bound to the i-th compile-time identifier.
    /// `stack` is scratch space reused across calls.
    pub fn eval(&self, slots: &[f64], months: f64, stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        stack.clear();
        stack.reserve(self.max_stack);
        for op in &self.ops {
            match op {
                Op::Const(v) => stack.push(*v),
                Op::Slot(i) => stack.push(slots[*i]),
                Op::Unbound(name) => return Err(EvalError::UnboundIdentifier(name.clone())),
                Op::Months => stack.push(months),
                Op::Years => stack.push(months / 12.0),
                Op::Binary(op, offset) => {
                    let rhs = stack.pop().unwrap_or(f64::NAN);
                    let lhs = stack.pop().unwrap_or(f64::NAN);
                    let v = match op {
                        BinaryOp::Add => lhs + rhs,
                        BinaryOp::Sub => lhs - rhs,
                        BinaryOp::Mul => lhs * rhs,
                        BinaryOp::Div => {
                            if rhs == 0.0 {
                                return Err(EvalError::DivisionByZero { offset: *offset });
                            }
                            lhs / rhs
                        }
                    };
                    stack.push(v);
                }
                Op::Neg => {
                    if let Some(top) = stack.last_mut() {
                        *top = -*top;
                    }
                }
                Op::Call(f) => {
                    let v = match f {
                        Function::Abs => stack.pop().unwrap_or(f64::NAN).abs(),
                        Function::Max | Function::Min => {
                            let b = stack.pop().unwrap_or(f64::NAN);
                            let a = stack.pop().unwrap_or(f64::NAN);
                            if *f == Function::Max {
                                a.max(b)
                            } else {
                                a.min(b)
                            }
                        }
                    };
                    stack.push(v);
                }
            }
        }
        match stack.pop() {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(EvalError::NonFiniteResult),
        }
    }
}

fn emit<S: AsRef<str>>(expr: &Expr, slots: &[S], ops: &mut Vec<Op>) {
    match expr {
        Expr::Number(v) => ops.push(Op::Const(*v)),
        Expr::Ident(name) => ops.push(match name.as_str() {
            "months" => Op::Months,
            "years" => Op::Years,
            _ => match slots.iter().position(|s| s.as_ref() == name) {
                Some(i) => Op::Slot(i),
                None => Op::Unbound(name.clone()),
            },
        }),
        Expr::Binary { op, lhs, rhs, offset } => {
            emit(lhs, slots, ops);
            emit(rhs, slots, ops);
            ops.push(Op::Binary(*op, *offset));
        }
        Expr::Neg(child) => {
            emit(child, slots, ops);
            ops.push(Op::Neg);
        }
        Expr::Call { func, args } => {
            for a in args {
                emit(a, slots, ops);
            }
            ops.push(Op::Call(*func));
        }
    }
}
