//! Integer/boolean expressions over an abstract variable type.
//!
//! The same expression tree is used for program instructions (over [`Var`]),
//! for renamed write expressions in symbolic traces, and for state assertions.
//! Booleans are the integers `0` and `1`; any non-zero value is truthy.

use std::fmt;

use super::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr<V> {
    Const(Value),
    Var(V),
    Unary(UnOp, Box<Expr<V>>),
    Binary(BinOp, Box<Expr<V>>, Box<Expr<V>>),
}

pub fn truthy(v: Value) -> bool {
    v != 0
}

fn bool_value(b: bool) -> Value {
    Value::from(b)
}

impl<V> Expr<V> {
    pub fn var(v: V) -> Self {
        Expr::Var(v)
    }

    pub fn unary(op: UnOp, e: Expr<V>) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinOp, l: Expr<V>, r: Expr<V>) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn logical_not(e: Expr<V>) -> Self {
        Expr::unary(UnOp::Not, e)
    }

    pub fn and(l: Expr<V>, r: Expr<V>) -> Self {
        Expr::binary(BinOp::And, l, r)
    }

    pub fn eq(l: Expr<V>, r: Expr<V>) -> Self {
        Expr::binary(BinOp::Eq, l, r)
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    /// Evaluates with `&&`/`||` short-circuiting left to right.
    pub fn eval<F>(&self, lookup: &mut F) -> Result<Value, EvalError>
    where
        F: FnMut(&V) -> Value,
    {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => Ok(lookup(v)),
            Expr::Unary(op, e) => {
                let v = e.eval(lookup)?;
                match op {
                    UnOp::Neg => v.checked_neg().ok_or(EvalError::Overflow),
                    UnOp::Not => Ok(bool_value(!truthy(v))),
                }
            }
            Expr::Binary(BinOp::And, l, r) => {
                if !truthy(l.eval(lookup)?) {
                    return Ok(0);
                }
                Ok(bool_value(truthy(r.eval(lookup)?)))
            }
            Expr::Binary(BinOp::Or, l, r) => {
                if truthy(l.eval(lookup)?) {
                    return Ok(1);
                }
                Ok(bool_value(truthy(r.eval(lookup)?)))
            }
            Expr::Binary(op, l, r) => {
                let a = l.eval(lookup)?;
                let b = r.eval(lookup)?;
                match op {
                    BinOp::Add => a.checked_add(b).ok_or(EvalError::Overflow),
                    BinOp::Sub => a.checked_sub(b).ok_or(EvalError::Overflow),
                    BinOp::Mul => a.checked_mul(b).ok_or(EvalError::Overflow),
                    BinOp::Div => {
                        if b == 0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            a.checked_div(b).ok_or(EvalError::Overflow)
                        }
                    }
                    BinOp::Mod => {
                        if b == 0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            a.checked_rem_euclid(b).ok_or(EvalError::Overflow)
                        }
                    }
                    BinOp::Eq => Ok(bool_value(a == b)),
                    BinOp::Ne => Ok(bool_value(a != b)),
                    BinOp::Lt => Ok(bool_value(a < b)),
                    BinOp::Le => Ok(bool_value(a <= b)),
                    BinOp::Gt => Ok(bool_value(a > b)),
                    BinOp::Ge => Ok(bool_value(a >= b)),
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        }
    }

    pub fn map_vars<W, F>(&self, f: &mut F) -> Expr<W>
    where
        F: FnMut(&V) -> Expr<W>,
    {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => f(v),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_vars(f))),
            Expr::Binary(op, l, r) => {
                Expr::Binary(*op, Box::new(l.map_vars(f)), Box::new(r.map_vars(f)))
            }
        }
    }

    pub fn visit_vars<'a, F>(&'a self, f: &mut F)
    where
        F: FnMut(&'a V),
    {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.visit_vars(f),
            Expr::Binary(_, l, r) => {
                l.visit_vars(f);
                r.visit_vars(f);
            }
        }
    }

    /// Distinct free variables in first-occurrence order.
    pub fn free_vars(&self) -> Vec<V>
    where
        V: Clone + PartialEq,
    {
        let mut out: Vec<V> = Vec::new();
        self.visit_vars(&mut |v| {
            if !out.contains(v) {
                out.push(v.clone());
            }
        });
        out
    }

    /// Renders the expression; binary sub-terms are parenthesized so the
    /// text parses back to the same tree.
    pub fn render<F>(&self, name: &F) -> String
    where
        F: Fn(&V) -> String,
    {
        let mut s = String::new();
        self.render_into(name, &mut s, true);
        s
    }

    fn render_into<F>(&self, name: &F, out: &mut String, top: bool)
    where
        F: Fn(&V) -> String,
    {
        match self {
            Expr::Const(c) => out.push_str(&c.to_string()),
            Expr::Var(v) => out.push_str(&name(v)),
            Expr::Unary(op, e) => {
                out.push(match op {
                    UnOp::Neg => '-',
                    UnOp::Not => '!',
                });
                // `-3` would re-parse as a literal, so keep the operand wrapped.
                let wrap = matches!(**e, Expr::Const(_)) || matches!(**e, Expr::Unary(..));
                if wrap {
                    out.push('(');
                    e.render_into(name, out, true);
                    out.push(')');
                } else {
                    e.render_into(name, out, false);
                }
            }
            Expr::Binary(op, l, r) => {
                if !top {
                    out.push('(');
                }
                l.render_into(name, out, false);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                r.render_into(name, out, false);
                if !top {
                    out.push(')');
                }
            }
        }
    }
}

impl<V: fmt::Display> fmt::Display for Expr<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|v: &V| v.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lookup(name: &str) -> Value {
        match name {
            "l" => 2,
            "m" => 3,
            "flag1" => 1,
            "t" => 1,
            _ => 0,
        }
    }

    fn v(n: &'static str) -> Expr<&'static str> {
        Expr::Var(n)
    }

    #[test]
    fn arithmetic() {
        let e = Expr::binary(BinOp::Add, v("l"), Expr::Const(1));
        assert_eq!(e.eval(&mut |n| lookup(n)), Ok(3));
        let e = Expr::binary(BinOp::Add, v("m"), Expr::Const(2));
        assert_eq!(e.eval(&mut |n| lookup(n)), Ok(5));
    }

    #[test]
    fn busy_wait_condition() {
        let e = Expr::and(
            Expr::eq(v("flag1"), Expr::Const(1)),
            Expr::eq(v("t"), Expr::Const(1)),
        );
        assert_eq!(e.eval(&mut |n| lookup(n)), Ok(1));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let e = Expr::binary(BinOp::Div, v("l"), Expr::Const(0));
        assert_eq!(e.eval(&mut |n| lookup(n)), Err(EvalError::DivisionByZero));
        let e = Expr::binary(BinOp::Mod, v("l"), v("x"));
        assert_eq!(e.eval(&mut |n| lookup(n)), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn short_circuit_skips_right_operand() {
        let e = Expr::and(
            Expr::Const(0),
            Expr::binary(BinOp::Div, Expr::Const(1), Expr::Const(0)),
        );
        assert_eq!(e.eval(&mut |n: &&str| lookup(n)), Ok(0));
    }

    #[test]
    fn free_vars_in_first_occurrence_order() {
        let e = Expr::binary(
            BinOp::Add,
            Expr::binary(BinOp::Mul, v("m"), v("l")),
            v("m"),
        );
        assert_eq!(e.free_vars(), vec!["m", "l"]);
    }

    #[test]
    fn render_parenthesizes_nested_binaries() {
        let e = Expr::binary(
            BinOp::Sub,
            Expr::binary(BinOp::Add, v("a"), v("b")),
            Expr::unary(UnOp::Neg, Expr::Const(3)),
        );
        assert_eq!(e.to_string(), "(a + b) - -(3)");
    }
}
