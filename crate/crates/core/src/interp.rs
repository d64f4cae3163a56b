//! Big-step evaluation of core programs.

use std::collections::HashMap;

use thiserror::Error;

use crate::paths::{Trace, TraceStmt};
use crate::syntax::{Branch, Cond, Expr, LValue, PathId, Program, Stmt};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn len(&self) -> usize {
        match self {
            Value::Scalar(_) => 1,
            Value::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn components(&self) -> &[f64] {
        match self {
            Value::Scalar(x) => std::slice::from_ref(x),
            Value::Vector(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("log{{{b}}} domain violation: |{b} - {v}| >= {b}")]
    LogDomain { b: f64, v: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("`{0}` is not a vector")]
    NotAVector(String),
    #[error("branch condition must be scalar")]
    VectorCondition,
    #[error("program expects {expected} input values, got {got}")]
    Arity { expected: usize, got: usize },
}

pub type Store = HashMap<String, Value>;

fn check(x: f64) -> Result<f64, EvalError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn unary(v: Value, f: impl Fn(f64) -> Result<f64, EvalError>) -> Result<Value, EvalError> {
    Ok(match v {
        Value::Scalar(x) => Value::Scalar(f(x)?),
        Value::Vector(xs) => Value::Vector(xs.into_iter().map(f).collect::<Result<_, _>>()?),
    })
}

fn binary(a: Value, b: Value, f: impl Fn(f64, f64) -> f64) -> Result<Value, EvalError> {
    Ok(match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(check(f(x, y))?),
        (Value::Scalar(x), Value::Vector(ys)) => {
            Value::Vector(ys.into_iter().map(|y| check(f(x, y))).collect::<Result<_, _>>()?)
        }
        (Value::Vector(xs), Value::Scalar(y)) => {
            Value::Vector(xs.into_iter().map(|x| check(f(x, y))).collect::<Result<_, _>>()?)
        }
        (Value::Vector(xs), Value::Vector(ys)) => {
            if xs.len() != ys.len() {
                return Err(EvalError::DimensionMismatch(xs.len(), ys.len()));
            }
            Value::Vector(
                xs.into_iter().zip(ys).map(|(x, y)| check(f(x, y))).collect::<Result<_, _>>()?,
            )
        }
    })
}

pub fn eval_expr(store: &Store, e: &Expr) -> Result<Value, EvalError> {
    match e {
        Expr::Const(v) => Ok(Value::Scalar(*v)),
        Expr::Var(name) => store.get(name).cloned().ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Neg(a) => unary(eval_expr(store, a)?, |x| Ok(-x)),
        Expr::Add(a, b) => binary(eval_expr(store, a)?, eval_expr(store, b)?, |x, y| x + y),
        Expr::Sub(a, b) => binary(eval_expr(store, a)?, eval_expr(store, b)?, |x, y| x - y),
        Expr::Mul(a, b) => binary(eval_expr(store, a)?, eval_expr(store, b)?, |x, y| x * y),
        // Division is by constants only and means multiplication by the reciprocal.
        Expr::Div(a, b) => binary(eval_expr(store, a)?, eval_expr(store, b)?, |x, y| x * (1.0 / y)),
        Expr::Sin(a) => unary(eval_expr(store, a)?, |x| check(x.sin())),
        Expr::Cos(a) => unary(eval_expr(store, a)?, |x| check(x.cos())),
        Expr::Exp(a) => unary(eval_expr(store, a)?, |x| check(x.exp())),
        Expr::Log(b, a) => unary(eval_expr(store, a)?, |v| {
            if (b - v).abs() < *b {
                check(v.ln())
            } else {
                Err(EvalError::LogDomain { b: *b, v })
            }
        }),
        Expr::Vector(es) => {
            let mut out = Vec::with_capacity(es.len());
            for x in es {
                match eval_expr(store, x)? {
                    Value::Scalar(v) => out.push(v),
                    Value::Vector(v) => return Err(EvalError::DimensionMismatch(1, v.len())),
                }
            }
            Ok(Value::Vector(out))
        }
        Expr::Index(a, k) => match eval_expr(store, a)? {
            Value::Vector(v) => v
                .get(*k)
                .map(|x| Value::Scalar(*x))
                .ok_or(EvalError::IndexOutOfBounds { index: *k, len: v.len() }),
            Value::Scalar(_) => Err(EvalError::NotAVector(crate::syntax::expr_to_string(a))),
        },
    }
}

fn assign(store: &mut Store, target: &LValue, v: Value) -> Result<(), EvalError> {
    match target {
        LValue::Var(name) => {
            store.insert(name.clone(), v);
        }
        LValue::Index(name, k) => {
            let x = match v {
                Value::Scalar(x) => x,
                Value::Vector(xs) => return Err(EvalError::DimensionMismatch(1, xs.len())),
            };
            match store.get_mut(name) {
                Some(Value::Vector(xs)) => {
                    let len = xs.len();
                    *xs.get_mut(*k).ok_or(EvalError::IndexOutOfBounds { index: *k, len })? = x;
                }
                Some(Value::Scalar(_)) => return Err(EvalError::NotAVector(name.clone())),
                None => return Err(EvalError::Unbound(name.clone())),
            }
        }
    }
    Ok(())
}

fn eval_cond(store: &Store, c: &Cond) -> Result<bool, EvalError> {
    let lhs = eval_expr(store, &c.lhs)?;
    let rhs = eval_expr(store, &c.rhs)?;
    match (lhs, rhs) {
        (Value::Scalar(a), Value::Scalar(b)) => Ok(match c.op {
            crate::syntax::CmpOp::Gt => a > b,
            crate::syntax::CmpOp::Lt => a < b,
        }),
        _ => Err(EvalError::VectorCondition),
    }
}

/// Executes a statement, appending one branch label per `if` to `path`.
pub fn exec(store: &mut Store, s: &Stmt, path: &mut PathId) -> Result<(), EvalError> {
    match s {
        Stmt::Skip => Ok(()),
        Stmt::Seq(a, b) => {
            exec(store, a, path)?;
            exec(store, b, path)
        }
        Stmt::Assign(t, e) => {
            let v = eval_expr(store, e)?;
            assign(store, t, v)
        }
        Stmt::Compound(t, op, e) => {
            let current = eval_expr(store, &t.to_expr())?;
            let rhs = eval_expr(store, e)?;
            let v = match op {
                crate::syntax::CompoundOp::Add => binary(current, rhs, |x, y| x + y),
                crate::syntax::CompoundOp::Sub => binary(current, rhs, |x, y| x - y),
                crate::syntax::CompoundOp::Mul => binary(current, rhs, |x, y| x * y),
                crate::syntax::CompoundOp::Div => binary(current, rhs, |x, y| x * (1.0 / y)),
            }?;
            assign(store, t, v)
        }
        Stmt::VectorDecl(name, n) => {
            store.insert(name.clone(), Value::Vector(vec![0.0; *n]));
            Ok(())
        }
        Stmt::If(c, then_branch, else_branch) => {
            // `v > 0` takes the then-branch; ties go right.
            if eval_cond(store, c)? {
                path.push(Branch::L);
                exec(store, then_branch, path)
            } else {
                path.push(Branch::R);
                exec(store, else_branch, path)
            }
        }
    }
}

/// Binds program inputs from values matching the declared dimensions.
pub fn bind_inputs(p: &Program, inputs: &[Value]) -> Result<Store, EvalError> {
    if inputs.len() != p.inputs.len() {
        return Err(EvalError::Arity { expected: p.inputs.len(), got: inputs.len() });
    }
    let mut store = Store::with_capacity(16);
    for (decl, v) in p.inputs.iter().zip(inputs) {
        let ok = match v {
            Value::Scalar(_) => decl.dim == 1,
            Value::Vector(xs) => xs.len() == decl.dim,
        };
        if !ok {
            return Err(EvalError::DimensionMismatch(decl.dim, v.len()));
        }
        store.insert(decl.name.clone(), v.clone());
    }
    Ok(store)
}

/// Splits a flat list of reals into input values by declared dimension.
pub fn unflatten_inputs(p: &Program, flat: &[f64]) -> Result<Vec<Value>, EvalError> {
    let expected = p.input_arity();
    if flat.len() != expected {
        return Err(EvalError::Arity { expected, got: flat.len() });
    }
    let mut out = Vec::with_capacity(p.inputs.len());
    let mut at = 0;
    for decl in &p.inputs {
        out.push(if decl.dim == 1 {
            Value::Scalar(flat[at])
        } else {
            Value::Vector(flat[at..at + decl.dim].to_vec())
        });
        at += decl.dim;
    }
    Ok(out)
}

pub fn flatten(values: &[Value]) -> Vec<f64> {
    values.iter().flat_map(|v| v.components().iter().copied()).collect()
}

/// Runs `p` on `inputs`, returning every return value and the path taken.
pub fn run(p: &Program, inputs: &[Value]) -> Result<(Vec<Value>, PathId), EvalError> {
    let mut store = bind_inputs(p, inputs)?;
    let mut path = PathId::empty();
    exec(&mut store, &p.body, &mut path)?;
    let outputs = p.returns.iter().map(|e| eval_expr(&store, e)).collect::<Result<_, _>>()?;
    Ok((outputs, path))
}

/// [`run`] over flattened inputs and outputs.
pub fn run_flat(p: &Program, inputs: &[f64]) -> Result<(Vec<f64>, PathId), EvalError> {
    let values = unflatten_inputs(p, inputs)?;
    let (outputs, path) = run(p, &values)?;
    Ok((flatten(&outputs), path))
}

/// Executes a branch-free trace.
pub fn run_trace(p: &Program, t: &Trace, inputs: &[Value]) -> Result<Vec<Value>, EvalError> {
    let mut store = bind_inputs(p, inputs)?;
    for s in &t.body {
        match s {
            TraceStmt::Assign(target, e) => {
                let v = eval_expr(&store, e)?;
                assign(&mut store, target, v)?;
            }
            TraceStmt::VectorDecl(name, n) => {
                store.insert(name.clone(), Value::Vector(vec![0.0; *n]));
            }
        }
    }
    t.returns.iter().map(|e| eval_expr(&store, e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_core;

    const LUMINANCE: &str = "fun (sunPosition, emission) {
 if (sunPosition < 0) { ambient = 0; } else { ambient = sunPosition; }
 if (sunPosition < 0.1) { emission *= 0.1; } else { emission *= sunPosition; }
 return ambient + emission;
}";

    fn s(x: f64) -> Value {
        Value::Scalar(x)
    }

    #[test]
    fn sin_zero() {
        assert_eq!(eval_expr(&Store::new(), &Expr::Sin(Box::new(Expr::Const(0.0)))), Ok(s(0.0)));
    }

    #[test]
    fn log_with_expansion_point() {
        let p = parse_core("fun (x) { return log{3.88}(0.75 * x) }").unwrap();
        let (out, _) = run(&p, &[s(2.0)]).unwrap();
        assert!((out[0].components()[0] - 1.5f64.ln()).abs() < 1e-15);
        assert!((1.5f64.ln() - 0.405465).abs() < 1e-6);
    }

    #[test]
    fn log_domain_violation() {
        let p = parse_core("fun (x) { return log{1}(x) }").unwrap();
        assert_eq!(run(&p, &[s(2.5)]), Err(EvalError::LogDomain { b: 1.0, v: 2.5 }));
    }

    #[test]
    fn luminance_paths() {
        let p = parse_core(LUMINANCE).unwrap();
        let cases = [((0.5, 0.5), 0.75, "rr"), ((-0.3, 1.0), 0.1, "ll"), ((0.05, 0.2), 0.07, "rl")];
        for ((a, b), want, path) in cases {
            let (out, got_path) = run(&p, &[s(a), s(b)]).unwrap();
            assert!((out[0].components()[0] - want).abs() < 1e-12, "{a},{b}");
            assert_eq!(got_path.as_str(), path);
        }
    }

    #[test]
    fn tie_goes_right() {
        let p = parse_core("fun (x) { if (x > 0) { y = 1; } else { y = 2; } return y }").unwrap();
        assert_eq!(run(&p, &[s(0.0)]).unwrap(), (vec![s(2.0)], "r".parse().unwrap()));
    }

    #[test]
    fn vector_broadcast_and_index() {
        let p = parse_core("fun (v[2], a) { w[3]; w[2] = a; u = v * a + 1; return u, w[2] }").unwrap();
        let (out, path) = run(&p, &[Value::Vector(vec![1.0, 2.0]), s(3.0)]).unwrap();
        assert!(path.is_empty());
        assert_eq!(flatten(&out), vec![4.0, 7.0, 3.0]);
    }

    #[test]
    fn vector_length_mismatch() {
        let p = parse_core("fun (v[2], w[3]) { return v + w }").unwrap();
        assert_eq!(
            run(&p, &[Value::Vector(vec![0.0; 2]), Value::Vector(vec![0.0; 3])]),
            Err(EvalError::DimensionMismatch(2, 3))
        );
    }

    #[test]
    fn non_finite_is_an_error() {
        let p = parse_core("fun (x) { return exp(x) }").unwrap();
        assert_eq!(run(&p, &[s(1000.0)]), Err(EvalError::NonFinite));
    }

    #[test]
    fn arity_checked() {
        let p = parse_core("fun (x, y) { return x }").unwrap();
        assert!(matches!(run_flat(&p, &[1.0]), Err(EvalError::Arity { expected: 2, got: 1 })));
    }
}
