//! Complexity analysis.
//!
//! Each expression is interpreted as a dual number `(tilde, deriv)` bounding
//! the tilde of the function it computes (the power series with every
//! coefficient replaced by its absolute value) and that tilde's derivative,
//! both evaluated at 1. The complexity of one returned value is its squared
//! derivative bound, summed over vector components; separately returned
//! values combine as `(Σ sqrt(ζᵣ))²`, an upper bound on `Σ ζᵣ`.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::paths::{collect_traces, PathError, Trace, TraceStmt};
use crate::syntax::{Expr, Input, LValue, PathId, Program};

/// Upper bounds on a tilde and its derivative at 1. Both are nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBound {
    pub tilde: f64,
    pub deriv: f64,
}

impl DualBound {
    pub const ZERO: DualBound = DualBound { tilde: 0.0, deriv: 0.0 };
    /// Bound of a program input.
    pub const INPUT: DualBound = DualBound { tilde: 1.0, deriv: 1.0 };

    pub fn new(tilde: f64, deriv: f64) -> Self {
        DualBound { tilde, deriv }
    }

    pub fn constant(v: f64) -> Self {
        DualBound { tilde: v.abs(), deriv: 0.0 }
    }

    fn add(self, o: Self) -> Self {
        DualBound::new(self.tilde + o.tilde, self.deriv + o.deriv)
    }

    fn mul(self, o: Self) -> Self {
        DualBound::new(self.tilde * o.tilde, self.deriv * o.tilde + self.tilde * o.deriv)
    }

    fn sin(self) -> Self {
        DualBound::new(self.tilde.sinh(), self.deriv * self.tilde.cosh())
    }

    fn cos(self) -> Self {
        DualBound::new(self.tilde.cosh(), self.deriv * self.tilde.sinh())
    }

    fn exp(self) -> Self {
        let e = self.tilde.exp();
        DualBound::new(e, self.deriv * e)
    }

    /// `log` expanded around `b`; requires `b > tilde * sqrt(b^2 + 1)`.
    fn log(self, b: f64) -> Result<Self, TildeError> {
        let gap = b - self.tilde * (b * b + 1.0).sqrt();
        if gap <= 0.0 {
            return Err(TildeError::LogConvergence { b, tilde: self.tilde });
        }
        let lb = b.ln();
        Ok(DualBound::new(lb.abs() + lb - gap.ln(), self.deriv / gap))
    }
}

/// Per-variable bound: one [`DualBound`] per component.
#[derive(Debug, Clone, PartialEq)]
pub enum TildeValue {
    Scalar(DualBound),
    Vector(Vec<DualBound>),
}

impl TildeValue {
    pub fn components(&self) -> &[DualBound] {
        match self {
            TildeValue::Scalar(d) => std::slice::from_ref(d),
            TildeValue::Vector(v) => v,
        }
    }

    fn map(self, f: impl Fn(DualBound) -> DualBound) -> Self {
        match self {
            TildeValue::Scalar(d) => TildeValue::Scalar(f(d)),
            TildeValue::Vector(v) => TildeValue::Vector(v.into_iter().map(f).collect()),
        }
    }
}

pub type TildeEnv = HashMap<String, TildeValue>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TildeError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("vector length mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("index {index} out of bounds for length {len}")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("`{0}` is not a vector")]
    NotAVector(String),
    #[error(
        "log{{{b}}} does not converge: need {b} > {tilde} * sqrt({b}^2 + 1); pick a larger \
         expansion point or rescale with log(x) = log(x/c) + log(c)"
    )]
    LogConvergence { b: f64, tilde: f64 },
    #[error("complexity bound overflowed")]
    Overflow,
    #[error("analysis requires core programs (found surface syntax)")]
    NotCore,
    #[error(transparent)]
    Path(#[from] PathError),
}

fn binary(
    a: TildeValue,
    b: TildeValue,
    f: impl Fn(DualBound, DualBound) -> DualBound,
) -> Result<TildeValue, TildeError> {
    Ok(match (a, b) {
        (TildeValue::Scalar(x), TildeValue::Scalar(y)) => TildeValue::Scalar(f(x, y)),
        (TildeValue::Scalar(x), TildeValue::Vector(ys)) => {
            TildeValue::Vector(ys.into_iter().map(|y| f(x, y)).collect())
        }
        (TildeValue::Vector(xs), TildeValue::Scalar(y)) => {
            TildeValue::Vector(xs.into_iter().map(|x| f(x, y)).collect())
        }
        (TildeValue::Vector(xs), TildeValue::Vector(ys)) => {
            if xs.len() != ys.len() {
                return Err(TildeError::DimensionMismatch(xs.len(), ys.len()));
            }
            TildeValue::Vector(xs.into_iter().zip(ys).map(|(x, y)| f(x, y)).collect())
        }
    })
}

pub fn tilde_expr(env: &TildeEnv, e: &Expr) -> Result<TildeValue, TildeError> {
    let v = match e {
        Expr::Const(v) => TildeValue::Scalar(DualBound::constant(*v)),
        Expr::Var(name) => env.get(name).cloned().ok_or_else(|| TildeError::Unbound(name.clone()))?,
        Expr::Neg(a) => tilde_expr(env, a)?,
        Expr::Add(a, b) => binary(tilde_expr(env, a)?, tilde_expr(env, b)?, DualBound::add)?,
        Expr::Mul(a, b) => binary(tilde_expr(env, a)?, tilde_expr(env, b)?, DualBound::mul)?,
        Expr::Sin(a) => tilde_expr(env, a)?.map(DualBound::sin),
        Expr::Cos(a) => tilde_expr(env, a)?.map(DualBound::cos),
        Expr::Exp(a) => tilde_expr(env, a)?.map(DualBound::exp),
        Expr::Log(b, a) => match tilde_expr(env, a)? {
            TildeValue::Scalar(d) => TildeValue::Scalar(d.log(*b)?),
            TildeValue::Vector(ds) => {
                TildeValue::Vector(ds.into_iter().map(|d| d.log(*b)).collect::<Result<_, _>>()?)
            }
        },
        Expr::Vector(es) => {
            let mut out = Vec::with_capacity(es.len());
            for x in es {
                match tilde_expr(env, x)? {
                    TildeValue::Scalar(d) => out.push(d),
                    TildeValue::Vector(v) => return Err(TildeError::DimensionMismatch(1, v.len())),
                }
            }
            TildeValue::Vector(out)
        }
        Expr::Index(a, k) => match tilde_expr(env, a)? {
            TildeValue::Vector(v) => TildeValue::Scalar(
                *v.get(*k).ok_or(TildeError::IndexOutOfBounds { index: *k, len: v.len() })?,
            ),
            TildeValue::Scalar(_) => {
                return Err(TildeError::NotAVector(crate::syntax::expr_to_string(a)))
            }
        },
        Expr::Sub(..) | Expr::Div(..) => return Err(TildeError::NotCore),
    };
    if v.components().iter().any(|d| !d.tilde.is_finite() || !d.deriv.is_finite()) {
        return Err(TildeError::Overflow);
    }
    Ok(v)
}

/// Every input component maps to `(1, 1)`.
pub fn initial_env(inputs: &[Input]) -> TildeEnv {
    inputs
        .iter()
        .map(|i| {
            let v = if i.dim == 1 {
                TildeValue::Scalar(DualBound::INPUT)
            } else {
                TildeValue::Vector(vec![DualBound::INPUT; i.dim])
            };
            (i.name.clone(), v)
        })
        .collect()
}

pub fn tilde_trace(mut env: TildeEnv, t: &Trace) -> Result<TildeEnv, TildeError> {
    for s in &t.body {
        match s {
            TraceStmt::VectorDecl(name, n) => {
                env.insert(name.clone(), TildeValue::Vector(vec![DualBound::ZERO; *n]));
            }
            TraceStmt::Assign(LValue::Var(name), e) => {
                let v = tilde_expr(&env, e)?;
                env.insert(name.clone(), v);
            }
            TraceStmt::Assign(LValue::Index(name, k), e) => {
                let d = match tilde_expr(&env, e)? {
                    TildeValue::Scalar(d) => d,
                    TildeValue::Vector(v) => return Err(TildeError::DimensionMismatch(1, v.len())),
                };
                match env.get_mut(name) {
                    Some(TildeValue::Vector(v)) => {
                        let len = v.len();
                        *v.get_mut(*k).ok_or(TildeError::IndexOutOfBounds { index: *k, len })? = d;
                    }
                    Some(TildeValue::Scalar(_)) => return Err(TildeError::NotAVector(name.clone())),
                    None => return Err(TildeError::Unbound(name.clone())),
                }
            }
        }
    }
    Ok(env)
}

/// Bounds of each returned value, one entry per component.
pub fn output_bounds(inputs: &[Input], t: &Trace) -> Result<Vec<Vec<DualBound>>, TildeError> {
    let env = tilde_trace(initial_env(inputs), t)?;
    t.returns.iter().map(|r| Ok(tilde_expr(&env, r)?.components().to_vec())).collect()
}

/// Complexity of one trace: per returned value, the sum over components of
/// the squared derivative bound; several returned values combine as the
/// square of the sum of their square roots.
pub fn trace_complexity(inputs: &[Input], t: &Trace) -> Result<f64, TildeError> {
    let root: f64 = output_bounds(inputs, t)?
        .iter()
        .map(|ds| ds.iter().map(|d| d.deriv * d.deriv).sum::<f64>().sqrt())
        .sum();
    Ok(root * root)
}

/// Complexity of every syntactic path of `p`.
pub fn program_complexities(p: &Program) -> Result<BTreeMap<PathId, f64>, TildeError> {
    collect_traces(p)?
        .into_iter()
        .map(|(path, t)| Ok((path, trace_complexity(&p.inputs, &t)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_core;

    fn env1(name: &str) -> TildeEnv {
        initial_env(&[Input { name: name.into(), dim: 1 }])
    }

    fn scalar(v: TildeValue) -> DualBound {
        match v {
            TildeValue::Scalar(d) => d,
            other => panic!("{other:?}"),
        }
    }

    fn expr_of(src: &str) -> Expr {
        parse_core(&format!("fun (x) {{ return {src} }}")).unwrap().returns.remove(0)
    }

    #[test]
    fn x_plus_neg_x() {
        let d = scalar(tilde_expr(&env1("x"), &expr_of("x + (-x)")).unwrap());
        assert_eq!(d, DualBound::new(2.0, 2.0));
    }

    #[test]
    fn sin_closed_form() {
        let d = scalar(tilde_expr(&env1("x"), &expr_of("sin(x)")).unwrap());
        assert!((d.tilde - 1.175201).abs() < 1e-6 && (d.deriv - 1.543081).abs() < 1e-6);
        assert!((d.tilde - 1f64.sinh()).abs() < 1e-12 && (d.deriv - 1f64.cosh()).abs() < 1e-12);
    }

    #[test]
    fn exp_closed_form() {
        let d = scalar(tilde_expr(&env1("x"), &expr_of("exp(x)")).unwrap());
        let e = std::f64::consts::E;
        assert!((d.tilde - e).abs() < 1e-12 && (d.deriv - e).abs() < 1e-12);
    }

    #[test]
    fn log_rule() {
        let d = scalar(tilde_expr(&env1("x"), &expr_of("log{1}(0.5 * x)")).unwrap());
        let gap = 1.0 - 0.5 * 2f64.sqrt();
        assert!((gap - 0.292893).abs() < 1e-6);
        assert!((d.tilde + gap.ln()).abs() < 1e-12);
        assert!((d.tilde - 1.227947).abs() < 1e-6);
        assert!((d.deriv - 1.707107).abs() < 1e-6);
    }

    #[test]
    fn log_convergence_violation() {
        let err = tilde_expr(&env1("x"), &expr_of("log{1}(0.75 * x)")).unwrap_err();
        assert!(matches!(err, TildeError::LogConvergence { .. }));
        assert!(err.to_string().contains("log(x/c) + log(c)"));
        // b = 3.88 satisfies the bound for the same argument.
        assert!(tilde_expr(&env1("x"), &expr_of("log{3.88}(0.75 * x)")).is_ok());
    }

    #[test]
    fn negation_is_invisible() {
        let e = expr_of("sin(x) * x + 3");
        let a = tilde_expr(&env1("x"), &e).unwrap();
        let b = tilde_expr(&env1("x"), &Expr::neg(e)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_output_has_zero_complexity() {
        let p = parse_core("fun (x) { y = 0; return y }").unwrap();
        assert_eq!(program_complexities(&p).unwrap()[&PathId::empty()], 0.0);
    }

    #[test]
    fn vector_complexity_sums_components() {
        let p = parse_core("fun (v[2]) { w[3]; w[0] = v[0] * v[1]; w[2] = 3 * v[1]; return w }").unwrap();
        let z = program_complexities(&p).unwrap()[&PathId::empty()];
        assert!((z - 13.0).abs() < 1e-12);
    }

    #[test]
    fn separate_returns_combine_as_squared_sum() {
        let p = parse_core("fun (x) { return x, 2 * x }").unwrap();
        assert_eq!(program_complexities(&p).unwrap()[&PathId::empty()], 9.0);
        let p = parse_core("fun (v[2]) { return v, 3 * v[0] }").unwrap();
        let z = program_complexities(&p).unwrap()[&PathId::empty()];
        assert!((z - (2f64.sqrt() + 3.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn vector_broadcast() {
        let p = parse_core("fun (v[2], a) { return v * a }").unwrap();
        let z = program_complexities(&p).unwrap()[&PathId::empty()];
        assert!((z - 8.0).abs() < 1e-12);
    }

    #[test]
    fn skip_leaves_env() {
        let p = parse_core("fun (x) { skip; return x }").unwrap();
        let traces = collect_traces(&p).unwrap();
        let t = &traces[&PathId::empty()];
        assert_eq!(tilde_trace(env1("x"), t).unwrap(), env1("x"));
    }

    #[test]
    fn overflow_reported() {
        let p = parse_core("fun (x) { return exp(exp(exp(exp(x * 3)))) }").unwrap();
        assert_eq!(program_complexities(&p), Err(TildeError::Overflow));
    }
}
