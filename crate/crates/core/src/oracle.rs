//! Exact tilde of polynomial traces, used to check the compositional bound.
//!
//! A polynomial is expanded into monomials; its tilde at 1 is the sum of
//! absolute coefficients and the derivative along the all-ones direction is
//! the degree-weighted sum.

use std::collections::{BTreeMap, HashMap};

use crate::paths::{Trace, TraceStmt};
use crate::syntax::{Expr, Input, LValue};

/// Multivariate polynomial: exponent tuple to coefficient, no zero terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolySeries {
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl PolySeries {
    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = PolySeries::default();
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        PolySeries { terms: [(e, 1.0)].into() }
    }

    fn insert(&mut self, e: Vec<u32>, c: f64) {
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.insert(e.clone(), *c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        PolySeries { terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = PolySeries::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert(e, ca * cb);
            }
        }
        out
    }

    /// `(Σ|a|, Σ deg·|a|)`.
    pub fn tilde_at_one(&self) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(t, d), (e, c)| {
            let deg: u32 = e.iter().sum();
            (t + c.abs(), d + deg as f64 * c.abs())
        })
    }
}

pub fn poly_tilde_oracle(p: &PolySeries) -> (f64, f64) {
    p.tilde_at_one()
}

/// Expands a polynomial expression; `None` for anything non-polynomial.
pub fn poly_of_expr(e: &Expr, env: &HashMap<String, PolySeries>, nvars: usize) -> Option<PolySeries> {
    Some(match e {
        Expr::Const(c) => PolySeries::constant(nvars, *c),
        Expr::Var(n) => env.get(n)?.clone(),
        Expr::Neg(a) => poly_of_expr(a, env, nvars)?.neg(),
        Expr::Add(a, b) => poly_of_expr(a, env, nvars)?.add(&poly_of_expr(b, env, nvars)?),
        Expr::Sub(a, b) => poly_of_expr(a, env, nvars)?.add(&poly_of_expr(b, env, nvars)?.neg()),
        Expr::Mul(a, b) => poly_of_expr(a, env, nvars)?.mul(&poly_of_expr(b, env, nvars)?),
        _ => return None,
    })
}

/// Expands every return value of a scalar polynomial trace.
pub fn poly_of_trace(inputs: &[Input], t: &Trace) -> Option<Vec<PolySeries>> {
    if inputs.iter().any(|i| i.dim != 1) {
        return None;
    }
    let n = inputs.len();
    let mut env: HashMap<String, PolySeries> =
        inputs.iter().enumerate().map(|(i, x)| (x.name.clone(), PolySeries::var(n, i))).collect();
    for s in &t.body {
        match s {
            TraceStmt::Assign(LValue::Var(name), e) => {
                let p = poly_of_expr(e, &env, n)?;
                env.insert(name.clone(), p);
            }
            _ => return None,
        }
    }
    t.returns.iter().map(|r| poly_of_expr(r, &env, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::collect_traces;
    use crate::syntax::{parse_core, PathId};

    fn oracle(src: &str) -> Vec<(f64, f64)> {
        let p = parse_core(src).unwrap();
        let t = &collect_traces(&p).unwrap()[&PathId::empty()];
        poly_of_trace(&p.inputs, t).unwrap().iter().map(poly_tilde_oracle).collect()
    }

    #[test]
    fn cancellation_is_exact() {
        assert_eq!(oracle("fun (x) { return x + (-x) }"), vec![(0.0, 0.0)]);
    }

    #[test]
    fn square_of_binomial() {
        // (x - 2y)^2 = x^2 - 4xy + 4y^2
        assert_eq!(oracle("fun (x, y) { z = x - 2 * y; return z * z }"), vec![(9.0, 18.0)]);
    }

    #[test]
    fn constant_term_has_no_derivative() {
        assert_eq!(oracle("fun (x) { return 3 + -2 * x }"), vec![(5.0, 2.0)]);
    }

    #[test]
    fn non_polynomial_rejected() {
        let p = parse_core("fun (x) { return sin(x) }").unwrap();
        let t = &collect_traces(&p).unwrap()[&PathId::empty()];
        assert!(poly_of_trace(&p.inputs, t).is_none());
    }
}
