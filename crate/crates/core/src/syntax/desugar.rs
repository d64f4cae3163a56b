use std::collections::{HashMap, HashSet};

use super::ast::{CmpOp, CompoundOp, Cond, Expr, LValue, Program, Stmt};
use super::SyntaxError;

/// Lowers a surface program to the core language.
///
/// * `a - b` becomes `a + (-b)`
/// * `e / c` becomes `e * (1/c)`; `c` must be a compile-time constant, which
///   includes variables whose only reaching definition is a constant
/// * `x op= e` becomes `x = x op e`
/// * `a < b` becomes `b + (-a) > 0` and `a > b` becomes `a + (-b) > 0`
/// * multi-value returns of non-variable expressions are bound to fresh
///   output variables
///
/// Desugaring a core program returns it unchanged.
pub fn desugar(p: &Program) -> Result<Program, SyntaxError> {
    let mut consts = HashMap::new();
    let body = stmt(&p.body, &mut consts)?;
    let mut returns = p
        .returns
        .iter()
        .map(|e| expr(e, &consts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut extra = Vec::new();
    if returns.len() > 1 && returns.iter().any(|e| !matches!(e, Expr::Var(_))) {
        let mut taken = names(p);
        for (i, r) in returns.iter_mut().enumerate() {
            if matches!(r, Expr::Var(_)) {
                continue;
            }
            let mut name = format!("ret{i}");
            while taken.contains(&name) {
                name.push('_');
            }
            taken.insert(name.clone());
            let value = std::mem::replace(r, Expr::Var(name.clone()));
            extra.push(Stmt::Assign(LValue::Var(name), value));
        }
    }
    let body = if extra.is_empty() {
        body
    } else {
        let mut stmts: Vec<Stmt> = body.flatten().into_iter().filter(|s| **s != Stmt::Skip).cloned().collect();
        stmts.extend(extra);
        Stmt::seq(stmts)
    };

    Ok(Program { inputs: p.inputs.clone(), body, returns })
}

fn names(p: &Program) -> HashSet<String> {
    let mut out: HashSet<String> = p.inputs.iter().map(|i| i.name.clone()).collect();
    fn go(s: &Stmt, out: &mut HashSet<String>) {
        match s {
            Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                go(a, out);
                go(b, out);
            }
            Stmt::Assign(t, _) | Stmt::Compound(t, _, _) => {
                out.insert(t.name().to_string());
            }
            Stmt::VectorDecl(n, _) => {
                out.insert(n.clone());
            }
            Stmt::Skip => {}
        }
    }
    go(&p.body, &mut out);
    out
}

type ConstEnv = HashMap<String, f64>;

fn stmt(s: &Stmt, consts: &mut ConstEnv) -> Result<Stmt, SyntaxError> {
    Ok(match s {
        Stmt::Skip => Stmt::Skip,
        Stmt::Seq(a, b) => {
            let a = stmt(a, consts)?;
            let b = stmt(b, consts)?;
            Stmt::Seq(Box::new(a), Box::new(b))
        }
        Stmt::VectorDecl(name, n) => {
            consts.remove(name);
            Stmt::VectorDecl(name.clone(), *n)
        }
        Stmt::Assign(target, e) => assign(target, expr(e, consts)?, consts),
        Stmt::Compound(target, op, e) => {
            let lhs = Box::new(target.to_expr());
            let rhs = Box::new(e.clone());
            let combined = match op {
                CompoundOp::Add => Expr::Add(lhs, rhs),
                CompoundOp::Sub => Expr::Sub(lhs, rhs),
                CompoundOp::Mul => Expr::Mul(lhs, rhs),
                CompoundOp::Div => Expr::Div(lhs, rhs),
            };
            assign(target, expr(&combined, consts)?, consts)
        }
        Stmt::If(c, then_branch, else_branch) => {
            let c = cond(c, consts)?;
            let mut then_consts = consts.clone();
            let t = stmt(then_branch, &mut then_consts)?;
            let e = stmt(else_branch, consts)?;
            consts.retain(|k, v| then_consts.get(k) == Some(v));
            Stmt::If(c, Box::new(t), Box::new(e))
        }
    })
}

fn assign(target: &LValue, e: Expr, consts: &mut ConstEnv) -> Stmt {
    match (target, const_value(&e, consts)) {
        (LValue::Var(name), Some(v)) => {
            consts.insert(name.clone(), v);
        }
        _ => {
            consts.remove(target.name());
        }
    }
    Stmt::Assign(target.clone(), e)
}

fn cond(c: &Cond, consts: &ConstEnv) -> Result<Cond, SyntaxError> {
    let lhs = expr(&c.lhs, consts)?;
    let rhs = expr(&c.rhs, consts)?;
    Ok(match c.op {
        CmpOp::Gt if matches!(rhs, Expr::Const(z) if z == 0.0) => Cond::positive(lhs),
        CmpOp::Gt => Cond::positive(Expr::add(lhs, Expr::neg(rhs))),
        CmpOp::Lt => Cond::positive(Expr::add(rhs, Expr::neg(lhs))),
    })
}

fn expr(e: &Expr, consts: &ConstEnv) -> Result<Expr, SyntaxError> {
    let rec = |e: &Expr| expr(e, consts).map(Box::new);
    Ok(match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => Expr::Neg(rec(a)?),
        Expr::Add(a, b) => Expr::Add(rec(a)?, rec(b)?),
        Expr::Mul(a, b) => Expr::Mul(rec(a)?, rec(b)?),
        Expr::Sub(a, b) => Expr::Add(rec(a)?, Box::new(Expr::Neg(rec(b)?))),
        Expr::Div(a, b) => {
            let divisor = const_value(b, consts).ok_or(SyntaxError::NonConstantDivisor)?;
            if divisor == 0.0 {
                return Err(SyntaxError::DivisionByZero);
            }
            Expr::Mul(rec(a)?, Box::new(Expr::Const(1.0 / divisor)))
        }
        Expr::Sin(a) => Expr::Sin(rec(a)?),
        Expr::Cos(a) => Expr::Cos(rec(a)?),
        Expr::Exp(a) => Expr::Exp(rec(a)?),
        Expr::Log(b, a) => Expr::Log(*b, rec(a)?),
        Expr::Index(a, k) => Expr::Index(rec(a)?, *k),
        Expr::Vector(es) => {
            Expr::Vector(es.iter().map(|e| expr(e, consts)).collect::<Result<_, _>>()?)
        }
    })
}

/// Folds a scalar constant expression, or returns `None`.
fn const_value(e: &Expr, consts: &ConstEnv) -> Option<f64> {
    let v = match e {
        Expr::Const(v) => *v,
        Expr::Var(name) => *consts.get(name)?,
        Expr::Neg(a) => -const_value(a, consts)?,
        Expr::Add(a, b) => const_value(a, consts)? + const_value(b, consts)?,
        Expr::Sub(a, b) => const_value(a, consts)? - const_value(b, consts)?,
        Expr::Mul(a, b) => const_value(a, consts)? * const_value(b, consts)?,
        Expr::Div(a, b) => {
            let d = const_value(b, consts)?;
            if d == 0.0 {
                return None;
            }
            const_value(a, consts)? / d
        }
        _ => return None,
    };
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    fn core(src: &str) -> Program {
        desugar(&parse(src).unwrap()).unwrap()
    }

    #[test]
    fn compound_assignment() {
        let p = core("fun (emission) { emission *= 0.1; return emission }");
        assert_eq!(
            p.body,
            Stmt::Assign(
                LValue::Var("emission".into()),
                Expr::mul(Expr::var("emission"), Expr::Const(0.1))
            )
        );
    }

    #[test]
    fn subtraction() {
        let p = core("fun (a, b) { return a - b }");
        assert_eq!(p.returns[0], Expr::add(Expr::var("a"), Expr::neg(Expr::var("b"))));
    }

    #[test]
    fn less_than_condition() {
        let p = core("fun (x) { if (x < 0.5) { y = 1; } else { y = 2; } return y }");
        match p.body {
            Stmt::If(c, _, _) => {
                assert_eq!(c, Cond::positive(Expr::add(Expr::Const(0.5), Expr::neg(Expr::var("x")))))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn division_by_constant_variable() {
        let p = core("fun (t) { t0 = 0.5; t = t / t0; return t }");
        let stmts = p.body.flatten();
        assert_eq!(
            stmts[1],
            &Stmt::Assign(LValue::Var("t".into()), Expr::mul(Expr::var("t"), Expr::Const(2.0)))
        );
    }

    #[test]
    fn division_by_input_rejected() {
        let p = parse("fun (a, b) { return a / b }").unwrap();
        assert_eq!(desugar(&p), Err(SyntaxError::NonConstantDivisor));
        let p = parse("fun (a) { return a / 0 }").unwrap();
        assert_eq!(desugar(&p), Err(SyntaxError::DivisionByZero));
    }

    #[test]
    fn branch_local_constants_do_not_leak() {
        let src = "fun (x) { c = 2; if (x > 0) { c = 4; } else { skip; } return x / c }";
        assert_eq!(desugar(&parse(src).unwrap()), Err(SyntaxError::NonConstantDivisor));
    }

    #[test]
    fn multi_return_binds_fresh_variables() {
        let p = core("fun (x) { ret0 = 1; return x, x * ret0 }");
        assert_eq!(p.returns, vec![Expr::var("x"), Expr::var("ret1")]);
        let p2 = core("fun (x) { return x + 1, x * 2 }");
        assert_eq!(p2.returns, vec![Expr::var("ret0"), Expr::var("ret1")]);
    }

    #[test]
    fn idempotent_on_core() {
        let p = core("fun (x, y) { if (x < y) { z = x - y; } else { z = x / 4; } return z, x - 1 }");
        assert!(p.is_core());
        assert_eq!(desugar(&p).unwrap(), p);
    }
}
