use std::fmt::Write;

use super::ast::{CmpOp, Cond, Expr, LValue, Program, Stmt};

/// Renders a program as source text that parses back to the same AST.
pub fn pretty_print(p: &Program) -> String {
    let mut out = String::from("fun (");
    let params: Vec<String> = p
        .inputs
        .iter()
        .map(|i| if i.dim == 1 { i.name.clone() } else { format!("{}[{}]", i.name, i.dim) })
        .collect();
    out.push_str(&params.join(", "));
    out.push_str(") {\n");
    stmt(&p.body, 1, &mut out);
    let rets: Vec<String> = p.returns.iter().map(expr_to_string).collect();
    let _ = writeln!(out, " return {}", rets.join(", "));
    out.push('}');
    out.push('\n');
    out
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    expr(e, 0, &mut s);
    s
}

pub fn cond_to_string(c: &Cond) -> String {
    let op = match c.op {
        CmpOp::Lt => "<",
        CmpOp::Gt => ">",
    };
    format!("{} {op} {}", expr_to_string(&c.lhs), expr_to_string(&c.rhs))
}

fn indent(level: usize, out: &mut String) {
    out.extend(std::iter::repeat(' ').take(level));
}

fn lvalue(l: &LValue) -> String {
    match l {
        LValue::Var(n) => n.clone(),
        LValue::Index(n, k) => format!("{n}[{k}]"),
    }
}

fn stmt(s: &Stmt, level: usize, out: &mut String) {
    match s {
        Stmt::Seq(a, b) => {
            stmt(a, level, out);
            stmt(b, level, out);
        }
        Stmt::Skip => {
            indent(level, out);
            out.push_str("skip;\n");
        }
        Stmt::VectorDecl(n, len) => {
            indent(level, out);
            let _ = writeln!(out, "{n}[{len}];");
        }
        Stmt::Assign(t, e) => {
            indent(level, out);
            let _ = writeln!(out, "{} = {};", lvalue(t), expr_to_string(e));
        }
        Stmt::Compound(t, op, e) => {
            indent(level, out);
            let _ = writeln!(out, "{} {} {};", lvalue(t), op.symbol(), expr_to_string(e));
        }
        Stmt::If(c, a, b) => {
            indent(level, out);
            let _ = writeln!(out, "if ({}) {{", cond_to_string(c));
            stmt(a, level + 1, out);
            indent(level, out);
            out.push_str("} else {\n");
            stmt(b, level + 1, out);
            indent(level, out);
            out.push_str("}\n");
        }
    }
}

const ADD: u8 = 1;
const MUL: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 4;

fn expr(e: &Expr, min_prec: u8, out: &mut String) {
    let prec = match e {
        Expr::Add(..) | Expr::Sub(..) => ADD,
        Expr::Mul(..) | Expr::Div(..) => MUL,
        Expr::Neg(_) => UNARY,
        _ => ATOM,
    };
    let wrap = prec < min_prec;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Const(v) => {
            let _ = write!(out, "{v:?}");
        }
        Expr::Var(n) => out.push_str(n),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            expr(a, ADD, out);
            out.push_str(if matches!(e, Expr::Add(..)) { " + " } else { " - " });
            expr(b, MUL, out);
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            expr(a, MUL, out);
            out.push_str(if matches!(e, Expr::Mul(..)) { " * " } else { " / " });
            expr(b, UNARY, out);
        }
        Expr::Neg(a) => {
            out.push('-');
            // `-<literal>` would re-parse as a negative constant.
            let min = if matches!(**a, Expr::Const(_)) { ATOM + 1 } else { UNARY };
            expr(a, min, out);
        }
        Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
            out.push_str(match e {
                Expr::Sin(_) => "sin(",
                Expr::Cos(_) => "cos(",
                _ => "exp(",
            });
            expr(a, 0, out);
            out.push(')');
        }
        Expr::Log(b, a) => {
            let _ = write!(out, "log{{{b:?}}}(");
            expr(a, 0, out);
            out.push(')');
        }
        Expr::Index(a, k) => {
            // A negative literal base would lose its sign binding.
            let min = if matches!(**a, Expr::Const(_)) { ATOM + 1 } else { ATOM };
            expr(a, min, out);
            let _ = write!(out, "[{k}]");
        }
        Expr::Vector(es) => {
            out.push('[');
            for (i, x) in es.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(x, 0, out);
            }
            out.push(']');
        }
    }
    if wrap {
        out.push(')');
    }
}
