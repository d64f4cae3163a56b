use std::fmt;

/// Expressions. `Sub` and `Div` are surface sugar and never survive
/// [`desugar`](super::desugar).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    /// `log{b}(e)`: natural log expanded around the positive constant `b`.
    Log(f64, Box<Expr>),
    Vector(Vec<Expr>),
    Index(Box<Expr>, usize),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Self {
        Expr::Var(name.to_string())
    }

    pub fn neg(e: Expr) -> Self {
        Expr::Neg(Box::new(e))
    }

    pub fn add(a: Expr, b: Expr) -> Self {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Self {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn is_core(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Sub(..) | Expr::Div(..) => false,
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) | Expr::Log(_, e) => {
                e.is_core()
            }
            Expr::Index(e, _) => e.is_core(),
            Expr::Add(a, b) | Expr::Mul(a, b) => a.is_core() && b.is_core(),
            Expr::Vector(es) => es.iter().all(Expr::is_core),
        }
    }

    /// Calls `f` on every variable name read by this expression.
    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => f(name),
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) | Expr::Log(_, e) => {
                e.for_each_var(f)
            }
            Expr::Index(e, _) => e.for_each_var(f),
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Sub(a, b) | Expr::Div(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Expr::Vector(es) => es.iter().for_each(|e| e.for_each_var(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LValue {
    Var(String),
    Index(String, usize),
}

impl LValue {
    pub fn name(&self) -> &str {
        match self {
            LValue::Var(n) | LValue::Index(n, _) => n,
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            LValue::Var(n) => Expr::Var(n.clone()),
            LValue::Index(n, k) => Expr::Index(Box::new(Expr::Var(n.clone())), *k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompoundOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl CompoundOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompoundOp::Add => "+=",
            CompoundOp::Sub => "-=",
            CompoundOp::Mul => "*=",
            CompoundOp::Div => "/=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
}

/// A branch condition `lhs op rhs`. The core form is `e > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

impl Cond {
    pub fn positive(e: Expr) -> Self {
        Cond { lhs: e, op: CmpOp::Gt, rhs: Expr::Const(0.0) }
    }

    pub fn is_core(&self) -> bool {
        self.op == CmpOp::Gt
            && matches!(self.rhs, Expr::Const(c) if c == 0.0)
            && self.lhs.is_core()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Skip,
    Seq(Box<Stmt>, Box<Stmt>),
    Assign(LValue, Expr),
    /// Surface only: `x op= e`.
    Compound(LValue, CompoundOp, Expr),
    If(Cond, Box<Stmt>, Box<Stmt>),
    /// `name[len];` declares a zero-initialized vector.
    VectorDecl(String, usize),
}

impl Stmt {
    /// Right-associated sequence of `stmts`; `Skip` when empty.
    pub fn seq(stmts: Vec<Stmt>) -> Stmt {
        let mut iter = stmts.into_iter().rev();
        match iter.next() {
            None => Stmt::Skip,
            Some(last) => iter.fold(last, |acc, s| Stmt::Seq(Box::new(s), Box::new(acc))),
        }
    }

    /// Flattens nested `Seq` nodes into source order.
    pub fn flatten(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        fn go<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn if_count(&self) -> usize {
        match self {
            Stmt::Seq(a, b) => a.if_count() + b.if_count(),
            Stmt::If(_, a, b) => 1 + a.if_count() + b.if_count(),
            _ => 0,
        }
    }

    pub fn is_core(&self) -> bool {
        match self {
            Stmt::Skip | Stmt::VectorDecl(..) => true,
            Stmt::Compound(..) => false,
            Stmt::Seq(a, b) => a.is_core() && b.is_core(),
            Stmt::Assign(_, e) => e.is_core(),
            Stmt::If(c, a, b) => c.is_core() && a.is_core() && b.is_core(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub inputs: Vec<Input>,
    pub body: Stmt,
    pub returns: Vec<Expr>,
}

impl Program {
    pub fn is_core(&self) -> bool {
        self.body.is_core() && self.returns.iter().all(Expr::is_core)
    }

    /// Total number of scalar input components.
    pub fn input_arity(&self) -> usize {
        self.inputs.iter().map(|i| i.dim).sum()
    }
}

/// Branch label: `l` for the then-branch, `r` for the else-branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Branch {
    L,
    R,
}

/// Sequence of branch labels, one per executed `if`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(String);

impl PathId {
    pub fn empty() -> Self {
        PathId(String::new())
    }

    pub fn push(&mut self, b: Branch) {
        self.0.push(match b {
            Branch::L => 'l',
            Branch::R => 'r',
        });
    }

    pub fn with(&self, b: Branch) -> Self {
        let mut p = self.clone();
        p.push(b);
        p
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_prefix_of(&self, other: &PathId) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl std::str::FromStr for PathId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.chars().all(|c| c == 'l' || c == 'r') {
            Ok(PathId(s.to_string()))
        } else {
            Err(format!("invalid path id {s:?}: expected only 'l' and 'r'"))
        }
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
