//! Path enumeration: every combination of branch choices is inlined into a
//! branch-free trace.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::InputSpec;
use crate::interp::run_flat;
use crate::rng::stream_rng;
use crate::syntax::{Branch, Expr, LValue, PathId, Program, Stmt};

pub const DEFAULT_PATH_CAP: usize = 4096;
pub const DEFAULT_FEASIBILITY_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceStmt {
    Assign(LValue, Expr),
    VectorDecl(String, usize),
}

/// Branch-free statement sequence taken along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub path: PathId,
    pub body: Vec<TraceStmt>,
    pub returns: Vec<Expr>,
}

pub type TraceMap = BTreeMap<PathId, Trace>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("program has more than {cap} paths")]
    TooManyPaths { cap: usize },
    #[error("trace collection requires a core program (run desugar first)")]
    NotCore,
}

/// Collects the trace of every syntactic path of `p`.
pub fn collect_traces(p: &Program) -> Result<TraceMap, PathError> {
    collect_traces_capped(p, DEFAULT_PATH_CAP)
}

pub fn collect_traces_capped(p: &Program, cap: usize) -> Result<TraceMap, PathError> {
    if !p.is_core() {
        return Err(PathError::NotCore);
    }
    let mut partial = vec![(PathId::empty(), Vec::new())];
    collect(&p.body, &mut partial, cap)?;
    Ok(partial
        .into_iter()
        .map(|(path, body)| {
            let trace = Trace { path: path.clone(), body, returns: p.returns.clone() };
            (path, trace)
        })
        .collect())
}

fn collect(
    s: &Stmt,
    partial: &mut Vec<(PathId, Vec<TraceStmt>)>,
    cap: usize,
) -> Result<(), PathError> {
    match s {
        Stmt::Skip => {}
        Stmt::Seq(a, b) => {
            collect(a, partial, cap)?;
            collect(b, partial, cap)?;
        }
        Stmt::Assign(t, e) => {
            for (_, body) in partial.iter_mut() {
                body.push(TraceStmt::Assign(t.clone(), e.clone()));
            }
        }
        Stmt::VectorDecl(n, len) => {
            for (_, body) in partial.iter_mut() {
                body.push(TraceStmt::VectorDecl(n.clone(), *len));
            }
        }
        Stmt::Compound(..) => return Err(PathError::NotCore),
        Stmt::If(_, then_branch, else_branch) => {
            let mut left: Vec<_> =
                partial.iter().map(|(p, b)| (p.with(Branch::L), b.clone())).collect();
            let mut right: Vec<_> =
                std::mem::take(partial).into_iter().map(|(p, b)| (p.with(Branch::R), b)).collect();
            collect(then_branch, &mut left, cap)?;
            collect(else_branch, &mut right, cap)?;
            if left.len() + right.len() > cap {
                return Err(PathError::TooManyPaths { cap });
            }
            left.append(&mut right);
            *partial = left;
        }
    }
    Ok(())
}

/// Monte-Carlo path hit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    /// Every syntactic path with its hit count; zero means dormant.
    pub hits: BTreeMap<PathId, u64>,
    /// Draws on which the interpreter failed.
    pub errors: u64,
    pub trials: u64,
}

impl Feasibility {
    pub fn feasible(&self) -> impl Iterator<Item = &PathId> {
        self.hits.iter().filter(|(_, n)| **n > 0).map(|(p, _)| p)
    }

    pub fn dormant(&self) -> impl Iterator<Item = &PathId> {
        self.hits.iter().filter(|(_, n)| **n == 0).map(|(p, _)| p)
    }

    pub fn is_feasible(&self, path: &PathId) -> bool {
        self.hits.get(path).is_some_and(|n| *n > 0)
    }
}

const SHARD: u64 = 1 << 16;

/// Runs `p` on `trials` uniform draws from `spec`, counting hits per path.
///
/// Draws are split into fixed-size shards with independent seeded streams,
/// so the result depends only on `seed` and `trials`.
pub fn feasible_paths(
    p: &Program,
    spec: &InputSpec,
    trials: u64,
    seed: u64,
) -> Result<Feasibility, PathError> {
    let traces = collect_traces(p)?;
    let shards = trials.div_ceil(SHARD);
    let partials: Vec<(BTreeMap<PathId, u64>, u64)> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream_rng(seed, "feasibility", shard);
            let n = SHARD.min(trials - shard * SHARD);
            let mut hits = BTreeMap::new();
            let mut errors = 0;
            let mut x = vec![0.0; spec.arity()];
            for _ in 0..n {
                spec.fill(&mut rng, &mut x);
                match run_flat(p, &x) {
                    Ok((_, path)) => *hits.entry(path).or_insert(0) += 1,
                    Err(_) => errors += 1,
                }
            }
            (hits, errors)
        })
        .collect();

    let mut hits: BTreeMap<PathId, u64> = traces.keys().map(|k| (k.clone(), 0)).collect();
    let mut errors = 0;
    for (h, e) in partials {
        errors += e;
        for (path, n) in h {
            *hits.entry(path).or_insert(0) += n;
        }
    }
    Ok(Feasibility { hits, errors, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_core;

    fn ids(m: &TraceMap) -> Vec<&str> {
        m.keys().map(|k| k.as_str()).collect()
    }

    #[test]
    fn branch_free_has_single_trace() {
        let p = parse_core("fun (x) { y = x * x; return y }").unwrap();
        let t = collect_traces(&p).unwrap();
        assert_eq!(ids(&t), vec![""]);
        assert_eq!(t[&PathId::empty()].body.len(), 1);
    }

    #[test]
    fn nested_branch_in_then_only() {
        let src = "fun (x, d) {
            if (x < d) { if (x > -d) { y = x; } else { y = -x; } } else { y = x; }
            return y }";
        let t = collect_traces(&parse_core(src).unwrap()).unwrap();
        assert_eq!(ids(&t), vec!["ll", "lr", "r"]);
    }

    #[test]
    fn sequential_ifs_multiply() {
        let src = "fun (x) {
            if (x > 0) { a = 1; } else { a = 2; }
            if (x > 1) { b = 1; } else { b = 2; }
            if (x > 2) { c = 1; } else { c = 2; }
            return a + b + c }";
        let t = collect_traces(&parse_core(src).unwrap()).unwrap();
        assert_eq!(t.len(), 8);
        let keys: Vec<_> = t.keys().collect();
        for a in &keys {
            for b in &keys {
                assert!(a == b || !a.is_prefix_of(b));
            }
        }
        let rl = &t[&"rlr".parse().unwrap()];
        assert_eq!(rl.body.len(), 3);
    }

    #[test]
    fn path_cap() {
        let mut src = String::from("fun (x) {");
        for _ in 0..13 {
            src.push_str(" if (x > 0) { x = x; } else { x = x; }");
        }
        src.push_str(" return x }");
        let p = parse_core(&src).unwrap();
        assert_eq!(collect_traces(&p), Err(PathError::TooManyPaths { cap: 4096 }));
        assert_eq!(collect_traces_capped(&p, 1 << 13).unwrap().len(), 8192);
    }

    #[test]
    fn surface_program_rejected() {
        let p = crate::syntax::parse("fun (x) { x *= 2; return x }").unwrap();
        assert_eq!(collect_traces(&p), Err(PathError::NotCore));
    }
}
