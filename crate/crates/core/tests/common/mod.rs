#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use turaco::rng::StreamRng;

pub fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

pub fn bench(name: &str) -> PathBuf {
    corpus().join(format!("{name}.turaco"))
}

/// Every bundled program, table ones first.
pub fn all_programs() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = turaco::experiment::TABLE_BENCHMARKS.iter().map(|n| bench(n)).collect();
    for n in ["skewed_complexity", "skewed_frequency", "analysis_imprecise"] {
        out.push(corpus().join("synthetic").join(format!("{n}.turaco")));
    }
    out
}

fn operand(rng: &mut StreamRng, names: &[String]) -> String {
    if rng.gen_bool(0.2) {
        // halves so that cancellations actually happen
        let c = rng.gen_range(-6i32..=6) as f64 / 2.0;
        format!("{c}")
    } else {
        names[rng.gen_range(0..names.len())].clone()
    }
}

/// Random straight-line polynomial program over scalar inputs.
pub fn random_poly_program(rng: &mut StreamRng) -> String {
    let nin = rng.gen_range(1..=3);
    let mut names: Vec<String> = ["x", "y", "z"][..nin].iter().map(|s| s.to_string()).collect();
    let mut src = format!("fun ({}) {{\n", names.join(", "));
    let nstmt = rng.gen_range(1..=5);
    for k in 0..nstmt {
        let a = operand(rng, &names);
        let b = if rng.gen_bool(0.25) { a.clone() } else { operand(rng, &names) };
        let op = ["+", "-", "*"][rng.gen_range(0..3)];
        let neg = if rng.gen_bool(0.2) { "-" } else { "" };
        src.push_str(&format!("  t{k} = {neg}({a}) {op} ({b});\n"));
        names.push(format!("t{k}"));
    }
    let nret = rng.gen_range(1..=2);
    let rets: Vec<String> = (0..nret).map(|_| names[rng.gen_range(nin..names.len())].clone()).collect();
    src.push_str(&format!("  return {};\n}}\n", rets.join(", ")));
    src
}
