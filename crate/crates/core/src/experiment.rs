//! End-to-end pipeline: analysis, allocation, sampling, training and
//! reporting, plus regeneration of the benchmark statistic tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::alloc::{self, AllocError, Method, PathProfile};
use crate::data::{build_dataset, estimate_frequencies, program_hash, Config, DataError, InputSpec};
use crate::interp::run_flat;
use crate::paths::DEFAULT_FEASIBILITY_TRIALS;
use crate::rng::stream_rng;
use crate::surrogate::{stratified_evaluate_by_path, train_stratified, SurrogateError, TrainConfig};
use crate::syntax::{parse_core, PathId, Program, SyntaxError};
use crate::tilde::{program_complexities, TildeError};

/// Benchmarks covered by the statistic tables, in table order.
pub const TABLE_BENCHMARKS: [&str; 5] = ["luminance", "huber", "blackscholes", "camera", "equake"];

pub const DEFAULT_TEST_POINTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Syntax { path: String, source: SyntaxError },
    #[error(transparent)]
    Tilde(#[from] TildeError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("frequency override names `{0}`, which is not a path of the program")]
    UnknownPath(PathId),
    #[error("invalid budget list `{0}` (expected N, N,M,... or LO..HI:xK)")]
    Budgets(String),
    #[error("no input draw ran without error")]
    NoValidInput,
}

pub fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

pub fn load_program(path: &Path) -> Result<Program, PipelineError> {
    parse_core(&read_file(path)?).map_err(|source| PipelineError::Syntax { path: path.display().to_string(), source })
}

/// Config stored next to a program: `foo.turaco` pairs with `foo.json`.
pub fn sibling_config(program: &Path) -> std::path::PathBuf {
    program.with_extension("json")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrequencySource {
    Config,
    MonteCarlo { trials: u64, errors: u64 },
}

/// Complexities, frequencies and profiles of one program.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub program: Program,
    pub spec: InputSpec,
    pub complexities: BTreeMap<PathId, f64>,
    /// Every syntactic path; zero marks a dormant path.
    pub frequencies: BTreeMap<PathId, f64>,
    pub source: FrequencySource,
    pub profiles: Vec<PathProfile>,
}

impl Analysis {
    pub fn feasible(&self) -> Vec<PathId> {
        self.frequencies.iter().filter(|(_, f)| **f > 0.0).map(|(p, _)| p.clone()).collect()
    }

    pub fn fractions(&self, m: Method) -> Result<BTreeMap<PathId, f64>, AllocError> {
        alloc::fractions(m, &self.profiles)
    }
}

/// Frequencies come from the config when it has them, else from
/// `mc_trials` Monte-Carlo draws.
pub fn analyze(
    program: Program,
    config: &Config,
    delta: f64,
    mc_trials: u64,
    seed: u64,
) -> Result<Analysis, PipelineError> {
    let spec = config.spec_for(&program)?;
    let complexities = program_complexities(&program)?;
    let (frequencies, source) = match config.frequency_override()? {
        Some(over) => {
            if let Some(p) = over.keys().find(|p| !complexities.contains_key(*p)) {
                return Err(PipelineError::UnknownPath(p.clone()));
            }
            let f = complexities.keys().map(|p| (p.clone(), over.get(p).copied().unwrap_or(0.0))).collect();
            (f, FrequencySource::Config)
        }
        None => {
            let est = estimate_frequencies(&program, &spec, mc_trials, seed)?;
            (est.frequencies, FrequencySource::MonteCarlo { trials: est.trials, errors: est.errors })
        }
    };
    let profiles = alloc::build_profiles(&complexities, &frequencies, delta)?;
    Ok(Analysis { program, spec, complexities, frequencies, source, profiles })
}

pub fn analyze_file(path: &Path, delta: f64, seed: u64) -> Result<Analysis, PipelineError> {
    let program = load_program(path)?;
    let cfg_path = sibling_config(path);
    let config = Config::from_json(&read_file(&cfg_path)?)?;
    analyze(program, &config, delta, DEFAULT_FEASIBILITY_TRIALS, seed)
}

/// Parses `N`, `N,M,...` or `LO..HI:xK` (K log-spaced points, rounded and
/// de-duplicated).
pub fn parse_budgets(s: &str) -> Result<Vec<u64>, PipelineError> {
    let bad = || PipelineError::Budgets(s.to_string());
    let mut out: Vec<u64> = if let Some((range, k)) = s.split_once(":x") {
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        if !(lo >= 1.0 && hi >= lo && k >= 1) {
            return Err(bad());
        }
        if k == 1 {
            vec![lo.round() as u64]
        } else {
            (0..k)
                .map(|i| {
                    let t = i as f64 / (k - 1) as f64;
                    (lo.ln() + t * (hi.ln() - lo.ln())).exp().round() as u64
                })
                .collect()
        }
    } else {
        s.split(',').map(|v| v.trim().parse::<u64>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    out.dedup();
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// Renders `x` with six significant digits in plain decimal notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub budgets: Vec<u64>,
    pub trials: usize,
    pub delta: f64,
    pub seed: u64,
    pub train: TrainConfig,
    pub test_points: usize,
    pub mc_trials: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            budgets: parse_budgets("10..1000:x10").expect("default budgets"),
            trials: 5,
            delta: 0.1,
            seed: 0,
            train: TrainConfig::default(),
            test_points: DEFAULT_TEST_POINTS,
            mc_trials: DEFAULT_FEASIBILITY_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub budget: u64,
    pub method: Method,
    pub trial: usize,
    pub predicted: f64,
    /// `Err` carries the failure message of this grid cell.
    pub empirical: Result<f64, String>,
    /// Error restricted to each path's test points; empty when the cell failed.
    pub per_path: BTreeMap<PathId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub baseline: Method,
    pub predicted: f64,
    /// `None` when some grid cell failed.
    pub empirical: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub benchmark: String,
    pub program_hash: String,
    pub options: ExperimentOptions,
    pub paths: Vec<(PathId, f64, f64)>,
    pub rows: Vec<ExperimentRow>,
    pub improvements: Vec<Improvement>,
}

fn geomean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x.ln(), n + 1));
    (sum / n as f64).exp()
}

impl ExperimentReport {
    /// Empirical error of one cell, if it succeeded.
    pub fn error(&self, budget: u64, method: Method, trial: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.budget == budget && r.method == method && r.trial == trial)
            .and_then(|r| r.empirical.clone().ok())
    }

    /// Geometric mean of the empirical error over trials at one budget.
    pub fn trial_geomean(&self, budget: u64, method: Method) -> Option<f64> {
        let errs: Option<Vec<f64>> = (0..self.options.trials).map(|t| self.error(budget, method, t)).collect();
        errs.map(geomean)
    }

    /// Geometric mean of one path's error over methods and trials at one budget.
    pub fn path_geomean(&self, budget: u64, path: &PathId) -> Option<f64> {
        let errs: Option<Vec<f64>> =
            self.rows.iter().filter(|r| r.budget == budget).map(|r| r.per_path.get(path).copied()).collect();
        errs.filter(|v| !v.is_empty()).map(geomean)
    }

    /// Geometric mean of the empirical error over all budgets and trials.
    pub fn overall_geomean(&self, method: Method) -> Option<f64> {
        let errs: Option<Vec<f64>> =
            self.rows.iter().filter(|r| r.method == method).map(|r| r.empirical.clone().ok()).collect();
        errs.map(geomean)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let o = &self.options;
        let _ = writeln!(s, "# benchmark: {}", self.benchmark);
        let _ = writeln!(s, "# program: {}", self.program_hash);
        let _ = writeln!(s, "# seed: {}", o.seed);
        let _ = writeln!(s, "# delta: {}", o.delta);
        let budgets: Vec<String> = o.budgets.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "# budgets: {}", budgets.join(" "));
        let _ = writeln!(s, "# trials: {}", o.trials);
        let _ = writeln!(
            s,
            "# training: width={} steps={} lr={} batch={} test_points={}",
            o.train.hidden, o.train.steps, o.train.lr, o.train.batch, o.test_points
        );
        let _ = writeln!(s, "# version: turaco {}", env!("CARGO_PKG_VERSION"));
        s.push_str("path,complexity,frequency\n");
        for (p, z, f) in &self.paths {
            let _ = writeln!(s, "{},{},{}", p, sig6(*z), sig6(*f));
        }
        s.push('\n');
        s.push_str("benchmark,budget,method,trial,predicted_error,empirical_error,status\n");
        for r in &self.rows {
            let (e, status) = match &r.empirical {
                Ok(e) => (sig6(*e), "ok".to_string()),
                Err(msg) => ("nan".to_string(), format!("failed: {}", msg.replace(',', ";"))),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.benchmark,
                r.budget,
                r.method,
                r.trial,
                sig6(r.predicted),
                e,
                status
            );
        }
        s.push('\n');
        s.push_str("budget,method,trial,path,empirical_error\n");
        for r in &self.rows {
            for (p, e) in &r.per_path {
                let _ = writeln!(s, "{},{},{},{},{}", r.budget, r.method, r.trial, p, sig6(*e));
            }
        }
        s.push('\n');
        s.push_str("baseline,predicted_improvement_pct,empirical_improvement_pct\n");
        for imp in &self.improvements {
            let emp = imp.empirical.map_or("nan".to_string(), sig6);
            let _ = writeln!(s, "{},{},{}", imp.baseline, sig6(imp.predicted), emp);
        }
        s.push('\n');
        s.push_str("method,geomean_empirical_error\n");
        for m in Method::ALL {
            let g = self.overall_geomean(m).map_or("nan".to_string(), sig6);
            let _ = writeln!(s, "{m},{g}");
        }
        s
    }
}

fn output_arity(p: &Program, spec: &InputSpec, seed: u64) -> Result<usize, PipelineError> {
    let mut rng = stream_rng(seed, "arity", 0);
    for _ in 0..10_000 {
        if let Ok((y, _)) = run_flat(p, &spec.sample(&mut rng)) {
            return Ok(y.len());
        }
    }
    Err(PipelineError::NoValidInput)
}

fn run_cell(
    a: &Analysis,
    method: Method,
    budget: u64,
    trial: usize,
    opts: &ExperimentOptions,
    out_arity: usize,
) -> Result<(f64, BTreeMap<PathId, f64>), PipelineError> {
    let plan = alloc::allocate(method, &a.profiles, budget)?;
    // Common random numbers: within a trial every method and budget reads the
    // same per-path sample streams (so smaller datasets are prefixes of larger
    // ones) and starts from the same initial networks. Only the allocation
    // differs between cells of one trial.
    let data_seed = stream_seed(opts.seed, "data", trial as u64);
    let dataset = build_dataset(&a.program, &a.spec, &plan, data_seed)?;
    let cfg = TrainConfig { seed: stream_seed(opts.seed, "train", trial as u64), ..opts.train.clone() };
    let ss = train_stratified(&a.program, &a.feasible(), &dataset.by_path(), out_arity, &cfg)?;
    // Shared test draws per trial, so methods and budgets are compared on the same points.
    let test_seed = stream_seed(opts.seed, "test", trial as u64);
    Ok(stratified_evaluate_by_path(&ss, &a.spec, opts.test_points, test_seed)?)
}

fn stream_seed(seed: u64, tag: &str, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, tag, index).next_u64()
}

/// Runs the budget × method × trial grid.
pub fn run_experiment(benchmark: &str, a: &Analysis, opts: &ExperimentOptions) -> Result<ExperimentReport, PipelineError> {
    let fractions: BTreeMap<Method, BTreeMap<PathId, f64>> =
        Method::ALL.iter().map(|m| Ok((*m, a.fractions(*m)?))).collect::<Result<_, AllocError>>()?;
    let out_arity = output_arity(&a.program, &a.spec, opts.seed)?;

    let mut grid = Vec::new();
    for &budget in &opts.budgets {
        for m in Method::ALL {
            for trial in 0..opts.trials {
                grid.push((budget, m, trial));
            }
        }
    }
    let rows: Vec<ExperimentRow> = grid
        .par_iter()
        .map(|&(budget, method, trial)| {
            let predicted = alloc::expected_predicted_error(&a.profiles, &fractions[&method], budget as f64)?;
            let (empirical, per_path) = match run_cell(a, method, budget, trial, opts, out_arity) {
                Ok((e, pp)) => (Ok(e), pp),
                Err(e) => (Err(e.to_string()), BTreeMap::new()),
            };
            Ok(ExperimentRow { budget, method, trial, predicted, empirical, per_path })
        })
        .collect::<Result<_, PipelineError>>()?;

    let budgets_f: Vec<f64> = opts.budgets.iter().map(|b| *b as f64).collect();
    let mut report = ExperimentReport {
        benchmark: benchmark.to_string(),
        program_hash: program_hash(&a.program),
        options: opts.clone(),
        paths: a.feasible().into_iter().map(|p| (p.clone(), a.complexities[&p], a.frequencies[&p])).collect(),
        rows,
        improvements: Vec::new(),
    };
    for baseline in [Method::Frequency, Method::Uniform] {
        let predicted = alloc::predicted_improvement(
            &a.profiles,
            &fractions[&Method::Complexity],
            &fractions[&baseline],
            &budgets_f,
        )?;
        let empirical = opts
            .budgets
            .iter()
            .map(|&b| {
                let ours = report.trial_geomean(b, Method::Complexity)?;
                let base = report.trial_geomean(b, baseline)?;
                Some(100.0 * (base - ours) / base)
            })
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        report.improvements.push(Improvement { baseline, predicted, empirical });
    }
    Ok(report)
}

/// Statistic tables for the bundled benchmarks: per-path complexities and
/// distributions, and predicted improvements.
pub fn repro_tables(corpus: &Path, delta: f64, seed: u64) -> Result<(String, String), PipelineError> {
    let mut stats = String::from("benchmark,path,complexity,frequency_pct,uniform_pct,complexity_pct\n");
    let mut improvements = String::from("benchmark,paths,vs_frequency_pct,vs_uniform_pct\n");
    for name in TABLE_BENCHMARKS {
        let a = analyze_file(&corpus.join(format!("{name}.turaco")), delta, seed)?;
        let ours = a.fractions(Method::Complexity)?;
        let freq = a.fractions(Method::Frequency)?;
        let uni = a.fractions(Method::Uniform)?;
        for p in a.feasible() {
            let _ = writeln!(
                stats,
                "{name},{p},{},{},{},{}",
                sig6(a.complexities[&p]),
                sig6(100.0 * freq[&p]),
                sig6(100.0 * uni[&p]),
                sig6(100.0 * ours[&p])
            );
        }
        let vs_f = alloc::predicted_improvement(&a.profiles, &ours, &freq, &[1.0])?;
        let vs_u = alloc::predicted_improvement(&a.profiles, &ours, &uni, &[1.0])?;
        let _ = writeln!(improvements, "{name},{},{},{}", a.feasible().len(), sig6(vs_f), sig6(vs_u));
    }
    Ok((stats, improvements))
}

pub fn program_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "program".to_string(), |s| s.to_string_lossy().into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_parsing() {
        assert_eq!(parse_budgets("10..1000:x10").unwrap(), vec![10, 17, 28, 46, 77, 129, 215, 359, 599, 1000]);
        assert_eq!(parse_budgets("100").unwrap(), vec![100]);
        assert_eq!(parse_budgets("10, 20").unwrap(), vec![10, 20]);
        assert_eq!(parse_budgets("1..3:x5").unwrap(), vec![1, 2, 3]);
        for bad in ["", "0", "x", "10..1:x3", "10..100:x0"] {
            assert!(parse_budgets(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(137677.94), "137678");
        assert_eq!(sig6(36.9412), "36.9412");
        assert_eq!(sig6(0.01), "0.0100000");
        assert_eq!(sig6(-2.5), "-2.50000");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn geomean_of_equal_values() {
        assert!((geomean([2.0, 2.0, 2.0]) - 2.0).abs() < 1e-15);
        assert!((geomean([1.0, 4.0]) - 2.0).abs() < 1e-15);
    }

    fn tiny_options(budgets: Vec<u64>) -> ExperimentOptions {
        ExperimentOptions {
            budgets,
            trials: 2,
            train: TrainConfig { hidden: 4, steps: 10, batch: 8, ..TrainConfig::default() },
            test_points: 50,
            ..ExperimentOptions::default()
        }
    }

    #[test]
    fn identical_allocations_give_identical_errors() {
        // one path: every method allocates everything to it
        let p = crate::parse_core("fun (x) { return x * x }").unwrap();
        let cfg = Config::from_json(r#"{"inputs": [{"name": "x", "low": -1, "high": 1}]}"#).unwrap();
        let a = analyze(p, &cfg, 0.1, 1000, 0).unwrap();
        let r = run_experiment("sq", &a, &tiny_options(vec![5, 9])).unwrap();
        assert_eq!(r.rows.len(), 2 * 3 * 2);
        for b in [5, 9] {
            for t in 0..2 {
                let c = r.error(b, Method::Complexity, t).unwrap();
                assert_eq!(r.error(b, Method::Frequency, t), Some(c));
                assert_eq!(r.error(b, Method::Uniform, t), Some(c));
            }
        }
        assert_ne!(r.error(5, Method::Complexity, 0), r.error(5, Method::Complexity, 1));
        assert_eq!(r.improvements.iter().map(|i| i.empirical).collect::<Vec<_>>(), vec![Some(0.0), Some(0.0)]);
    }
}
