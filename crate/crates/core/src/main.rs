use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use turaco::alloc::{self, AllocationPlan, Method};
use turaco::data::{build_dataset, Config, Dataset, InputSpec};
use turaco::experiment::{
    analyze, load_program, parse_budgets, program_name, read_file, repro_tables, run_experiment, sibling_config,
    sig6, ExperimentOptions, FrequencySource, PipelineError, DEFAULT_TEST_POINTS,
};
use turaco::interp::run_flat;
use turaco::paths::{collect_traces, feasible_paths, TraceStmt, DEFAULT_FEASIBILITY_TRIALS};
use turaco::surrogate::{stratified_evaluate, train_stratified, StratifiedSurrogate, TrainConfig};
use turaco::syntax::{expr_to_string, parse, pretty_print};
use turaco::tilde::program_complexities;

#[derive(Parser)]
#[command(name = "turaco", version, about = "Complexity analysis and complexity-guided sampling for loop-free programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a program and print it (desugared unless --surface).
    Parse {
        file: PathBuf,
        #[arg(long)]
        surface: bool,
    },
    /// Run a program on comma-separated flattened inputs.
    Run {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        input: String,
    },
    /// List paths with their traces; with a config, also Monte-Carlo hit counts.
    Paths {
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_FEASIBILITY_TRIALS)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-path complexity.
    Complexity { file: PathBuf },
    /// Split a sample budget across paths.
    Allocate {
        file: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        budget: u64,
        #[arg(long, value_enum, default_value_t = MethodArg::Complexity)]
        method: MethodArg,
    },
    /// Draw a labelled dataset following an allocation plan.
    Sample {
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one network per path of a dataset.
    Train {
        file: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean absolute error of a trained model on fresh draws.
    Eval {
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TEST_POINTS)]
        test_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Budget x method x trial comparison of sampling strategies.
    Experiment {
        file: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "10..1000:x10")]
        budgets: String,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = DEFAULT_TEST_POINTS)]
        test_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate the benchmark statistic and predicted-improvement tables.
    ReproTables {
        #[arg(long, default_value = "benchmarks")]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for stats.csv and improvements.csv; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalysisArgs {
    /// Input ranges (defaults to the program's sibling .json).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte-Carlo draws when the config has no frequencies.
    #[arg(long, default_value_t = DEFAULT_FEASIBILITY_TRIALS)]
    mc_trials: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig { hidden: self.width, steps: self.steps, lr: self.lr, batch: self.batch, seed, ..Default::default() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Complexity,
    Frequency,
    Uniform,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Complexity => Method::Complexity,
            MethodArg::Frequency => Method::Frequency,
            MethodArg::Uniform => Method::Uniform,
        }
    }
}

enum Failure {
    Domain(String),
    Usage(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Domain(e.to_string())
    }
}

macro_rules! domain {
    ($e:expr) => {
        $e.map_err(|e| Failure::Domain(e.to_string()))?
    };
}

fn load_config(file: &Path, config: &Option<PathBuf>) -> Result<Config, Failure> {
    let path = config.clone().unwrap_or_else(|| sibling_config(file));
    Ok(domain!(Config::from_json(&read_file(&path)?)))
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(p) => domain!(std::fs::write(p, text)),
        None => print!("{text}"),
    }
    Ok(())
}

fn spec_of(file: &Path, config: &Option<PathBuf>, p: &turaco::Program) -> Result<InputSpec, Failure> {
    Ok(domain!(load_config(file, config)?.spec_for(p)))
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Parse { file, surface } => {
            let src = read_file(&file)?;
            let p = if surface { domain!(parse(&src)) } else { load_program(&file)? };
            print!("{}", pretty_print(&p));
        }
        Command::Run { file, input } => {
            let p = load_program(&file)?;
            let xs = input
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Usage(format!("--input: {e}")))?;
            let (y, path) = domain!(run_flat(&p, &xs));
            let ys: Vec<String> = y.iter().map(|v| v.to_string()).collect();
            println!("path: {}", if path.is_empty() { "(none)" } else { path.as_str() });
            println!("output: {}", ys.join(","));
        }
        Command::Paths { file, config, trials, seed } => {
            let p = load_program(&file)?;
            let traces = domain!(collect_traces(&p));
            let hits = match &config {
                Some(_) => {
                    let spec = spec_of(&file, &config, &p)?;
                    Some(domain!(feasible_paths(&p, &spec, trials, seed)))
                }
                None => None,
            };
            for (id, t) in &traces {
                let label = if id.is_empty() { "(none)" } else { id.as_str() };
                match &hits {
                    Some(h) => {
                        let n = h.hits[id];
                        println!("path {label}: {n} hits{}", if n == 0 { " (dormant)" } else { "" });
                    }
                    None => println!("path {label}:"),
                }
                for s in &t.body {
                    match s {
                        TraceStmt::Assign(l, e) => {
                            let target = match l {
                                turaco::syntax::LValue::Var(n) => n.clone(),
                                turaco::syntax::LValue::Index(n, k) => format!("{n}[{k}]"),
                            };
                            println!("  {target} = {}", expr_to_string(e));
                        }
                        TraceStmt::VectorDecl(n, k) => println!("  {n}[{k}]"),
                    }
                }
                let rets: Vec<String> = t.returns.iter().map(expr_to_string).collect();
                println!("  return {}", rets.join(", "));
            }
            if let Some(h) = hits {
                if h.errors > 0 {
                    eprintln!("warning: {} of {} draws failed in the interpreter", h.errors, h.trials);
                }
            }
        }
        Command::Complexity { file } => {
            let p = load_program(&file)?;
            let z = domain!(program_complexities(&p));
            println!("path_id,complexity");
            for (k, v) in z {
                println!("{k},{}", sig6(v));
            }
        }
        Command::Allocate { file, analysis, budget, method } => {
            let a = analysis_of(&file, &analysis)?;
            let plan = domain!(alloc::allocate(method.into(), &a.profiles, budget));
            print!("{}", plan.to_csv());
        }
        Command::Sample { file, config, plan, seed, out } => {
            let p = load_program(&file)?;
            let spec = spec_of(&file, &config, &p)?;
            let plan = AllocationPlan::from_csv(&read_file(&plan)?).map_err(Failure::Domain)?;
            let d = domain!(build_dataset(&p, &spec, &plan, seed));
            emit(&d.to_csv(), &out)?;
        }
        Command::Train { file, data, train, seed, out } => {
            let p = load_program(&file)?;
            let d = domain!(Dataset::from_csv(&read_file(&data)?));
            let groups = d.by_path();
            let paths: Vec<_> = groups.keys().cloned().collect();
            let ss = domain!(train_stratified(&p, &paths, &groups, d.output_arity, &train.config(seed)));
            emit(&ss.to_json(), &out)?;
        }
        Command::Eval { file, config, model, test_points, seed } => {
            let p = load_program(&file)?;
            let spec = spec_of(&file, &config, &p)?;
            let ss = domain!(StratifiedSurrogate::from_json(p, &read_file(&model)?));
            let e = domain!(stratified_evaluate(&ss, &spec, test_points, seed));
            println!("mean_absolute_error,{e}");
        }
        Command::Experiment { file, analysis, budgets, trials, train, test_points, out } => {
            let budgets = parse_budgets(&budgets).map_err(|e| Failure::Usage(e.to_string()))?;
            let a = analysis_of(&file, &analysis)?;
            let opts = ExperimentOptions {
                budgets,
                trials,
                delta: analysis.delta,
                seed: analysis.seed,
                train: train.config(analysis.seed),
                test_points,
                mc_trials: analysis.mc_trials,
            };
            let report = run_experiment(&program_name(&file), &a, &opts)?;
            emit(&report.to_csv(), &out)?;
        }
        Command::ReproTables { corpus, delta, seed, out } => {
            let (stats, improvements) = repro_tables(&corpus, delta, seed)?;
            match out {
                Some(dir) => {
                    domain!(std::fs::create_dir_all(&dir));
                    domain!(std::fs::write(dir.join("stats.csv"), stats));
                    domain!(std::fs::write(dir.join("improvements.csv"), improvements));
                }
                None => print!("{stats}\n{improvements}"),
            }
        }
    }
    Ok(())
}

fn analysis_of(file: &Path, args: &AnalysisArgs) -> Result<turaco::experiment::Analysis, Failure> {
    let p = load_program(file)?;
    let config = load_config(file, &args.config)?;
    let a = analyze(p, &config, args.delta, args.mc_trials, args.seed)?;
    if let FrequencySource::MonteCarlo { errors, trials } = a.source {
        if errors > 0 {
            eprintln!("warning: {errors} of {trials} draws failed in the interpreter");
        }
    }
    let dormant: BTreeMap<_, _> = a.frequencies.iter().filter(|(_, f)| **f == 0.0).collect();
    for path in dormant.keys() {
        eprintln!("note: path {path} is dormant and receives no samples");
    }
    Ok(a)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
