//! Input-space configuration, per-path rejection sampling and datasets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alloc::AllocationPlan;
use crate::interp::{run_flat, EvalError};
use crate::paths::{feasible_paths, PathError};
use crate::rng::stream_rng;
use crate::syntax::{pretty_print, PathId, Program};

/// Attempts allowed per requested record before a stratum is declared too rare.
pub const DEFAULT_REJECTIONS_PER_RECORD: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("input `{name}`: need finite low < high, got [{low}, {high}]")]
    InvalidRange { name: String, low: f64, high: f64 },
    #[error("input `{0}` has dimension 0")]
    ZeroDimension(String),
    #[error("config does not match program inputs: {0}")]
    InputMismatch(String),
    #[error("path `{path}` not hit in {attempts} attempts")]
    StratumTooRare { path: PathId, attempts: u64 },
    #[error("plan requests samples from dormant or unknown path `{0}`")]
    DormantPath(PathId),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("all {0} draws failed in the interpreter")]
    AllFailed(u64),
    #[error("invalid path id `{0}`")]
    BadPathId(String),
    #[error("malformed CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Path(#[from] PathError),
}

fn one() -> usize {
    1
}

/// Uniform range of one (possibly vector) input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    #[serde(default = "one")]
    pub dim: usize,
}

/// Uniform box over the flattened program inputs, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    ranges: Vec<InputRange>,
    arity: usize,
}

impl InputSpec {
    pub fn new(ranges: Vec<InputRange>) -> Result<Self, DataError> {
        for r in &ranges {
            if !(r.low.is_finite() && r.high.is_finite() && r.low < r.high) {
                return Err(DataError::InvalidRange { name: r.name.clone(), low: r.low, high: r.high });
            }
            if r.dim == 0 {
                return Err(DataError::ZeroDimension(r.name.clone()));
            }
        }
        let arity = ranges.iter().map(|r| r.dim).sum();
        Ok(InputSpec { ranges, arity })
    }

    /// Orders `ranges` to match the inputs of `p` and checks dimensions.
    pub fn for_program(p: &Program, ranges: &[InputRange]) -> Result<Self, DataError> {
        if ranges.len() != p.inputs.len() {
            return Err(DataError::InputMismatch(format!(
                "program has {} inputs, config has {}",
                p.inputs.len(),
                ranges.len()
            )));
        }
        let mut ordered = Vec::with_capacity(ranges.len());
        for input in &p.inputs {
            let r = ranges
                .iter()
                .find(|r| r.name == input.name)
                .ok_or_else(|| DataError::InputMismatch(format!("no range for `{}`", input.name)))?;
            if r.dim != input.dim {
                return Err(DataError::InputMismatch(format!(
                    "`{}` has dimension {} in the program and {} in the config",
                    input.name, input.dim, r.dim
                )));
            }
            ordered.push(r.clone());
        }
        InputSpec::new(ordered)
    }

    pub fn ranges(&self) -> &[InputRange] {
        &self.ranges
    }

    /// Number of flattened scalar components.
    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Column names `x_<name>` or `x_<name>_<idx>` of the flattened inputs.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.arity);
        for r in &self.ranges {
            if r.dim == 1 {
                out.push(format!("x_{}", r.name));
            } else {
                out.extend((0..r.dim).map(|i| format!("x_{}_{i}", r.name)));
            }
        }
        out
    }

    /// Writes one independent uniform draw per component into `out`.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.arity);
        let mut i = 0;
        for r in &self.ranges {
            for _ in 0..r.dim {
                out[i] = r.low + (r.high - r.low) * rng.gen::<f64>();
                i += 1;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = vec![0.0; self.arity];
        self.fill(rng, &mut x);
        x
    }
}

/// Contents of a benchmark config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub inputs: Vec<InputRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<BTreeMap<String, f64>>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Config::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn spec_for(&self, p: &Program) -> Result<InputSpec, DataError> {
        InputSpec::for_program(p, &self.inputs)
    }

    /// Frequency override keyed by path, if the config has one.
    pub fn frequency_override(&self) -> Result<Option<BTreeMap<PathId, f64>>, DataError> {
        let Some(f) = &self.frequencies else { return Ok(None) };
        f.iter()
            .map(|(k, v)| Ok((k.parse().map_err(|_| DataError::BadPathId(k.clone()))?, *v)))
            .collect::<Result<_, _>>()
            .map(Some)
    }
}

pub fn sample_input<R: Rng + ?Sized>(spec: &InputSpec, rng: &mut R) -> Vec<f64> {
    spec.sample(rng)
}

/// Monte-Carlo path frequencies, normalized over successful draws.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimate {
    /// Every syntactic path; dormant paths map to zero.
    pub frequencies: BTreeMap<PathId, f64>,
    pub hits: BTreeMap<PathId, u64>,
    /// Draws on which the interpreter failed; excluded from the frequencies.
    pub errors: u64,
    pub trials: u64,
}

pub fn estimate_frequencies(
    p: &Program,
    spec: &InputSpec,
    trials: u64,
    seed: u64,
) -> Result<FrequencyEstimate, DataError> {
    if trials == 0 {
        return Err(DataError::NoTrials);
    }
    let feas = feasible_paths(p, spec, trials, seed)?;
    let ok = trials - feas.errors;
    if ok == 0 {
        return Err(DataError::AllFailed(trials));
    }
    let frequencies = feas.hits.iter().map(|(k, n)| (k.clone(), *n as f64 / ok as f64)).collect();
    Ok(FrequencyEstimate { frequencies, hits: feas.hits, errors: feas.errors, trials })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub path: PathId,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

/// Draws `k` inputs whose execution follows `path`, labelled by the interpreter.
pub fn sample_stratum<R: Rng + ?Sized>(
    p: &Program,
    spec: &InputSpec,
    path: &PathId,
    k: usize,
    rng: &mut R,
    max_attempts: u64,
) -> Result<Vec<Record>, DataError> {
    let mut out = Vec::with_capacity(k);
    let mut attempts = 0;
    let mut x = vec![0.0; spec.arity()];
    while out.len() < k {
        if attempts == max_attempts {
            return Err(DataError::StratumTooRare { path: path.clone(), attempts });
        }
        attempts += 1;
        spec.fill(rng, &mut x);
        // Draws outside the interpreter's domain are rejected like any other miss.
        if let Ok((y, hit)) = run_flat(p, &x) {
            if &hit == path {
                out.push(Record { path: hit, inputs: x.clone(), outputs: y });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub input_names: Vec<String>,
    pub output_arity: usize,
    pub records: Vec<Record>,
    /// `(key, value)` pairs written as leading `#` comments.
    pub provenance: Vec<(String, String)>,
}

/// Short SHA-256 of the program's canonical text.
pub fn program_hash(p: &Program) -> String {
    let digest = Sha256::digest(pretty_print(p).as_bytes());
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Samples every path of `plan` with its integer count. Strata are drawn in
/// parallel from independent streams and concatenated in path order.
pub fn build_dataset(
    p: &Program,
    spec: &InputSpec,
    plan: &AllocationPlan,
    seed: u64,
) -> Result<Dataset, DataError> {
    for (path, &count) in &plan.counts {
        if count > 0 && plan.fractions.get(path).is_none_or(|f| *f <= 0.0) {
            return Err(DataError::DormantPath(path.clone()));
        }
    }
    let strata: Vec<(&PathId, u64)> = plan.counts.iter().filter(|(_, c)| **c > 0).map(|(p, c)| (p, *c)).collect();
    let parts = strata
        .par_iter()
        .map(|(path, count)| {
            let mut rng = stream_rng(seed, &format!("stratum:{path}"), 0);
            let k = *count as usize;
            sample_stratum(p, spec, path, k, &mut rng, DEFAULT_REJECTIONS_PER_RECORD.saturating_mul(*count))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let records: Vec<Record> = parts.into_iter().flatten().collect();
    let output_arity = records.first().map_or(0, |r| r.outputs.len());
    Ok(Dataset {
        input_names: spec.column_names(),
        output_arity,
        records,
        provenance: vec![("program".into(), program_hash(p)), ("seed".into(), seed.to_string())],
    })
}

impl Dataset {
    pub fn by_path(&self) -> BTreeMap<PathId, Vec<&Record>> {
        let mut out: BTreeMap<PathId, Vec<&Record>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.path.clone()).or_default().push(r);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.provenance {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str("path_id");
        for n in &self.input_names {
            let _ = write!(s, ",{n}");
        }
        for k in 0..self.output_arity {
            let _ = write!(s, ",y_{k}");
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(r.path.as_str());
            for v in r.inputs.iter().chain(&r.outputs) {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, DataError> {
        let mut provenance = Vec::new();
        let mut header: Option<(Vec<String>, usize)> = None;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |msg: String| DataError::Csv { line: i + 1, msg };
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.split_once(':') {
                    provenance.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some((names, outs)) = &header else {
                if cols.first() != Some(&"path_id") {
                    return Err(bad("expected header starting with path_id".into()));
                }
                let names: Vec<String> =
                    cols[1..].iter().take_while(|c| c.starts_with("x_")).map(|c| c.to_string()).collect();
                let outs = cols.len() - 1 - names.len();
                if cols[1 + names.len()..].iter().any(|c| !c.starts_with("y_")) {
                    return Err(bad("columns must be x_* followed by y_*".into()));
                }
                header = Some((names, outs));
                continue;
            };
            if cols.len() != 1 + names.len() + outs {
                return Err(bad(format!("expected {} columns, got {}", 1 + names.len() + outs, cols.len())));
            }
            let path = cols[0].parse().map_err(|_| bad(format!("bad path id `{}`", cols[0])))?;
            let vals = cols[1..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| bad(format!("`{c}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let (inputs, outputs) = vals.split_at(names.len());
            records.push(Record { path, inputs: inputs.to_vec(), outputs: outputs.to_vec() });
        }
        let (input_names, output_arity) = header.ok_or(DataError::Csv { line: 0, msg: "missing header".into() })?;
        Ok(Dataset { input_names, output_arity, records, provenance })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{optimal_allocation, PathProfile};
    use crate::rng::stream_rng;
    use crate::syntax::parse_core;

    const LUMINANCE: &str = "fun (sunPosition, emission) {
        if (sunPosition < 0) { ambient = 0; } else { ambient = sunPosition; }
        if (sunPosition < 0.1) { emission *= 0.1; } else { emission *= sunPosition; }
        return ambient + emission }";

    fn lum() -> (Program, InputSpec) {
        let p = parse_core(LUMINANCE).unwrap();
        let r = |n: &str| InputRange { name: n.into(), low: -1.0, high: 1.0, dim: 1 };
        let spec = InputSpec::for_program(&p, &[r("emission"), r("sunPosition")]).unwrap();
        (p, spec)
    }

    #[test]
    fn spec_validation() {
        let bad = InputRange { name: "x".into(), low: 1.0, high: 0.0, dim: 1 };
        assert!(matches!(InputSpec::new(vec![bad]), Err(DataError::InvalidRange { .. })));
        let zero = InputRange { name: "x".into(), low: 0.0, high: 1.0, dim: 0 };
        assert!(matches!(InputSpec::new(vec![zero]), Err(DataError::ZeroDimension(_))));
        let p = parse_core("fun (v[2]) { return v }").unwrap();
        let r = InputRange { name: "v".into(), low: 0.0, high: 1.0, dim: 3 };
        assert!(matches!(InputSpec::for_program(&p, &[r]), Err(DataError::InputMismatch(_))));
    }

    #[test]
    fn spec_follows_program_order() {
        let (_, spec) = lum();
        assert_eq!(spec.column_names(), vec!["x_sunPosition", "x_emission"]);
        let p = parse_core("fun (a, v[2]) { return a }").unwrap();
        let rs = [
            InputRange { name: "v".into(), low: 0.0, high: 1.0, dim: 2 },
            InputRange { name: "a".into(), low: 0.0, high: 1.0, dim: 1 },
        ];
        let s = InputSpec::for_program(&p, &rs).unwrap();
        assert_eq!(s.column_names(), vec!["x_a", "x_v_0", "x_v_1"]);
    }

    #[test]
    fn sample_in_range_and_deterministic() {
        let spec = InputSpec::new(vec![InputRange { name: "x".into(), low: 0.0, high: 1.0, dim: 3 }]).unwrap();
        let a: Vec<_> = (0..100).map(|_| ()).scan(stream_rng(7, "t", 0), |r, _| Some(sample_input(&spec, r))).collect();
        let b: Vec<_> = (0..100).map(|_| ()).scan(stream_rng(7, "t", 0), |r, _| Some(sample_input(&spec, r))).collect();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn sample_means_centered() {
        let spec = InputSpec::new(vec![InputRange { name: "x".into(), low: -1.0, high: 1.0, dim: 2 }]).unwrap();
        let mut rng = stream_rng(1, "mean", 0);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let x = spec.sample(&mut rng);
            sum[0] += x[0];
            sum[1] += x[1];
        }
        let sigma = 1.0 / (3.0 * n as f64).sqrt();
        for s in sum {
            assert!((s / n as f64).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn luminance_frequencies() {
        let (p, spec) = lum();
        let est = estimate_frequencies(&p, &spec, 1_000_000, 3).unwrap();
        let n: f64 = 1e6;
        for (path, want) in [("ll", 0.5), ("lr", 0.0), ("rl", 0.05), ("rr", 0.45)] {
            let got = est.frequencies[&path.parse().unwrap()];
            let sigma = (want * (1.0 - want) / n).sqrt();
            assert!((got - want).abs() <= 3.0 * sigma, "{path}: {got}");
        }
        assert_eq!(est.hits.values().sum::<u64>(), est.trials);
        assert!((est.frequencies.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn branch_free_frequency() {
        let p = parse_core("fun (x) { return x * x }").unwrap();
        let spec = InputSpec::new(vec![InputRange { name: "x".into(), low: 0.0, high: 1.0, dim: 1 }]).unwrap();
        let est = estimate_frequencies(&p, &spec, 10, 0).unwrap();
        assert_eq!(est.frequencies, [(PathId::empty(), 1.0)].into());
    }

    #[test]
    fn stratum_sampling() {
        let (p, spec) = lum();
        let mut rng = stream_rng(0, "s", 0);
        let rr = sample_stratum(&p, &spec, &"rr".parse().unwrap(), 10, &mut rng, 1_000_000).unwrap();
        assert_eq!(rr.len(), 10);
        assert!(rr.iter().all(|r| r.inputs[0] > 0.1));
        assert!(sample_stratum(&p, &spec, &"rr".parse().unwrap(), 0, &mut rng, 10).unwrap().is_empty());
        let rare = sample_stratum(&p, &spec, &"lr".parse().unwrap(), 1, &mut rng, 1000);
        assert!(matches!(rare, Err(DataError::StratumTooRare { attempts: 1000, .. })));
    }

    fn plan_for(paths: &[(&str, f64)], n: u64) -> AllocationPlan {
        let profiles: Vec<_> = paths
            .iter()
            .map(|(p, f)| PathProfile { path: p.parse().unwrap(), complexity: 1.0, frequency: *f, delta_i: 0.05 })
            .collect();
        optimal_allocation(&profiles, n).unwrap()
    }

    #[test]
    fn dataset_counts_match_plan() {
        let (p, spec) = lum();
        let plan = plan_for(&[("ll", 0.5), ("rl", 0.05), ("rr", 0.45)], 1000);
        let d = build_dataset(&p, &spec, &plan, 11).unwrap();
        assert_eq!(d.records.len(), 1000);
        for (path, recs) in d.by_path() {
            assert_eq!(recs.len() as u64, plan.counts[&path]);
        }
        for r in &d.records {
            let (y, path) = run_flat(&p, &r.inputs).unwrap();
            assert_eq!((y, path), (r.outputs.clone(), r.path.clone()));
        }
        assert_eq!(build_dataset(&p, &spec, &plan, 11).unwrap(), d);
    }

    #[test]
    fn dormant_plan_rejected() {
        let (p, spec) = lum();
        let mut plan = plan_for(&[("ll", 0.5), ("rr", 0.5)], 10);
        plan.counts.insert("lr".parse().unwrap(), 3);
        assert!(matches!(build_dataset(&p, &spec, &plan, 0), Err(DataError::DormantPath(_))));
        let empty = AllocationPlan { fractions: BTreeMap::new(), counts: BTreeMap::new(), budget: 0 };
        assert!(build_dataset(&p, &spec, &empty, 0).unwrap().records.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let (p, spec) = lum();
        let plan = plan_for(&[("ll", 0.5), ("rr", 0.5)], 25);
        let d = build_dataset(&p, &spec, &plan, 5).unwrap();
        let text = d.to_csv();
        assert!(text.contains("path_id,x_sunPosition,x_emission,y_0\n"));
        assert_eq!(Dataset::from_csv(&text).unwrap(), d);
    }

    #[test]
    fn config_parsing() {
        let c = Config::from_json(r#"{"inputs":[{"name":"x","low":-1,"high":1}],"frequencies":{"l":0.5,"r":0.5}}"#)
            .unwrap();
        assert_eq!(c.inputs[0].dim, 1);
        let f = c.frequency_override().unwrap().unwrap();
        assert_eq!(f[&"l".parse().unwrap()], 0.5);
        let bad = Config::from_json(r#"{"inputs":[],"frequencies":{"q":1}}"#).unwrap();
        assert!(bad.frequency_override().is_err());
    }
}
