//! One-hidden-layer ReLU networks trained per path, and the stratified
//! surrogate that picks a network by running the program's branches.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{InputSpec, Record};
use crate::interp::{run_flat, EvalError};
use crate::rng::stream_rng;
use crate::syntax::{PathId, Program};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("expected {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,
    #[error("no surrogate for path `{0}`")]
    Dispatch(PathId),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network `W2 · relu(W1 · x + b1) + b2`. Parameters live in one flat vector
/// laid out as `[W1 (hidden × input), b1, W2 (output × hidden), b2]`, all
/// row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct MlpParams {
    input: usize,
    hidden: usize,
    output: usize,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    input: usize,
    hidden: usize,
    output: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl From<MlpParams> for ModelFile {
    fn from(p: MlpParams) -> Self {
        ModelFile {
            input: p.input,
            hidden: p.hidden,
            output: p.output,
            w1: p.w1().to_vec(),
            b1: p.b1().to_vec(),
            w2: p.w2().to_vec(),
            b2: p.b2().to_vec(),
        }
    }
}

impl TryFrom<ModelFile> for MlpParams {
    type Error = String;

    fn try_from(m: ModelFile) -> Result<Self, String> {
        let (i, h, o) = (m.input, m.hidden, m.output);
        if m.w1.len() != h * i || m.b1.len() != h || m.w2.len() != o * h || m.b2.len() != o {
            return Err(format!("weight shapes do not match dims {i}-{h}-{o}"));
        }
        let mut theta = m.w1;
        theta.extend(m.b1);
        theta.extend(m.w2);
        theta.extend(m.b2);
        Ok(MlpParams { input: i, hidden: h, output: o, theta })
    }
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let n = hidden * input + hidden + output * hidden + output;
        MlpParams { input, hidden, output, theta: vec![0.0; n] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.input, self.hidden, self.output)
    }

    fn offsets(&self) -> [usize; 4] {
        let a = self.hidden * self.input;
        let b = a + self.hidden;
        let c = b + self.output * self.hidden;
        [a, b, c, c + self.output]
    }

    pub fn w1(&self) -> &[f64] {
        &self.theta[..self.offsets()[0]]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.theta[o[0]..o[1]]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.theta[o[1]..o[2]]
    }

    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.theta[o[2]..o[3]]
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Splits the flat vector into `(w1, b1, w2, b2)`.
    fn split(theta: &[f64], o: [usize; 4]) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = theta.split_at(o[0]);
        let (b1, rest) = rest.split_at(o[1] - o[0]);
        let (w2, b2) = rest.split_at(o[2] - o[1]);
        (w1, b1, w2, b2)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Glorot-uniform weights (per-layer bound `sqrt(6 / (fan_in + fan_out))`)
/// and zero biases.
pub fn init_params(input: usize, hidden: usize, output: usize, seed: u64) -> MlpParams {
    let mut p = MlpParams::zeros(input, hidden, output);
    let mut rng = stream_rng(seed, "init", 0);
    let o = p.offsets();
    let bound1 = (6.0 / (input + hidden) as f64).sqrt();
    for w in &mut p.theta[..o[0]] {
        *w = rng.gen_range(-bound1..=bound1);
    }
    let bound2 = (6.0 / (hidden + output) as f64).sqrt();
    for w in &mut p.theta[o[1]..o[2]] {
        *w = rng.gen_range(-bound2..=bound2);
    }
    p
}

/// Hidden pre-activations and outputs for one input.
fn forward_into(p: &MlpParams, x: &[f64], z: &mut [f64], y: &mut [f64]) {
    let (w1, b1, w2, b2) = MlpParams::split(&p.theta, p.offsets());
    for (j, zj) in z.iter_mut().enumerate() {
        let row = &w1[j * p.input..(j + 1) * p.input];
        *zj = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    for (k, yk) in y.iter_mut().enumerate() {
        let row = &w2[k * p.hidden..(k + 1) * p.hidden];
        *yk = b2[k] + row.iter().zip(z.iter()).map(|(w, v)| w * v.max(0.0)).sum::<f64>();
    }
}

pub fn forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
    if x.len() != p.input {
        return Err(SurrogateError::Arity { expected: p.input, got: x.len() });
    }
    let mut z = vec![0.0; p.hidden];
    let mut y = vec![0.0; p.output];
    forward_into(p, x, &mut z, &mut y);
    Ok(y)
}

/// Scratch buffers for gradient computation.
struct Workspace {
    z: Vec<f64>,
    y: Vec<f64>,
    dh: Vec<f64>,
    grad: Vec<f64>,
}

impl Workspace {
    fn new(p: &MlpParams) -> Self {
        Workspace { z: vec![0.0; p.hidden], y: vec![0.0; p.output], dh: vec![0.0; p.hidden], grad: vec![0.0; p.theta.len()] }
    }
}

/// Mean squared error over `batch` (indices into `xs`/`ys`) and all outputs;
/// the gradient is left in `ws.grad`.
fn loss_grad_into(p: &MlpParams, xs: &[&[f64]], ys: &[&[f64]], batch: &[usize], ws: &mut Workspace) -> f64 {
    let o = p.offsets();
    let (_, _, w2, _) = MlpParams::split(&p.theta, o);
    ws.grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / (batch.len() * p.output) as f64;
    let mut loss = 0.0;
    for &i in batch {
        let (x, t) = (xs[i], ys[i]);
        forward_into(p, x, &mut ws.z, &mut ws.y);
        let (gw1, rest) = ws.grad.split_at_mut(o[0]);
        let (gb1, rest) = rest.split_at_mut(o[1] - o[0]);
        let (gw2, gb2) = rest.split_at_mut(o[2] - o[1]);
        ws.dh.iter_mut().for_each(|d| *d = 0.0);
        for k in 0..p.output {
            let err = ws.y[k] - t[k];
            loss += err * err;
            let dy = 2.0 * err * scale;
            gb2[k] += dy;
            let row = &w2[k * p.hidden..(k + 1) * p.hidden];
            let grow = &mut gw2[k * p.hidden..(k + 1) * p.hidden];
            for j in 0..p.hidden {
                let zj = ws.z[j];
                if zj > 0.0 {
                    grow[j] += dy * zj;
                    ws.dh[j] += dy * row[j];
                }
            }
        }
        for j in 0..p.hidden {
            let d = ws.dh[j];
            if d != 0.0 {
                gb1[j] += d;
                let grow = &mut gw1[j * p.input..(j + 1) * p.input];
                for (g, v) in grow.iter_mut().zip(x) {
                    *g += d * v;
                }
            }
        }
    }
    loss * scale
}

/// Mean squared error over all given examples and its gradient with respect
/// to the flat parameter vector.
pub fn loss_and_grad(p: &MlpParams, xs: &[&[f64]], ys: &[&[f64]]) -> (f64, Vec<f64>) {
    let mut ws = Workspace::new(p);
    let all: Vec<usize> = (0..xs.len()).collect();
    let loss = loss_grad_into(p, xs, ys, &all, &mut ws);
    (loss, ws.grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { hidden: 256, lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, batch: 128, steps: 2000, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let ok = self.hidden > 0
            && self.batch > 0
            && self.steps > 0
            && self.lr > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(SurrogateError::Config(format!("{self:?}")))
        }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr, beta1, beta2, eps }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((w, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Trained network with its per-step minibatch losses.
#[derive(Debug, Clone)]
pub struct Trained {
    pub params: MlpParams,
    pub losses: Vec<f64>,
}

/// Minimizes MSE with Adam on minibatches drawn with replacement.
pub fn train(records: &[&Record], cfg: &TrainConfig) -> Result<Trained, SurrogateError> {
    cfg.validate()?;
    let first = records.first().ok_or(SurrogateError::EmptyDataset)?;
    let (input, output) = (first.inputs.len(), first.outputs.len());
    let xs: Vec<&[f64]> = records.iter().map(|r| r.inputs.as_slice()).collect();
    let ys: Vec<&[f64]> = records.iter().map(|r| r.outputs.as_slice()).collect();
    if let Some(r) = records.iter().find(|r| r.inputs.len() != input || r.outputs.len() != output) {
        return Err(SurrogateError::Arity { expected: input, got: r.inputs.len() });
    }
    let mut params = init_params(input, cfg.hidden, output, cfg.seed);
    let mut adam = Adam::new(params.theta.len(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut ws = Workspace::new(&params);
    let mut rng = stream_rng(cfg.seed, "batch", 0);
    let mut batch = vec![0; cfg.batch];
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        for b in batch.iter_mut() {
            *b = rng.gen_range(0..xs.len());
        }
        losses.push(loss_grad_into(&params, &xs, &ys, &batch, &mut ws));
        adam.step(&mut params.theta, &ws.grad);
    }
    Ok(Trained { params, losses })
}

/// Mean over records of the mean absolute error across outputs.
pub fn evaluate_error(p: &MlpParams, records: &[&Record]) -> Result<f64, SurrogateError> {
    if records.is_empty() {
        return Err(SurrogateError::EmptyTestSet);
    }
    let mut total = 0.0;
    for r in records {
        let y = forward(p, &r.inputs)?;
        total += mae(&y, &r.outputs);
    }
    Ok(total / records.len() as f64)
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// One network per feasible path, dispatched through the program's branches.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedSurrogate {
    pub program: Program,
    pub models: BTreeMap<PathId, MlpParams>,
}

#[derive(Serialize, Deserialize)]
struct StratifiedFile {
    models: BTreeMap<String, MlpParams>,
}

impl StratifiedSurrogate {
    pub fn to_json(&self) -> String {
        let file = StratifiedFile { models: self.models.iter().map(|(k, v)| (k.to_string(), v.clone())).collect() };
        serde_json::to_string_pretty(&file).expect("models serialize")
    }

    pub fn from_json(program: Program, text: &str) -> Result<Self, SurrogateError> {
        let file: StratifiedFile = serde_json::from_str(text)?;
        let models = file
            .models
            .into_iter()
            .map(|(k, v)| Ok((k.parse().map_err(|_| SurrogateError::Model(format!("bad path id `{k}`")))?, v)))
            .collect::<Result<_, SurrogateError>>()?;
        Ok(StratifiedSurrogate { program, models })
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        Ok(std::fs::write(path, self.to_json())?)
    }
}

/// Trains one network per path in `paths`. Paths without records keep an
/// untrained initialized network.
pub fn train_stratified(
    program: &Program,
    paths: &[PathId],
    records: &BTreeMap<PathId, Vec<&Record>>,
    output_arity: usize,
    cfg: &TrainConfig,
) -> Result<StratifiedSurrogate, SurrogateError> {
    let input = program.input_arity();
    let models = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let cfg = TrainConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
            let params = match records.get(path) {
                Some(rs) if !rs.is_empty() => train(rs, &cfg)?.params,
                _ => init_params(input, cfg.hidden, output_arity, cfg.seed),
            };
            Ok((path.clone(), params))
        })
        .collect::<Result<_, SurrogateError>>()?;
    Ok(StratifiedSurrogate { program: program.clone(), models })
}

pub fn stratified_predict(ss: &StratifiedSurrogate, x: &[f64]) -> Result<(Vec<f64>, PathId), SurrogateError> {
    let (_, path) = run_flat(&ss.program, x)?;
    let model = ss.models.get(&path).ok_or_else(|| SurrogateError::Dispatch(path.clone()))?;
    Ok((forward(model, x)?, path))
}

/// Mean absolute error of `predict` against the interpreter on `m` fresh
/// draws. Draws the interpreter rejects are redrawn.
pub fn evaluate_against_program(
    program: &Program,
    spec: &InputSpec,
    m: usize,
    seed: u64,
    predict: impl FnMut(&[f64], &PathId) -> Result<Vec<f64>, SurrogateError>,
) -> Result<f64, SurrogateError> {
    Ok(evaluate_by_path(program, spec, m, seed, predict)?.0)
}

/// Overall MAE plus the MAE restricted to each path that the test draw hit.
pub fn evaluate_by_path(
    program: &Program,
    spec: &InputSpec,
    m: usize,
    seed: u64,
    mut predict: impl FnMut(&[f64], &PathId) -> Result<Vec<f64>, SurrogateError>,
) -> Result<(f64, BTreeMap<PathId, f64>), SurrogateError> {
    if m == 0 {
        return Err(SurrogateError::EmptyTestSet);
    }
    let mut rng = stream_rng(seed, "test", 0);
    let mut x = vec![0.0; spec.arity()];
    let mut total = 0.0;
    let mut by_path: BTreeMap<PathId, (f64, usize)> = BTreeMap::new();
    let mut done = 0;
    let mut failures = 0u64;
    while done < m {
        spec.fill(&mut rng, &mut x);
        let (y, path) = match run_flat(program, &x) {
            Ok(v) => v,
            Err(e) => {
                failures += 1;
                if failures > 1_000_000 {
                    return Err(e.into());
                }
                continue;
            }
        };
        let err = mae(&predict(&x, &path)?, &y);
        total += err;
        let slot = by_path.entry(path).or_insert((0.0, 0));
        slot.0 += err;
        slot.1 += 1;
        done += 1;
    }
    let per_path = by_path.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect();
    Ok((total / m as f64, per_path))
}

pub fn stratified_evaluate(ss: &StratifiedSurrogate, spec: &InputSpec, m: usize, seed: u64) -> Result<f64, SurrogateError> {
    Ok(stratified_evaluate_by_path(ss, spec, m, seed)?.0)
}

pub fn stratified_evaluate_by_path(
    ss: &StratifiedSurrogate,
    spec: &InputSpec,
    m: usize,
    seed: u64,
) -> Result<(f64, BTreeMap<PathId, f64>), SurrogateError> {
    evaluate_by_path(&ss.program, spec, m, seed, |x, path| {
        let model = ss.models.get(path).ok_or_else(|| SurrogateError::Dispatch(path.clone()))?;
        forward(model, x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InputRange;
    use crate::syntax::parse_core;

    fn rec(x: &[f64], y: &[f64]) -> Record {
        Record { path: PathId::empty(), inputs: x.to_vec(), outputs: y.to_vec() }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_params(2, 4, 1, 9);
        assert_eq!(a, init_params(2, 4, 1, 9));
        assert_ne!(a, init_params(2, 4, 1, 0));
        assert!(a.w1().iter().all(|w| w.abs() <= 1.0));
        assert!(a.w2().iter().all(|w| w.abs() <= (6.0f64 / 5.0).sqrt()));
        assert!(a.b1().iter().chain(a.b2()).all(|b| *b == 0.0));
    }

    #[test]
    fn forward_by_hand() {
        let mut p = MlpParams::zeros(2, 2, 1);
        let b2 = p.offsets()[2];
        p.theta_mut()[b2] = 0.25;
        assert_eq!(forward(&p, &[3.0, 4.0]).unwrap(), vec![0.25]);

        // z = [1*1 + 2*2 + 0.5, -1*1 + 0*2 - 1] = [5.5, -2]; y = 2*5.5 + 3*0 + 1
        let p = MlpParams { input: 2, hidden: 2, output: 1, theta: vec![1.0, 2.0, -1.0, 0.0, 0.5, -1.0, 2.0, 3.0, 1.0] };
        assert_eq!(forward(&p, &[1.0, 2.0]).unwrap(), vec![12.0]);
        assert!(matches!(forward(&p, &[1.0]), Err(SurrogateError::Arity { expected: 2, got: 1 })));
    }

    #[test]
    fn adam_first_step() {
        let mut w = [0.0];
        let mut adam = Adam::new(1, 0.001, 0.9, 0.999, 1e-8);
        adam.step(&mut w, &[1.0]);
        assert!((w[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn constant_target_is_learned() {
        let data: Vec<Record> = (0..50).map(|i| rec(&[i as f64 / 50.0, 0.3], &[0.7])).collect();
        let refs: Vec<&Record> = data.iter().collect();
        let cfg = TrainConfig { hidden: 16, lr: 1e-2, ..Default::default() };
        let t = train(&refs, &cfg).unwrap();
        assert!(evaluate_error(&t.params, &refs).unwrap() < 1e-3);
        assert!(matches!(train(&[], &cfg), Err(SurrogateError::EmptyDataset)));
    }

    #[test]
    fn mae_examples() {
        let p = MlpParams::zeros(1, 2, 2);
        let ones = [rec(&[0.3], &[1.0, 1.0])];
        let refs: Vec<&Record> = ones.iter().collect();
        assert_eq!(evaluate_error(&p, &refs).unwrap(), 1.0);
        let halves = [rec(&[0.3], &[0.5, -0.5])];
        assert_eq!(evaluate_error(&p, &halves.iter().collect::<Vec<_>>()).unwrap(), 0.5);
        assert!(matches!(evaluate_error(&p, &[]), Err(SurrogateError::EmptyTestSet)));
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Record> = (0..20).map(|i| rec(&[i as f64 / 20.0], &[(i as f64).sin()])).collect();
        let refs: Vec<&Record> = data.iter().collect();
        let cfg = TrainConfig { hidden: 8, steps: 50, ..Default::default() };
        assert_eq!(train(&refs, &cfg).unwrap().params, train(&refs, &cfg).unwrap().params);
    }

    #[test]
    fn json_round_trip() {
        let p = init_params(3, 5, 2, 1);
        assert_eq!(MlpParams::from_json(&p.to_json()).unwrap(), p);
        assert!(MlpParams::from_json(r#"{"input":1,"hidden":1,"output":1,"w1":[],"b1":[0],"w2":[0],"b2":[0]}"#).is_err());
    }

    fn luminance() -> (Program, InputSpec) {
        let p = parse_core(
            "fun (sunPosition, emission) {
                if (sunPosition < 0) { ambient = 0; } else { ambient = sunPosition; }
                if (sunPosition < 0.1) { emission *= 0.1; } else { emission *= sunPosition; }
                return ambient + emission }",
        )
        .unwrap();
        let r = |n: &str| InputRange { name: n.into(), low: -1.0, high: 1.0, dim: 1 };
        let spec = InputSpec::new(vec![r("sunPosition"), r("emission")]).unwrap();
        (p, spec)
    }

    #[test]
    fn dispatch_follows_program() {
        let (p, _) = luminance();
        let models = ["ll", "rl", "rr"].iter().map(|k| (k.parse().unwrap(), init_params(2, 4, 1, 0))).collect();
        let ss = StratifiedSurrogate { program: p, models };
        assert_eq!(stratified_predict(&ss, &[0.5, 0.5]).unwrap().1.as_str(), "rr");
        assert_eq!(stratified_predict(&ss, &[-0.3, 1.0]).unwrap().1.as_str(), "ll");
        let mut missing = ss.clone();
        missing.models.remove(&"rr".parse().unwrap());
        assert!(matches!(stratified_predict(&missing, &[0.5, 0.5]), Err(SurrogateError::Dispatch(_))));
    }

    #[test]
    fn oracle_predictor_has_zero_error() {
        let (p, spec) = luminance();
        let e = evaluate_against_program(&p, &spec, 500, 3, |x, _| Ok(run_flat(&p, x)?.0)).unwrap();
        assert_eq!(e, 0.0);
    }
}
