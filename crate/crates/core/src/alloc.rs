//! Predicted error and allocation of a sample budget across paths.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::syntax::PathId;

/// Tolerance on the sum of frequencies or fractions.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("cannot split delta across zero paths")]
    NoPaths,
    #[error("sample count must be positive, got {0}")]
    NonPositiveCount(f64),
    #[error("frequency of path `{path}` is {value}; expected a value in [0, 1]")]
    InvalidFrequency { path: PathId, value: f64 },
    #[error("frequencies sum to {0}, expected 1")]
    FrequencySum(f64),
    #[error("all path frequencies are zero")]
    AllZero,
    #[error("path `{0}` has positive frequency but receives no samples")]
    Unsampled(PathId),
    #[error("baseline error is zero")]
    ZeroBaseline,
    #[error("unknown allocation method `{0}` (expected complexity, frequency or uniform)")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathProfile {
    pub path: PathId,
    pub complexity: f64,
    pub frequency: f64,
    pub delta_i: f64,
}

impl PathProfile {
    /// `ζ + ln(1/δᵢ)`, the numerator of the predicted error.
    pub fn weight(&self) -> f64 {
        self.complexity - self.delta_i.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub fractions: BTreeMap<PathId, f64>,
    pub counts: BTreeMap<PathId, u64>,
    pub budget: u64,
}

impl AllocationPlan {
    /// `path_id,fraction,count` rows in path order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path_id,fraction,count\n");
        for (path, f) in &self.fractions {
            s.push_str(&format!("{path},{f},{}\n", self.counts.get(path).copied().unwrap_or(0)));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut plan = AllocationPlan { fractions: BTreeMap::new(), counts: BTreeMap::new(), budget: 0 };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("path_id")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let [path, f, c] = cols[..] else {
                return Err(format!("line {}: expected 3 columns", i + 1));
            };
            let path: PathId = path.parse().map_err(|_| format!("line {}: bad path id `{path}`", i + 1))?;
            let f: f64 = f.parse().map_err(|_| format!("line {}: bad fraction `{f}`", i + 1))?;
            let c: u64 = c.parse().map_err(|_| format!("line {}: bad count `{c}`", i + 1))?;
            plan.budget += c;
            plan.fractions.insert(path.clone(), f);
            plan.counts.insert(path, c);
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Complexity,
    Frequency,
    Uniform,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Complexity, Method::Frequency, Method::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            Method::Complexity => "complexity",
            Method::Frequency => "frequency",
            Method::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = AllocError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AllocError::UnknownMethod(s.to_string()))
    }
}

/// Equal per-path failure probability whose product relation gives `delta`.
pub fn split_delta(delta: f64, c: usize) -> Result<f64, AllocError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AllocError::InvalidDelta(delta));
    }
    if c == 0 {
        return Err(AllocError::NoPaths);
    }
    // 1 - (1 - delta)^(1/c), kept accurate for small delta
    Ok(-((-delta).ln_1p() / c as f64).exp_m1())
}

/// `sqrt((ζ + ln(1/δᵢ)) / nᵢ)`; `n_i` may be fractional.
pub fn predicted_error(complexity: f64, delta_i: f64, n_i: f64) -> Result<f64, AllocError> {
    if !(n_i > 0.0) {
        return Err(AllocError::NonPositiveCount(n_i));
    }
    Ok(((complexity - delta_i.ln()) / n_i).sqrt())
}

/// Joins complexities with frequencies. Paths with zero frequency are kept
/// but do not count towards the delta split.
pub fn build_profiles(
    complexities: &BTreeMap<PathId, f64>,
    frequencies: &BTreeMap<PathId, f64>,
    delta: f64,
) -> Result<Vec<PathProfile>, AllocError> {
    let mut total = 0.0;
    for (path, &f) in frequencies {
        if !(0.0..=1.0).contains(&f) {
            return Err(AllocError::InvalidFrequency { path: path.clone(), value: f });
        }
        total += f;
    }
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(AllocError::FrequencySum(total));
    }
    let live = complexities.keys().filter(|p| frequencies.get(*p).is_some_and(|f| *f > 0.0)).count();
    let delta_i = split_delta(delta, live)?;
    complexities
        .iter()
        .map(|(path, &complexity)| {
            let frequency = *frequencies.get(path).unwrap_or(&0.0);
            Ok(PathProfile { path: path.clone(), complexity, frequency, delta_i })
        })
        .collect()
}

fn check_profiles(profiles: &[PathProfile]) -> Result<(), AllocError> {
    if profiles.iter().all(|p| p.frequency <= 0.0) {
        return Err(AllocError::AllZero);
    }
    Ok(())
}

fn normalized(weights: Vec<(PathId, f64)>) -> BTreeMap<PathId, f64> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    weights.into_iter().map(|(p, w)| (p, w / total)).collect()
}

/// Continuous fractions for `method`.
pub fn fractions(method: Method, profiles: &[PathProfile]) -> Result<BTreeMap<PathId, f64>, AllocError> {
    check_profiles(profiles)?;
    let weights: Vec<(PathId, f64)> = profiles
        .iter()
        .map(|p| {
            let w = if p.frequency <= 0.0 {
                0.0
            } else {
                match method {
                    Method::Complexity => (p.frequency * p.weight().sqrt()).powf(2.0 / 3.0),
                    Method::Frequency => p.frequency,
                    Method::Uniform => 1.0,
                }
            };
            (p.path.clone(), w)
        })
        .collect();
    Ok(normalized(weights))
}

pub fn optimal_allocation(profiles: &[PathProfile], budget: u64) -> Result<AllocationPlan, AllocError> {
    allocate(Method::Complexity, profiles, budget)
}

pub fn baseline_allocation(
    method: Method,
    profiles: &[PathProfile],
    budget: u64,
) -> Result<AllocationPlan, AllocError> {
    allocate(method, profiles, budget)
}

pub fn allocate(method: Method, profiles: &[PathProfile], budget: u64) -> Result<AllocationPlan, AllocError> {
    let fractions = fractions(method, profiles)?;
    let counts = integerize(&fractions, budget);
    Ok(AllocationPlan { fractions, counts, budget })
}

/// Largest-remainder rounding of `n * fraction`. Ties go to the
/// lexicographically smaller path; zero fractions never receive samples.
pub fn integerize(fractions: &BTreeMap<PathId, f64>, n: u64) -> BTreeMap<PathId, u64> {
    let total: f64 = fractions.values().sum();
    let mut counts = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0u64;
    for (path, &f) in fractions {
        let exact = if total > 0.0 { n as f64 * f / total } else { 0.0 };
        let base = (exact.floor() as u64).min(n - assigned);
        assigned += base;
        counts.insert(path.clone(), base);
        if f > 0.0 {
            remainders.push((exact - base as f64, path));
        }
    }
    // Stable sort keeps path order among equal remainders.
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut residual = n - assigned;
    for (_, path) in remainders.iter().cycle() {
        if residual == 0 {
            break;
        }
        *counts.get_mut(*path).unwrap() += 1;
        residual -= 1;
    }
    counts
}

/// `Σ D(sᵢ) · predicted_error(ζᵢ, δᵢ, n · fractionᵢ)` over positive-frequency paths.
pub fn expected_predicted_error(
    profiles: &[PathProfile],
    fractions: &BTreeMap<PathId, f64>,
    n: f64,
) -> Result<f64, AllocError> {
    let mut total = 0.0;
    for p in profiles.iter().filter(|p| p.frequency > 0.0) {
        let f = fractions.get(&p.path).copied().unwrap_or(0.0);
        if f <= 0.0 {
            return Err(AllocError::Unsampled(p.path.clone()));
        }
        total += p.frequency * predicted_error(p.complexity, p.delta_i, n * f)?;
    }
    Ok(total)
}

/// Percentage reduction of expected predicted error from `base` to `ours`,
/// averaged over `budgets`.
pub fn predicted_improvement(
    profiles: &[PathProfile],
    ours: &BTreeMap<PathId, f64>,
    base: &BTreeMap<PathId, f64>,
    budgets: &[f64],
) -> Result<f64, AllocError> {
    if budgets.is_empty() {
        return Err(AllocError::NonPositiveCount(0.0));
    }
    let mut sum = 0.0;
    for &n in budgets {
        let e_ours = expected_predicted_error(profiles, ours, n)?;
        let e_base = expected_predicted_error(profiles, base, n)?;
        if e_base == 0.0 {
            return Err(AllocError::ZeroBaseline);
        }
        sum += 100.0 * (e_base - e_ours) / e_base;
    }
    Ok(sum / budgets.len() as f64)
}
