//! Posterior-quality metrics, timing, and report aggregation.

mod contour;
mod mode;
mod report;

pub use contour::{contour_97, Contour, GridSpec};
pub use mode::{mean_shift_mode, MeanShift};
pub use report::{aggregate, BenchmarkReport, Caps, ModelSummary, Stats};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{mmd_value, Kernel};
use crate::models::{Model, ModelError};
use crate::problems::{rejection_sample_posterior, Problem, ProblemError, ProblemKind, SampleSet};
use crate::seed::stream;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sample sets are for different conditions: {a:?} vs {b:?}")]
    ConditionMismatch { a: Vec<f64>, b: Vec<f64> },
    #[error("empty sample set")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Default rejection radius for the ground-truth oracle.
pub fn default_eps(kind: ProblemKind) -> f64 {
    match kind {
        ProblemKind::Kinematics => 0.03,
        ProblemKind::Ballistics => 0.1,
    }
}

/// MMD between a model's posterior samples and the oracle's.
pub fn err_post(model: &SampleSet, oracle: &SampleSet, kernel: &Kernel) -> Result<f64, EvalError> {
    if model.condition != oracle.condition {
        return Err(EvalError::ConditionMismatch {
            a: model.condition.clone(),
            b: oracle.condition.clone(),
        });
    }
    if model.is_empty() || oracle.is_empty() {
        return Err(EvalError::Empty);
    }
    mmd_value(&model.samples, &oracle.samples, kernel).map_err(|e| EvalError::Model(e.into()))
}

/// Mean squared distance between `f(x)` and the condition over the samples.
pub fn err_resim(samples: &SampleSet, problem: &Problem) -> Result<f64, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let total: f64 = samples
        .samples
        .row_iter()
        .map(|x| {
            problem
                .resimulate(x)
                .iter()
                .zip(&samples.condition)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    Ok(total / samples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median_ms: f64,
    pub runs_ms: Vec<f64>,
}

impl Timing {
    pub fn spread_ms(&self) -> f64 {
        let max = self.runs_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.runs_ms.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median wall time of `sample_posterior(y*, n)` over `repeats` runs after
/// one discarded warm-up run.
pub fn time_inference(model: &Model, y_star: &[f64], n: usize, repeats: usize, seed: u64) -> Result<Timing, EvalError> {
    let mut rng = stream(seed, "timing", 0);
    model.sample_posterior(y_star, n, &mut rng)?;
    let runs_ms = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            let s = model.sample_posterior(y_star, n, &mut rng);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            s.map(|_| ms)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Timing {
        median_ms: median(&runs_ms),
        runs_ms,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub conditions: usize,
    pub samples: usize,
    /// Oracle acceptance radius; the problem's default when unset.
    pub eps: Option<f64>,
    pub max_draws: usize,
    pub kernel: Kernel,
    pub timing_repeats: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            conditions: 250,
            samples: 256,
            eps: None,
            max_draws: 200_000_000,
            kernel: Kernel::default(),
            timing_repeats: 11,
        }
    }
}

impl EvalSettings {
    pub fn eps_for(&self, problem: &Problem) -> f64 {
        self.eps.unwrap_or_else(|| default_eps(problem.kind()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: String,
    pub condition: Vec<f64>,
    pub err_post: f64,
    pub err_resim: f64,
    /// Wall time of the sampling call for this condition.
    pub inference_ms: f64,
    pub n_samples: usize,
    pub eps: f64,
}

/// Evaluation conditions `y* = f(x)` for `x` drawn from the prior.
pub fn condition_grid(problem: &Problem, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, EvalError> {
    let mut rng = stream(seed, "conditions", 0);
    let xs = problem.sample_prior(n, &mut rng);
    Ok(xs.row_iter().map(|x| problem.forward(x)).collect::<Result<_, _>>()?)
}

/// One oracle posterior per condition, each from its own stream, so the
/// sets can be shared by every model evaluated on the same grid.
pub fn build_oracles(
    problem: &Problem,
    grid: &[Vec<f64>],
    settings: &EvalSettings,
    seed: u64,
) -> Result<Vec<SampleSet>, EvalError> {
    let eps = settings.eps_for(problem);
    grid.iter()
        .enumerate()
        .map(|(i, y)| {
            let mut rng = stream(seed, "oracle", i as u64);
            Ok(rejection_sample_posterior(problem, y, eps, settings.samples, &mut rng, settings.max_draws)?)
        })
        .collect()
}

/// Samples the model's posterior at every oracle's condition and scores it.
pub fn evaluate_model(
    model: &Model,
    problem: &Problem,
    oracles: &[SampleSet],
    settings: &EvalSettings,
    seed: u64,
) -> Result<Vec<EvalRecord>, EvalError> {
    oracles
        .iter()
        .enumerate()
        .map(|(i, oracle)| {
            let mut rng = stream(seed, "posterior", i as u64);
            let start = Instant::now();
            let s = model.sample_posterior(&oracle.condition, settings.samples, &mut rng)?;
            let inference_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(EvalRecord {
                model: model.id().to_string(),
                condition: oracle.condition.clone(),
                err_post: err_post(&s, oracle, &settings.kernel)?,
                err_resim: err_resim(&s, problem)?,
                inference_ms,
                n_samples: s.len(),
                eps: oracle.eps.unwrap_or(f64::NAN),
            })
        })
        .collect()
}

/// Writes one CSV row per record. Wall times are left out so the file is a
/// pure function of the seed; timings are reported separately.
pub fn records_csv(records: &[EvalRecord]) -> String {
    let dims = records.first().map_or(0, |r| r.condition.len());
    let mut out = String::from("model");
    for j in 0..dims {
        out.push_str(&format!(",y{}", j + 1));
    }
    out.push_str(",err_post,err_resim,n_samples,eps\n");
    for r in records {
        out.push_str(&r.model);
        for v in &r.condition {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{},{},{},{}\n", r.err_post, r.err_resim, r.n_samples, r.eps));
    }
    out
}

/// Reads the output of [`records_csv`]; `inference_ms` comes back as NaN.
pub fn parse_records_csv(text: &str) -> Result<Vec<EvalRecord>, EvalError> {
    let bad = |line: usize, m: &str| EvalError::Degenerate(format!("records line {line}: {m}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(EvalError::Empty)?;
    let cols: Vec<&str> = header.split(',').collect();
    let dims = cols.iter().filter(|c| c.starts_with('y')).count();
    if cols.len() != dims + 5 || cols[0] != "model" || cols[dims + 1..] != ["err_post", "err_resim", "n_samples", "eps"] {
        return Err(bad(1, "unexpected header"));
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != cols.len() {
                return Err(bad(i + 1, "wrong field count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "not a number"));
            Ok(EvalRecord {
                model: f[0].to_string(),
                condition: f[1..=dims].iter().map(|s| num(s)).collect::<Result<_, _>>()?,
                err_post: num(f[dims + 1])?,
                err_resim: num(f[dims + 2])?,
                inference_ms: f64::NAN,
                n_samples: f[dims + 3].parse().map_err(|_| bad(i + 1, "not a count"))?,
                eps: num(f[dims + 4])?,
            })
        })
        .collect()
}

/// Draws from the prior, as an unconditioned reference for metric scale.
pub fn prior_set(problem: &Problem, condition: &[f64], n: usize, seed: u64) -> SampleSet {
    let mut rng = stream(seed, "prior-reference", 0);
    SampleSet::from_model("prior", condition, problem.sample_prior(n, &mut rng))
}

#[cfg(test)]
mod tests;
