//! The two benchmark forward processes, their priors, training data and the
//! rejection-sampling reference posterior.

mod ballistics;
mod dataset;
mod kinematics;
mod oracle;

pub use ballistics::BallisticsConfig;
pub use dataset::{generate_dataset, Dataset, DatasetHeader};
pub use kinematics::KinematicsConfig;
pub use oracle::{rejection_sample_posterior, SampleSet, ORACLE_SOURCE};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;

pub const X_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("trajectory never crosses the ground line")]
    NoImpact,
    #[error("draw budget of {draws} exhausted with {accepted} of {requested} samples accepted")]
    BudgetExceeded {
        accepted: usize,
        requested: usize,
        draws: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed data file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Kinematics,
    Ballistics,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Kinematics => "kinematics",
            ProblemKind::Ballistics => "ballistics",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kinematics" => Ok(Self::Kinematics),
            "ballistics" => Ok(Self::Ballistics),
            other => Err(ProblemError::InvalidConfig(format!("unknown problem {other:?}"))),
        }
    }
}

/// A benchmark: prior over `x` in R^4 and forward process `y = f(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum Problem {
    Kinematics(KinematicsConfig),
    Ballistics(BallisticsConfig),
}

impl Problem {
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Kinematics => Problem::Kinematics(KinematicsConfig::default()),
            ProblemKind::Ballistics => Problem::Ballistics(BallisticsConfig::default()),
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::Kinematics(_) => ProblemKind::Kinematics,
            Problem::Ballistics(_) => ProblemKind::Ballistics,
        }
    }

    pub fn x_dim(&self) -> usize {
        X_DIM
    }

    pub fn y_dim(&self) -> usize {
        match self {
            Problem::Kinematics(_) => 2,
            Problem::Ballistics(_) => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        match self {
            Problem::Kinematics(c) => c.validate(),
            Problem::Ballistics(c) => c.validate(),
        }
    }

    /// `n` i.i.d. prior draws. For ballistics the prior is restricted to
    /// throws that reach the ground; draws without an impact are redrawn.
    pub fn sample_prior(&self, n: usize, rng: &mut impl Rng) -> Tensor {
        match self {
            Problem::Kinematics(c) => c.sample_prior(n, rng),
            Problem::Ballistics(c) => {
                let mut rows = Vec::with_capacity(n);
                while rows.len() < n {
                    let batch = c.sample_unrestricted(n - rows.len(), rng);
                    for x in batch.row_iter() {
                        if c.impact_location(x).is_ok() {
                            rows.push(x.to_vec());
                        }
                    }
                }
                Tensor::from_rows(&rows)
            }
        }
    }

    /// Draws from the unrestricted prior (ballistics draws may lack an
    /// impact). Used where rejections must be counted.
    pub fn sample_prior_raw(&self, n: usize, rng: &mut impl Rng) -> Tensor {
        match self {
            Problem::Kinematics(c) => c.sample_prior(n, rng),
            Problem::Ballistics(c) => c.sample_unrestricted(n, rng),
        }
    }

    /// Forward process. Fails with [`ProblemError::NoImpact`] for throws
    /// outside the ballistics prior support.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ProblemError> {
        match self {
            Problem::Kinematics(c) => Ok(c.forward(x).to_vec()),
            Problem::Ballistics(c) => Ok(vec![c.impact_location(x)?]),
        }
    }

    /// Forward process that always produces an observation; used to
    /// re-simulate model samples.
    pub fn resimulate(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Problem::Kinematics(c) => c.forward(x).to_vec(),
            Problem::Ballistics(c) => vec![c.impact_location_lenient(x)],
        }
    }

    /// Names of the parameter and observation columns.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=X_DIM).map(|i| format!("x{i}")).collect();
        names.extend((1..=self.y_dim()).map(|i| format!("y{i}")));
        names
    }
}
