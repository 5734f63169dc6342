use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Problem, ProblemError};
use crate::autodiff::Tensor;

pub const ORACLE_SOURCE: &str = "oracle";

/// Posterior samples for one condition `y*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub condition: Vec<f64>,
    /// `n x 4`.
    pub samples: Tensor,
    /// Model id, or [`ORACLE_SOURCE`].
    pub source: String,
    /// Acceptance radius; oracle sets only.
    pub eps: Option<f64>,
    pub acceptance_rate: Option<f64>,
}

impl SampleSet {
    pub fn from_model(source: impl Into<String>, condition: &[f64], samples: Tensor) -> Self {
        Self {
            condition: condition.to_vec(),
            samples,
            source: source.into(),
            eps: None,
            acceptance_rate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn is_oracle(&self) -> bool {
        self.source == ORACLE_SOURCE
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Approximate posterior `p(x | y*)` by keeping prior draws whose
/// observation lies within `eps` of `y*` (Euclidean). Draws outside the
/// prior support (no impact) count as rejections.
pub fn rejection_sample_posterior(
    problem: &Problem,
    target: &[f64],
    eps: f64,
    n: usize,
    rng: &mut impl Rng,
    max_draws: usize,
) -> Result<SampleSet, ProblemError> {
    if !(eps > 0.0) {
        return Err(ProblemError::InvalidConfig("eps must be positive".into()));
    }
    if n == 0 {
        return Err(ProblemError::InvalidConfig("sample count must be positive".into()));
    }
    if target.len() != problem.y_dim() {
        return Err(ProblemError::InvalidConfig(format!(
            "condition has {} entries, problem observes {}",
            target.len(),
            problem.y_dim()
        )));
    }
    let eps2 = eps * eps;
    let mut rows: Vec<f64> = Vec::with_capacity(n * 4);
    let (mut accepted, mut draws) = (0usize, 0usize);
    const CHUNK: usize = 4096;
    while accepted < n && draws < max_draws {
        let batch = problem.sample_prior_raw(CHUNK.min(max_draws - draws), rng);
        for x in batch.row_iter() {
            draws += 1;
            let Ok(y) = problem.forward(x) else { continue };
            if dist2(&y, target) <= eps2 {
                rows.extend_from_slice(x);
                accepted += 1;
                if accepted == n {
                    break;
                }
            }
        }
    }
    if accepted < n {
        return Err(ProblemError::BudgetExceeded {
            accepted,
            requested: n,
            draws,
        });
    }
    Ok(SampleSet {
        condition: target.to_vec(),
        samples: Tensor::new(n, 4, rows).expect("row count"),
        source: ORACLE_SOURCE.into(),
        eps: Some(eps),
        acceptance_rate: Some(accepted as f64 / draws as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKind;
    use crate::seed::stream;

    #[test]
    fn accepted_samples_lie_within_eps() {
        let p = Problem::default_for(ProblemKind::Kinematics);
        let set = rejection_sample_posterior(&p, &[1.5, 0.0], 0.05, 300, &mut stream(0, "t", 0), 50_000_000).unwrap();
        assert_eq!(set.len(), 300);
        for x in set.samples.row_iter() {
            assert!(dist2(&p.forward(x).unwrap(), &[1.5, 0.0]).sqrt() <= 0.05);
        }
        let rate = set.acceptance_rate.unwrap();
        assert!(rate > 0.0 && rate < 1.0);
    }

    #[test]
    fn endpoints_cluster_at_target() {
        let p = Problem::default_for(ProblemKind::Kinematics);
        let set = rejection_sample_posterior(&p, &[1.5, 0.0], 0.03, 500, &mut stream(1, "t", 0), 100_000_000).unwrap();
        let (mut m0, mut m1) = (0.0, 0.0);
        for x in set.samples.row_iter() {
            let y = p.forward(x).unwrap();
            m0 += y[0] / 500.0;
            m1 += y[1] / 500.0;
        }
        assert!((m0 - 1.5).abs() < 0.01 && m1.abs() < 0.01, "({m0}, {m1})");
    }

    #[test]
    fn budget_exhaustion_reports_partial_count() {
        let p = Problem::default_for(ProblemKind::Kinematics);
        let err = rejection_sample_posterior(&p, &[1.5, 0.0], 0.03, 1000, &mut stream(2, "t", 0), 10_000).unwrap_err();
        match err {
            ProblemError::BudgetExceeded { accepted, draws, requested } => {
                assert!(accepted < 1000);
                assert_eq!(draws, 10_000);
                assert_eq!(requested, 1000);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = Problem::default_for(ProblemKind::Ballistics);
        let mut rng = stream(3, "t", 0);
        assert!(rejection_sample_posterior(&p, &[5.0], 0.0, 10, &mut rng, 100).is_err());
        assert!(rejection_sample_posterior(&p, &[5.0, 1.0], 0.1, 10, &mut rng, 100).is_err());
    }
}
