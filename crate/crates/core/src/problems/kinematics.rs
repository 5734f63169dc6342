use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::autodiff::Tensor;

/// Planar arm with three segments mounted on a vertical rail.
///
/// `x1` is the offset along the rail (first output axis), `x2..x4` are joint
/// angles measured from the second output axis and accumulated along the arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    pub lengths: [f64; 3],
    pub prior_var: [f64; 4],
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            lengths: [0.5, 0.5, 1.0],
            prior_var: [1.0 / 16.0, 0.25, 0.25, 0.25],
        }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(ProblemError::InvalidConfig("segment lengths must be positive".into()));
        }
        if self.prior_var.iter().any(|&v| !(v > 0.0)) {
            return Err(ProblemError::InvalidConfig("prior variances must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_prior(&self, n: usize, rng: &mut impl Rng) -> Tensor {
        let dists: Vec<Normal<f64>> = self
            .prior_var
            .iter()
            .map(|v| Normal::new(0.0, v.sqrt()).expect("validated variance"))
            .collect();
        Tensor::from_fn(n, 4, |_, j| dists[j].sample(rng))
    }

    /// End point of the arm.
    pub fn forward(&self, x: &[f64]) -> [f64; 2] {
        let [l1, l2, l3] = self.lengths;
        let a1 = x[1];
        let a2 = x[1] + x[2];
        let a3 = x[1] + x[2] + x[3];
        [
            l1 * a1.sin() + l2 * a2.sin() + l3 * a3.sin() + x[0],
            l1 * a1.cos() + l2 * a2.cos() + l3 * a3.cos(),
        ]
    }

    /// Rail mount, the two inner joints and the tip, in output coordinates.
    pub fn joints(&self, x: &[f64]) -> [[f64; 2]; 4] {
        let [l1, l2, l3] = self.lengths;
        let mut pts = [[0.0; 2]; 4];
        pts[0] = [x[0], 0.0];
        let mut angle = 0.0;
        for (k, (l, dx)) in [(l1, x[1]), (l2, x[2]), (l3, x[3])].into_iter().enumerate() {
            angle += dx;
            pts[k + 1] = [pts[k][0] + l * angle.sin(), pts[k][1] + l * angle.cos()];
        }
        pts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_arm_points_up() {
        let cfg = KinematicsConfig::default();
        let y = cfg.forward(&[0.0, 0.0, 0.0, 0.0]);
        assert!(y[0].abs() < 1e-15 && (y[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quarter_turn_points_sideways() {
        let y = KinematicsConfig::default().forward(&[0.0, FRAC_PI_2, 0.0, 0.0]);
        assert!((y[0] - 2.0).abs() < 1e-15 && y[1].abs() < 1e-15);
    }

    #[test]
    fn rail_offset_only_moves_first_coordinate() {
        let y = KinematicsConfig::default().forward(&[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(y, [0.5, 2.0]);
    }

    #[test]
    fn joints_end_at_forward_output() {
        let cfg = KinematicsConfig::default();
        let x = [0.1, 0.4, -0.3, 0.8];
        let tip = cfg.joints(&x)[3];
        let y = cfg.forward(&x);
        assert!((tip[0] - y[0]).abs() < 1e-14 && (tip[1] - y[1]).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_lengths() {
        let cfg = KinematicsConfig {
            lengths: [0.5, 0.0, 1.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
