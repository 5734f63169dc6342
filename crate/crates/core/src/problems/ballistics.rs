use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use super::ProblemError;
use crate::autodiff::Tensor;

/// Throw with linear air drag. Parameters are launch position `(x1, x2)`,
/// launch angle `x3` (radians) and launch speed `x4`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallisticsConfig {
    pub gravity: f64,
    pub mass: f64,
    pub drag: f64,
    pub x1_mean: f64,
    pub x1_var: f64,
    pub x2_mean: f64,
    pub x2_var: f64,
    /// Launch angle bounds in radians.
    pub angle_min: f64,
    pub angle_max: f64,
    pub speed_rate: f64,
    /// Adds `U(0, 1)` to the Poisson speed draw so it has a density.
    pub dequantize: bool,
    /// Search horizon for the impact time, in seconds.
    pub t_max: f64,
}

impl Default for BallisticsConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            mass: 0.2,
            drag: 0.25,
            x1_mean: 0.0,
            x1_var: 0.25,
            x2_mean: 1.5,
            x2_var: 0.25,
            angle_min: 9f64.to_radians(),
            angle_max: 72f64.to_radians(),
            speed_rate: 15.0,
            dequantize: true,
            t_max: 1e3,
        }
    }
}

/// `(1 - e^{-u}) / u`, continuous at zero.
fn decay_ratio(u: f64) -> f64 {
    if u < 1e-8 {
        1.0 - 0.5 * u
    } else {
        -(-u).exp_m1() / u
    }
}

/// `(e^{-u} - 1 + u) / u^2`, continuous at zero.
fn drop_ratio(u: f64) -> f64 {
    if u < 1e-2 {
        0.5 - u / 6.0 + u * u / 24.0 - u * u * u / 120.0 + u * u * u * u / 720.0
    } else {
        ((-u).exp_m1() + u) / (u * u)
    }
}

impl BallisticsConfig {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let positive = [self.gravity, self.mass, self.drag, self.x1_var, self.x2_var, self.speed_rate, self.t_max];
        if positive.iter().any(|&v| !(v > 0.0)) {
            return Err(ProblemError::InvalidConfig(
                "gravity, mass, drag, variances, speed rate and t_max must be positive".into(),
            ));
        }
        if !(self.angle_min < self.angle_max) {
            return Err(ProblemError::InvalidConfig("angle_min must be below angle_max".into()));
        }
        Ok(())
    }

    /// Prior draws without the impact restriction; see
    /// [`Problem::sample_prior`](super::Problem::sample_prior).
    pub fn sample_unrestricted(&self, n: usize, rng: &mut impl Rng) -> Tensor {
        let x1 = Normal::new(self.x1_mean, self.x1_var.sqrt()).expect("validated");
        let x2 = Normal::new(self.x2_mean, self.x2_var.sqrt()).expect("validated");
        let x3 = Uniform::new_inclusive(self.angle_min, self.angle_max).expect("validated");
        let x4 = Poisson::new(self.speed_rate).expect("validated");
        let mut t = Tensor::zeros(n, 4);
        for i in 0..n {
            t.set(i, 0, x1.sample(rng));
            t.set(i, 1, x2.sample(rng));
            t.set(i, 2, x3.sample(rng));
            let mut speed: f64 = x4.sample(rng);
            if self.dequantize {
                speed += rng.random::<f64>();
            }
            t.set(i, 3, speed);
        }
        t
    }

    fn velocity(x: &[f64]) -> (f64, f64) {
        (x[3] * x[2].cos(), x[3] * x[2].sin())
    }

    /// Position `(T1, T2)` at time `t`.
    pub fn trajectory(&self, x: &[f64], t: f64) -> (f64, f64) {
        let (v1, v2) = Self::velocity(x);
        let u = self.drag * t / self.mass;
        let a = decay_ratio(u);
        (x[0] + v1 * t * a, x[1] + v2 * t * a - self.gravity * t * t * drop_ratio(u))
    }

    fn height(&self, x: &[f64], t: f64) -> f64 {
        self.trajectory(x, t).1
    }

    /// Time of the highest point on `t >= 0`.
    fn apex_time(&self, x: &[f64]) -> f64 {
        let (_, v2) = Self::velocity(x);
        if v2 > 0.0 {
            (self.mass / self.drag) * (v2 * self.drag / (self.gravity * self.mass)).ln_1p()
        } else {
            0.0
        }
    }

    /// Time of the last crossing of the ground line, or `None` when the
    /// trajectory never reaches height zero from above within `horizon`.
    pub fn impact_time(&self, x: &[f64], horizon: f64) -> Option<f64> {
        // The height is concave in t whenever the initial vertical speed is
        // above minus the terminal speed, and strictly decreasing otherwise,
        // so after the apex there is at most one root.
        let start = self.apex_time(x);
        let top = self.height(x, start);
        if top < 0.0 {
            return None;
        }
        if top == 0.0 {
            return Some(start);
        }
        let mut lo = start;
        let mut step = 1.0;
        let mut hi = start + step;
        while self.height(x, hi) > 0.0 {
            lo = hi;
            step *= 2.0;
            hi = start + step;
            if hi > horizon {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let h = self.height(x, mid);
            if h == 0.0 {
                return Some(mid);
            }
            if h > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (hl, hh) = (self.height(x, lo).abs(), self.height(x, hi).abs());
        Some(if hl <= hh { lo } else { hi })
    }

    /// Horizontal position where the trajectory hits the ground.
    pub fn impact_location(&self, x: &[f64]) -> Result<f64, ProblemError> {
        let t = self.impact_time(x, self.t_max).ok_or(ProblemError::NoImpact)?;
        Ok(self.trajectory(x, t).0)
    }

    /// Impact location for arbitrary parameters, used when re-simulating
    /// model samples that may lie outside the prior support. A trajectory
    /// that never rises to the ground line is scored at its launch point.
    pub fn impact_location_lenient(&self, x: &[f64]) -> f64 {
        match self.impact_time(x, 1e12) {
            Some(t) => self.trajectory(x, t).0,
            None => x[0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn launch_point_at_time_zero() {
        let cfg = BallisticsConfig::default();
        let x = [0.3, 1.7, 0.6, 12.0];
        assert_eq!(cfg.trajectory(&x, 0.0), (0.3, 1.7));
    }

    #[test]
    fn horizontal_position_increases() {
        let cfg = BallisticsConfig::default();
        let x = [0.0, 1.5, 0.8, 15.0];
        let mut prev = f64::NEG_INFINITY;
        for k in 0..1000 {
            let t1 = cfg.trajectory(&x, k as f64 * 0.01).0;
            assert!(t1 > prev);
            prev = t1;
        }
    }

    #[test]
    fn vanishing_drag_approaches_parabola() {
        let cfg = BallisticsConfig {
            drag: 1e-6,
            ..Default::default()
        };
        let x = [0.2, 1.5, 0.7, 14.0];
        let (v1, v2) = (14.0 * 0.7f64.cos(), 14.0 * 0.7f64.sin());
        for k in 0..40 {
            let t = k as f64 * 0.1;
            let (t1, t2) = cfg.trajectory(&x, t);
            assert!((t1 - (0.2 + v1 * t)).abs() < 1e-3);
            assert!((t2 - (1.5 + v2 * t - 0.5 * 9.81 * t * t)).abs() < 1e-3);
        }
    }

    #[test]
    fn drag_free_range_oracle() {
        let cfg = BallisticsConfig {
            drag: 1e-6,
            ..Default::default()
        };
        let angle = 45f64.to_radians();
        let x = [0.0, 1.5, angle, 15.0];
        let (v1, v2) = (15.0 * angle.cos(), 15.0 * angle.sin());
        let oracle = v1 * (v2 + (v2 * v2 + 2.0 * 9.81 * 1.5).sqrt()) / 9.81;
        let y = cfg.impact_location(&x).unwrap();
        assert!((y - oracle).abs() < 1e-3, "{y} vs {oracle}");
        assert!((oracle - 24.35).abs() < 0.01);
    }

    #[test]
    fn low_launch_lands_near_start() {
        let cfg = BallisticsConfig::default();
        let x = [0.4, 1e-6, -1.2, 10.0];
        let y = cfg.impact_location(&x).unwrap();
        assert!((y - 0.4).abs() < 1e-5);
    }

    #[test]
    fn root_satisfies_contract_and_is_rightmost() {
        let cfg = BallisticsConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = cfg.sample_unrestricted(300, &mut rng);
        for x in xs.row_iter() {
            let Some(t) = cfg.impact_time(x, cfg.t_max) else { continue };
            assert!(cfg.height(x, t).abs() < 1e-8);
            // no later sign change on a dense scan
            let mut s = t + 1e-4;
            while s < t + 5.0 {
                assert!(cfg.height(x, s) < 0.0);
                s += 1e-3;
            }
        }
    }

    #[test]
    fn buried_launch_has_no_impact() {
        let cfg = BallisticsConfig::default();
        let x = [0.0, -2.0, 0.2, 1.0];
        assert!(matches!(cfg.impact_location(&x), Err(ProblemError::NoImpact)));
        assert_eq!(cfg.impact_location_lenient(&x), 0.0);
    }

    #[test]
    fn invalid_angles_rejected() {
        let cfg = BallisticsConfig {
            angle_min: 1.0,
            angle_max: 0.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
