use rand::Rng;
use rand_distr::StandardNormal;

use super::Tensor;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mat_vec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    w.row_iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn mat_t_vec(w: &Tensor, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &ui) in w.row_iter().zip(u) {
        for (o, &a) in out.iter_mut().zip(r) {
            *o += a * ui;
        }
    }
    out
}

/// Runs `iters` rounds of power iteration on `W^T W` starting from the
/// right vector `v` (updated in place) and returns the estimate `|W v|`.
pub fn power_iteration(w: &Tensor, v: &mut [f64], iters: usize) -> f64 {
    debug_assert_eq!(v.len(), w.cols());
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let n = norm(v);
        if n == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let u = mat_vec(w, v);
        sigma = norm(&u);
        if sigma == 0.0 {
            return 0.0;
        }
        let next = mat_t_vec(w, &u);
        v.copy_from_slice(&next);
    }
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    sigma
}

/// Power-iteration estimate of the largest singular value of `w`.
pub fn spectral_norm(w: &Tensor, iters: usize, rng: &mut impl Rng) -> f64 {
    if w.values().iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..w.cols()).map(|_| rng.sample(StandardNormal)).collect();
    power_iteration(w, &mut v, iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Singular values via one-sided Jacobi rotations.
    fn jacobi_singular_values(w: &Tensor) -> Vec<f64> {
        let (m, n) = (w.rows(), w.cols());
        let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| w.get(i, j)).collect()).collect();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha: f64 = a[p].iter().map(|x| x * x).sum();
                    let beta: f64 = a[q].iter().map(|x| x * x).sum();
                    let gamma: f64 = a[p].iter().zip(&a[q]).map(|(x, y)| x * y).sum();
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let (x, y) = (a[p][i], a[q][i]);
                        a[p][i] = c * x - s * y;
                        a[q][i] = s * x + c * y;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        let mut sv: Vec<f64> = a.iter().map(|col| norm(col)).collect();
        sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
        sv
    }

    #[test]
    fn diagonal_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Tensor::from_rows(&[[3.0, 0.0], [0.0, 1.0]]);
        assert!((spectral_norm(&w, 50, &mut rng) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn identity_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((spectral_norm(&Tensor::identity(5), 10, &mut rng) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(spectral_norm(&Tensor::zeros(3, 4), 10, &mut rng), 0.0);
    }

    #[test]
    fn random_matrix_matches_jacobi_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = Tensor::from_fn(32, 32, |_, _| rng.sample::<f64, _>(StandardNormal));
        let oracle = jacobi_singular_values(&w)[0];
        let est = spectral_norm(&w, 2000, &mut rng);
        assert!(((est - oracle) / oracle).abs() < 1e-4, "{est} vs {oracle}");
    }

    #[test]
    fn jacobi_oracle_on_known_matrix() {
        // [[2, 0], [0, -5]] has singular values 5 and 2.
        let sv = jacobi_singular_values(&Tensor::from_rows(&[[2.0, 0.0], [0.0, -5.0]]));
        assert!((sv[0] - 5.0).abs() < 1e-12 && (sv[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_does_not_decrease_with_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Tensor::from_fn(8, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let start: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let mut prev = 0.0;
        for iters in 1..30 {
            let mut v = start.clone();
            let s = power_iteration(&w, &mut v, iters);
            assert!(s >= prev - 1e-12);
            prev = s;
        }
    }
}
