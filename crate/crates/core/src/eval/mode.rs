use crate::autodiff::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanShift {
    pub bandwidth: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MeanShift {
    fn default() -> Self {
        Self {
            bandwidth: 0.2,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Gaussian mean shift started from the sample with the highest kernel
/// density; returns the fixed point. Ties between starting candidates are
/// broken by coordinates, so the result does not depend on sample order.
pub fn mean_shift_mode(samples: &Tensor, cfg: MeanShift) -> Option<Vec<f64>> {
    let n = samples.rows();
    if n == 0 {
        return None;
    }
    let inv = -0.5 / (cfg.bandwidth * cfg.bandwidth);
    let density = |p: &[f64]| samples.row_iter().map(|q| (sq_dist(p, q) * inv).exp()).sum::<f64>();
    let start = (0..n)
        .map(|i| (density(samples.row_slice(i)), samples.row_slice(i)))
        .max_by(|a, b| {
            a.0.total_cmp(&b.0).then_with(|| {
                // prefer the lexicographically smaller point on equal density
                b.1.iter()
                    .zip(a.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        })
        .map(|(_, p)| p.to_vec())
        .expect("non-empty");
    let mut x = start;
    for _ in 0..cfg.max_iter {
        let mut num = vec![0.0; x.len()];
        let mut den = 0.0;
        for q in samples.row_iter() {
            let w = (sq_dist(&x, q) * inv).exp();
            den += w;
            num.iter_mut().zip(q).for_each(|(a, b)| *a += w * b);
        }
        if den == 0.0 {
            break;
        }
        let next: Vec<f64> = num.into_iter().map(|v| v / den).collect();
        let step = sq_dist(&next, &x).sqrt();
        x = next;
        if step < cfg.tol {
            break;
        }
    }
    Some(x)
}
