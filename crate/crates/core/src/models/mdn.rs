use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dims, LEAKY_SLOPE};
use crate::autodiff::{AdError, Activation, Bound, Mlp, ParamStore, Tape, Tensor, Var};
use crate::losses::{lower_index, GmmVars};

/// Keeps the precision diagonal away from zero.
const DIAG_FLOOR: f64 = 1e-6;

/// Mixture density network: `y -> ` a `K`-component Gaussian mixture over
/// `x`, parameterized by precision Cholesky factors (full or diagonal).
#[derive(Clone, Debug)]
pub struct MdnNet {
    components: usize,
    dim: usize,
    full: bool,
    net: Mlp,
}

impl MdnNet {
    pub fn new(store: &mut ParamStore, dims: Dims, components: usize, full: bool, width: usize, rng: &mut impl Rng) -> Self {
        let d = dims.x;
        let per = 1 + 2 * d + if full { d * (d - 1) / 2 } else { 0 };
        let net = Mlp::new(
            store,
            "mdn",
            &[dims.y, width, width, width, components * per],
            Activation::LeakyRelu(LEAKY_SLOPE),
            false,
            rng,
        );
        Self {
            components,
            dim: d,
            full,
            net,
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn predict(&self, tape: &mut Tape, p: &Bound, y: Var) -> Result<GmmVars, AdError> {
        let (k, d) = (self.components, self.dim);
        let h = self.net.forward(tape, p, y)?;
        let logits = tape.slice(h, 0, k)?;
        let means = tape.slice(h, k, k + d * k)?;
        let raw = tape.slice(h, k + d * k, k + 2 * d * k)?;
        let sp = tape.softplus(raw)?;
        let chol_diag = tape.add_scalar(sp, DIAG_FLOOR)?;
        let chol_off = if self.full && d > 1 {
            let start = k + 2 * d * k;
            Some(tape.slice(h, start, start + d * (d - 1) / 2 * k)?)
        } else {
            None
        };
        Ok(GmmVars {
            components: k,
            dim: d,
            logits,
            means,
            chol_diag,
            chol_off,
        })
    }
}

/// Concrete per-row mixture parameters, detached from the tape.
#[derive(Clone, Debug)]
pub struct Gmm {
    pub components: usize,
    pub dim: usize,
    logits: Tensor,
    means: Tensor,
    chol_diag: Tensor,
    chol_off: Option<Tensor>,
}

impl Gmm {
    pub fn from_tape(tape: &Tape, g: &GmmVars) -> Self {
        Self {
            components: g.components,
            dim: g.dim,
            logits: tape.value(g.logits).clone(),
            means: tape.value(g.means).clone(),
            chol_diag: tape.value(g.chol_diag).clone(),
            chol_off: g.chol_off.map(|v| tape.value(v).clone()),
        }
    }

    pub fn rows(&self) -> usize {
        self.logits.rows()
    }

    /// Normalized mixture weights of row `r`.
    pub fn weights(&self, r: usize) -> Vec<f64> {
        let l = self.logits.row_slice(r);
        let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn mean(&self, r: usize, k: usize) -> Vec<f64> {
        (0..self.dim).map(|j| self.means.get(r, j * self.components + k)).collect()
    }

    /// Lower-triangular precision factor `L`, row-major `d x d`.
    pub fn precision_factor(&self, r: usize, k: usize) -> Vec<f64> {
        let (d, kk) = (self.dim, self.components);
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            l[j * d + j] = self.chol_diag.get(r, j * kk + k);
            if let Some(off) = &self.chol_off {
                for i in j + 1..d {
                    l[i * d + j] = off.get(r, lower_index(d, i, j) * kk + k);
                }
            }
        }
        l
    }

    /// Solves `L^T v = e` by back-substitution.
    fn solve_lt(&self, l: &[f64], e: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut v = vec![0.0; d];
        for j in (0..d).rev() {
            let mut s = e[j];
            for i in j + 1..d {
                s -= l[i * d + j] * v[i];
            }
            v[j] = s / l[j * d + j];
        }
        v
    }

    /// Covariance `(L L^T)^{-1}` of component `k`, row-major.
    pub fn covariance(&self, r: usize, k: usize) -> Vec<f64> {
        let d = self.dim;
        let l = self.precision_factor(r, k);
        // columns of L^{-T}: Sigma = L^{-T} L^{-1} = sum_m c_m c_m^T
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|m| {
                let mut e = vec![0.0; d];
                e[m] = 1.0;
                self.solve_lt(&l, &e)
            })
            .collect();
        let mut cov = vec![0.0; d * d];
        for c in &cols {
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += c[a] * c[b];
                }
            }
        }
        cov
    }

    /// Mean and covariance of the whole mixture for row `r`.
    pub fn moments(&self, r: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let w = self.weights(r);
        let mut mean = vec![0.0; d];
        for (k, wk) in w.iter().enumerate() {
            for (m, v) in mean.iter_mut().zip(self.mean(r, k)) {
                *m += wk * v;
            }
        }
        let mut cov = vec![0.0; d * d];
        for (k, wk) in w.iter().enumerate() {
            let mu = self.mean(r, k);
            let ck = self.covariance(r, k);
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] += wk * (ck[a * d + b] + (mu[a] - mean[a]) * (mu[b] - mean[b]));
                }
            }
        }
        (mean, cov)
    }

    /// Log density of `x` under row `r`'s mixture.
    pub fn log_prob(&self, r: usize, x: &[f64]) -> f64 {
        let d = self.dim;
        let w = self.weights(r);
        let terms: Vec<f64> = (0..self.components)
            .map(|k| {
                let l = self.precision_factor(r, k);
                let mu = self.mean(r, k);
                let mut quad = 0.0;
                let mut logdet = 0.0;
                for j in 0..d {
                    let u: f64 = (j..d).map(|i| l[i * d + j] * (x[i] - mu[i])).sum();
                    quad += u * u;
                    logdet += l[j * d + j].ln();
                }
                w[k].ln() + logdet - 0.5 * quad - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
            })
            .collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    /// One draw from each row's mixture.
    pub fn sample_rows(&self, rng: &mut impl Rng) -> Tensor {
        let d = self.dim;
        let mut out = Tensor::zeros(self.rows(), d);
        for r in 0..self.rows() {
            let w = self.weights(r);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = w.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if u < acc {
                    k = i;
                    break;
                }
            }
            let e: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let v = self.solve_lt(&self.precision_factor(r, k), &e);
            for (j, (m, vj)) in self.mean(r, k).into_iter().zip(v).enumerate() {
                out.set(r, j, m + vj);
            }
        }
        out
    }
}
