//! Training objectives, written against the tape so every model shares the
//! same differentiable definitions. All batch reductions are arithmetic
//! means over rows.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{pairwise_sq_dist, AdError, Tape, Tensor, Var};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Positive-definite kernel for MMD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `sum_s s^2 / (s^2 + |a - b|^2)`.
    InverseMultiquadric { scales: Vec<f64> },
    /// `sum_h exp(-|a - b|^2 / (2 h^2))`.
    Gaussian { bandwidths: Vec<f64> },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::InverseMultiquadric {
            scales: vec![0.1, 0.5, 2.0],
        }
    }
}

impl Kernel {
    pub fn validate(&self) -> Result<(), AdError> {
        let (name, w) = match self {
            Kernel::InverseMultiquadric { scales } => ("inverse multiquadric", scales),
            Kernel::Gaussian { bandwidths } => ("gaussian", bandwidths),
        };
        if w.is_empty() || w.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(AdError::Domain {
                op: "kernel",
                detail: format!("{name} kernel needs positive widths"),
            });
        }
        Ok(())
    }

    /// Kernel value from a squared distance.
    pub fn eval_sq(&self, d2: f64) -> f64 {
        match self {
            Kernel::InverseMultiquadric { scales } => scales.iter().map(|s| s * s / (s * s + d2)).sum(),
            Kernel::Gaussian { bandwidths } => bandwidths.iter().map(|h| (-d2 / (2.0 * h * h)).exp()).sum(),
        }
    }

    fn on_tape(&self, tape: &mut Tape, d2: Var) -> Result<Var, AdError> {
        let mut acc: Option<Var> = None;
        let widths = match self {
            Kernel::InverseMultiquadric { scales } => scales,
            Kernel::Gaussian { bandwidths } => bandwidths,
        };
        for &s in widths {
            let term = match self {
                Kernel::InverseMultiquadric { .. } => {
                    let shifted = tape.add_scalar(d2, s * s)?;
                    let inv = tape.recip(shifted)?;
                    tape.scale(inv, s * s)?
                }
                Kernel::Gaussian { .. } => {
                    let e = tape.scale(d2, -1.0 / (2.0 * s * s))?;
                    tape.exp(e)?
                }
            };
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        Ok(acc.expect("validated kernel has widths"))
    }

    fn gram(&self, a: &Tensor, b: &Tensor) -> Tensor {
        pairwise_sq_dist(a, b).map(|d2| self.eval_sq(d2))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Supervised `y` plus MMD on the latent.
    L2Mmd,
    /// Maximum likelihood on `[y, z]` with a narrow Gaussian around `y`.
    MlYz,
    /// Conditional maximum likelihood on `z`.
    MlZ,
    /// [`LossKind::MlYz`] plus a decoder reconstruction term.
    ArCycle,
    /// [`LossKind::L2Mmd`] plus a decoder reconstruction term.
    L2MmdCycle,
    /// Reconstruction plus weighted KL to the unit Gaussian.
    ElboCycle,
    /// Mixture negative log-likelihood.
    MdnNll,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::L2Mmd => "l2_mmd",
            LossKind::MlYz => "ml_yz",
            LossKind::MlZ => "ml_z",
            LossKind::ArCycle => "ar_cycle",
            LossKind::L2MmdCycle => "l2_mmd_cycle",
            LossKind::ElboCycle => "elbo_cycle",
            LossKind::MdnNll => "mdn_nll",
        }
    }
}

/// A loss with its weights. Unused fields are ignored by the kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    #[serde(default)]
    pub kernel: Kernel,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            alpha: if kind == LossKind::ElboCycle { 0.1 } else { 1.0 },
            beta: 1.0,
            sigma: 0.1,
            kernel: Kernel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), AdError> {
        let bad = |detail: &str| AdError::Domain {
            op: "loss_spec",
            detail: detail.into(),
        };
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(bad("weights must be non-negative"));
        }
        if !(self.sigma > 0.0) {
            return Err(bad("sigma must be positive"));
        }
        self.kernel.validate()
    }
}

fn check_same_shape(tape: &Tape, op: &'static str, a: Var, b: Var) -> Result<(), AdError> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(AdError::ShapeMismatch { op, lhs: sa, rhs: sb });
    }
    Ok(())
}

/// Batch mean of the squared row norm of `a`.
fn mean_sq_norm(tape: &mut Tape, a: Var) -> Result<Var, AdError> {
    let rows = tape.shape(a)[0] as f64;
    let sq = tape.square(a)?;
    let s = tape.sum(sq)?;
    tape.scale(s, 1.0 / rows)
}

/// Batch mean of `|y - y_gt|^2`.
pub fn l2(tape: &mut Tape, y: Var, y_gt: Var) -> Result<Var, AdError> {
    check_same_shape(tape, "l2", y, y_gt)?;
    let d = tape.sub(y, y_gt)?;
    mean_sq_norm(tape, d)
}

/// Biased (V-statistic) estimate of the squared MMD between the rows of
/// `a` and `b`.
pub fn mmd(tape: &mut Tape, a: Var, b: Var, kernel: &Kernel) -> Result<Var, AdError> {
    kernel.validate()?;
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa[1] != sb[1] || sa[0] == 0 || sb[0] == 0 {
        return Err(AdError::ShapeMismatch {
            op: "mmd",
            lhs: sa,
            rhs: sb,
        });
    }
    let daa = tape.pairwise_sq_dist(a, a)?;
    let dbb = tape.pairwise_sq_dist(b, b)?;
    let dab = tape.pairwise_sq_dist(a, b)?;
    let kaa = kernel.on_tape(tape, daa)?;
    let kbb = kernel.on_tape(tape, dbb)?;
    let kab = kernel.on_tape(tape, dab)?;
    let maa = tape.mean(kaa)?;
    let mbb = tape.mean(kbb)?;
    let mab = tape.mean(kab)?;
    let same = tape.add(maa, mbb)?;
    let cross = tape.scale(mab, 2.0)?;
    tape.sub(same, cross)
}

/// Value-only MMD, for evaluation.
pub fn mmd_value(a: &Tensor, b: &Tensor, kernel: &Kernel) -> Result<f64, AdError> {
    kernel.validate()?;
    if a.cols() != b.cols() || a.rows() == 0 || b.rows() == 0 {
        return Err(AdError::ShapeMismatch {
            op: "mmd",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mean = |t: Tensor| t.sum() / t.len() as f64;
    Ok(mean(kernel.gram(a, a)) + mean(kernel.gram(b, b)) - 2.0 * mean(kernel.gram(a, b)))
}

/// `quantile` of the MMD null distribution, estimated by recomputing the
/// statistic on `n_perm` random relabellings of the pooled sample.
pub fn mmd_permutation_threshold(
    a: &Tensor,
    b: &Tensor,
    kernel: &Kernel,
    n_perm: usize,
    quantile: f64,
    rng: &mut impl Rng,
) -> Result<f64, AdError> {
    let pooled = a.vstack(b)?;
    let gram = kernel.gram(&pooled, &pooled);
    let (n, na) = (pooled.rows(), a.rows());
    let nb = n - na;
    let g = gram.values();
    let mut labels: Vec<bool> = (0..n).map(|i| i < na).collect();
    let mut stats = Vec::with_capacity(n_perm);
    for _ in 0..n_perm {
        labels.shuffle(rng);
        let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let row = &g[i * n..(i + 1) * n];
            let (mut ra, mut rb) = (0.0, 0.0);
            for (j, &k) in row.iter().enumerate() {
                if labels[j] {
                    ra += k;
                } else {
                    rb += k;
                }
            }
            if labels[i] {
                saa += ra;
                sab += rb;
            } else {
                sbb += rb;
            }
        }
        let (fa, fb) = (na as f64, nb as f64);
        stats.push(saa / (fa * fa) + sbb / (fb * fb) - 2.0 * sab / (fa * fb));
    }
    stats.sort_by(f64::total_cmp);
    let idx = ((quantile * n_perm as f64).ceil() as usize).clamp(1, n_perm) - 1;
    Ok(stats[idx])
}

/// `L2(y) + alpha * MMD(z, z_gt)`.
pub fn loss_l2_mmd(
    tape: &mut Tape,
    y: Var,
    y_gt: Var,
    z: Var,
    z_gt: Var,
    alpha: f64,
    kernel: &Kernel,
) -> Result<Var, AdError> {
    let a = l2(tape, y, y_gt)?;
    if alpha == 0.0 {
        return Ok(a);
    }
    let m = mmd(tape, z, z_gt, kernel)?;
    let m = tape.scale(m, alpha)?;
    tape.add(a, m)
}

/// `mean(0.5 (|y - y_gt|^2 / sigma^2 + |z|^2) - log_det)`; `log_det` is `[n, 1]`.
pub fn loss_ml_yz(tape: &mut Tape, y: Var, y_gt: Var, z: Var, log_det: Var, sigma: f64) -> Result<Var, AdError> {
    if !(sigma > 0.0) {
        return Err(AdError::Domain {
            op: "loss_ml_yz",
            detail: format!("sigma must be positive, got {sigma}"),
        });
    }
    check_same_shape(tape, "loss_ml_yz", y, y_gt)?;
    let d = tape.sub(y, y_gt)?;
    let ey = mean_sq_norm(tape, d)?;
    let ey = tape.scale(ey, 0.5 / (sigma * sigma))?;
    let nll = loss_ml_z(tape, z, log_det)?;
    tape.add(ey, nll)
}

/// `mean(0.5 |z|^2 - log_det)`.
pub fn loss_ml_z(tape: &mut Tape, z: Var, log_det: Var) -> Result<Var, AdError> {
    let ez = mean_sq_norm(tape, z)?;
    let ez = tape.scale(ez, 0.5)?;
    let ld = tape.mean(log_det)?;
    tape.sub(ez, ld)
}

fn cycle(tape: &mut Tape, x: Var, x_hat: Var, weight: f64) -> Result<Var, AdError> {
    check_same_shape(tape, "cycle", x, x_hat)?;
    let d = tape.sub(x, x_hat)?;
    let c = mean_sq_norm(tape, d)?;
    tape.scale(c, weight)
}

/// [`loss_ml_yz`] plus `alpha * |x - x_hat|^2`.
#[allow(clippy::too_many_arguments)]
pub fn loss_ar_cycle(
    tape: &mut Tape,
    y: Var,
    y_gt: Var,
    z: Var,
    log_det: Var,
    x: Var,
    x_hat: Var,
    sigma: f64,
    alpha: f64,
) -> Result<Var, AdError> {
    let ml = loss_ml_yz(tape, y, y_gt, z, log_det, sigma)?;
    let c = cycle(tape, x, x_hat, alpha)?;
    tape.add(ml, c)
}

/// [`loss_l2_mmd`] plus `beta * |x - x_hat|^2`.
#[allow(clippy::too_many_arguments)]
pub fn loss_l2_mmd_cycle(
    tape: &mut Tape,
    y: Var,
    y_gt: Var,
    z: Var,
    z_gt: Var,
    x: Var,
    x_hat: Var,
    alpha: f64,
    beta: f64,
    kernel: &Kernel,
) -> Result<Var, AdError> {
    let base = loss_l2_mmd(tape, y, y_gt, z, z_gt, alpha, kernel)?;
    let c = cycle(tape, x, x_hat, beta)?;
    tape.add(base, c)
}

/// `|x - x_hat|^2 - 0.5 alpha (1 + log s - mu^2 - s)` with `s` the latent
/// variance, summed over latent dimensions and averaged over the batch.
/// Takes `log s` so the variance is positive by construction.
pub fn loss_elbo_cycle(tape: &mut Tape, x: Var, x_hat: Var, mu: Var, log_var: Var, alpha: f64) -> Result<Var, AdError> {
    check_same_shape(tape, "loss_elbo_cycle", mu, log_var)?;
    let rec = cycle(tape, x, x_hat, 1.0)?;
    let kl = kl_to_unit(tape, mu, log_var)?;
    let kl = tape.scale(kl, alpha)?;
    tape.add(rec, kl)
}

/// Batch mean of `KL(N(mu, s) || N(0, 1))` summed over dimensions.
pub fn kl_to_unit(tape: &mut Tape, mu: Var, log_var: Var) -> Result<Var, AdError> {
    let rows = tape.shape(mu)[0] as f64;
    let var = tape.exp(log_var)?;
    let mu2 = tape.square(mu)?;
    let t = tape.sub(log_var, mu2)?;
    let t = tape.sub(t, var)?;
    let t = tape.add_scalar(t, 1.0)?;
    let s = tape.sum(t)?;
    tape.scale(s, -0.5 / rows)
}

/// Per-row mixture parameters on the tape. Columns are dimension-major:
/// entry `(j, k)` of a `d x K` block lives in column `j * K + k`.
#[derive(Clone, Copy, Debug)]
pub struct GmmVars {
    pub components: usize,
    pub dim: usize,
    /// `[n, K]` unnormalized log weights.
    pub logits: Var,
    /// `[n, d K]`.
    pub means: Var,
    /// `[n, d K]`, strictly positive diagonal of the precision Cholesky factor.
    pub chol_diag: Var,
    /// `[n, d(d-1)/2 K]` strictly lower entries ordered `(1,0), (2,0), ...,
    /// (d-1,0), (2,1), ...`; `None` for diagonal precision.
    pub chol_off: Option<Var>,
}

/// Index of entry `(i, j)`, `i > j`, in the strictly-lower ordering of
/// [`GmmVars::chol_off`].
pub fn lower_index(dim: usize, i: usize, j: usize) -> usize {
    debug_assert!(i > j && i < dim);
    // columns before j hold (dim-1) + (dim-2) + ... + (dim-j) entries
    j * dim - j * (j + 1) / 2 + (i - j - 1)
}

/// Per-row mixture log density, `[n, 1]`. The precision is `L L^T` with
/// `L` lower triangular, so the quadratic form is `|L^T (x - mu)|^2` and
/// `log |P|^{1/2} = sum log L_jj`. Includes the `(2 pi)^{-d/2}` constant.
pub fn mdn_log_prob(tape: &mut Tape, g: &GmmVars, x: Var) -> Result<Var, AdError> {
    let (k, d) = (g.components, g.dim);
    let [n, xd] = tape.shape(x);
    if xd != d || tape.shape(g.logits) != [n, k] || tape.shape(g.means) != [n, d * k] {
        return Err(AdError::ShapeMismatch {
            op: "mdn_log_prob",
            lhs: tape.shape(x),
            rhs: tape.shape(g.means),
        });
    }
    let mut delta = Vec::with_capacity(d);
    let mut diag = Vec::with_capacity(d);
    for j in 0..d {
        let xj = tape.slice(x, j, j + 1)?;
        let mj = tape.slice(g.means, j * k, (j + 1) * k)?;
        delta.push(tape.sub(xj, mj)?);
        diag.push(tape.slice(g.chol_diag, j * k, (j + 1) * k)?);
    }
    // quadratic form: u_j = L_jj d_j + sum_{i>j} L_ij d_i
    let mut quad: Option<Var> = None;
    for j in 0..d {
        let mut u = tape.mul(diag[j], delta[j])?;
        if let Some(off) = g.chol_off {
            for (i, &di) in delta.iter().enumerate().skip(j + 1) {
                let c = lower_index(d, i, j);
                let l = tape.slice(off, c * k, (c + 1) * k)?;
                let t = tape.mul(l, di)?;
                u = tape.add(u, t)?;
            }
        }
        let u2 = tape.square(u)?;
        quad = Some(match quad {
            None => u2,
            Some(q) => tape.add(q, u2)?,
        });
    }
    let quad = quad.expect("dim >= 1");
    let log_diag = tape.log(g.chol_diag)?;
    // sum over j of log L_jj, per component: [n, dK] -> [n, K]
    let mut logdet = tape.slice(log_diag, 0, k)?;
    for j in 1..d {
        let s = tape.slice(log_diag, j * k, (j + 1) * k)?;
        logdet = tape.add(logdet, s)?;
    }
    let lse = tape.logsumexp(g.logits)?;
    let log_w = tape.sub(g.logits, lse)?;
    let half_quad = tape.scale(quad, -0.5)?;
    let comp = tape.add(half_quad, logdet)?;
    let comp = tape.add(comp, log_w)?;
    let comp = tape.add_scalar(comp, -0.5 * d as f64 * LN_2PI)?;
    tape.logsumexp(comp)
}

/// Batch mean negative log-likelihood under the predicted mixtures.
pub fn loss_mdn_nll(tape: &mut Tape, g: &GmmVars, x: Var) -> Result<Var, AdError> {
    let lp = mdn_log_prob(tape, g, x)?;
    let m = tape.mean(lp)?;
    tape.neg(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn value(tape: &Tape, v: Var) -> f64 {
        tape.value(v).item()
    }

    fn normal(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = stream(seed, "losses-test", 0);
        Tensor::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn l2_examples() {
        let mut t = Tape::new();
        let y = t.constant(Tensor::row(&[3.0, 4.0]));
        let z = t.constant(Tensor::row(&[0.0, 0.0]));
        let same = l2(&mut t, y, y).unwrap();
        let l = l2(&mut t, y, z).unwrap();
        assert_eq!(value(&t, same), 0.0);
        assert_eq!(value(&t, l), 25.0);
        // batch mean of per-row values
        let a = t.constant(Tensor::from_rows(&[[1.0, 0.0], [0.0, 3.0]]));
        let b = t.constant(Tensor::zeros(2, 2));
        let l = l2(&mut t, a, b).unwrap();
        assert_eq!(value(&t, l), 5.0);
    }

    #[test]
    fn mmd_identical_sets_is_exactly_zero() {
        let a = normal(64, 4, 1);
        for kernel in [
            Kernel::default(),
            Kernel::Gaussian {
                bandwidths: vec![0.5, 1.0],
            },
        ] {
            let mut t = Tape::new();
            let va = t.constant(a.clone());
            let vb = t.constant(a.clone());
            let m = mmd(&mut t, va, vb, &kernel).unwrap();
            assert_eq!(value(&t, m), 0.0);
            assert_eq!(mmd_value(&a, &a, &kernel).unwrap(), 0.0);
        }
    }

    #[test]
    fn mmd_singleton_expansion() {
        let k = Kernel::default();
        let (a, b) = ([0.3, -1.0], [1.1, 0.4]);
        let d2: f64 = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum();
        let expected = k.eval_sq(0.0) - 2.0 * k.eval_sq(d2) + k.eval_sq(0.0);
        let got = mmd_value(&Tensor::row(&a), &Tensor::row(&b), &k).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn mmd_tape_matches_value() {
        let (a, b) = (normal(30, 3, 2), normal(20, 3, 3));
        let k = Kernel::default();
        let mut t = Tape::new();
        let (va, vb) = (t.constant(a.clone()), t.constant(b.clone()));
        let m = mmd(&mut t, va, vb, &k).unwrap();
        assert!((value(&t, m) - mmd_value(&a, &b, &k).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn mmd_dimension_mismatch() {
        assert!(mmd_value(&normal(3, 2, 0), &normal(3, 3, 0), &Kernel::default()).is_err());
    }

    #[test]
    fn same_distribution_below_permutation_null() {
        let (a, b) = (normal(2000, 4, 10), normal(2000, 4, 11));
        let k = Kernel::default();
        let stat = mmd_value(&a, &b, &k).unwrap();
        let thr = mmd_permutation_threshold(&a, &b, &k, 200, 0.99, &mut stream(5, "perm", 0)).unwrap();
        assert!(stat < thr, "{stat} vs {thr}");
        // and a shifted distribution is detected
        let c = b.map(|v| v + 0.2);
        assert!(mmd_value(&a, &c, &k).unwrap() > thr);
    }

    #[test]
    fn l2_mmd_reduces_and_adds() {
        let (y, yg, z, zg) = (normal(8, 2, 1), normal(8, 2, 2), normal(8, 2, 3), normal(8, 2, 4));
        let k = Kernel::default();
        let mut t = Tape::new();
        let (y, yg, z, zg) = (t.constant(y), t.constant(yg), t.constant(z), t.constant(zg));
        let l = l2(&mut t, y, yg).unwrap();
        let m = mmd(&mut t, z, zg, &k).unwrap();
        let a0 = loss_l2_mmd(&mut t, y, yg, z, zg, 0.0, &k).unwrap();
        let a1 = loss_l2_mmd(&mut t, y, yg, z, zg, 1.0, &k).unwrap();
        assert_eq!(value(&t, a0), value(&t, l));
        assert_eq!(value(&t, a1), value(&t, l) + value(&t, m));
        // with the cycle term switched off the two agree
        let c0 = loss_l2_mmd_cycle(&mut t, y, yg, z, zg, y, yg, 1.0, 0.0, &k).unwrap();
        assert_eq!(value(&t, c0), value(&t, a1));
    }

    #[test]
    fn perfect_predictions_sit_at_null_level() {
        let k = Kernel::default();
        let (z, zg) = (normal(500, 2, 20), normal(500, 2, 21));
        let thr = mmd_permutation_threshold(&z, &zg, &k, 100, 0.99, &mut stream(6, "perm", 0)).unwrap();
        let mut t = Tape::new();
        let y = t.constant(normal(500, 2, 22));
        let (vz, vzg) = (t.constant(z), t.constant(zg));
        let x = t.constant(normal(500, 4, 23));
        let l = loss_l2_mmd(&mut t, y, y, vz, vzg, 1.0, &k).unwrap();
        let lc = loss_l2_mmd_cycle(&mut t, y, y, vz, vzg, x, x, 1.0, 1.0, &k).unwrap();
        assert!(value(&t, l) < thr);
        assert!(value(&t, lc) < thr);
    }

    #[test]
    fn cycle_weights_enter_linearly() {
        let k = Kernel::default();
        let mut t = Tape::new();
        let (y, yg, z, zg) = (
            t.constant(normal(10, 2, 1)),
            t.constant(normal(10, 2, 2)),
            t.constant(normal(10, 2, 3)),
            t.constant(normal(10, 2, 4)),
        );
        let (x, xh) = (t.constant(normal(10, 4, 5)), t.constant(normal(10, 4, 6)));
        let f = |t: &mut Tape, a: f64, b: f64| {
            let v = loss_l2_mmd_cycle(t, y, yg, z, zg, x, xh, a, b, &k).unwrap();
            t.value(v).item()
        };
        let base = f(&mut t, 0.0, 0.0);
        let (ma, mb) = (f(&mut t, 1.0, 0.0) - base, f(&mut t, 0.0, 1.0) - base);
        assert!((f(&mut t, 3.0, 2.0) - (base + 3.0 * ma + 2.0 * mb)).abs() < 1e-12);
    }

    #[test]
    fn ml_yz_examples() {
        let mut t = Tape::new();
        let y = t.constant(Tensor::row(&[0.2, 0.3]));
        let z = t.constant(Tensor::zeros(1, 2));
        let ld = t.constant(Tensor::zeros(1, 1));
        let l = loss_ml_yz(&mut t, y, y, z, ld, 0.1).unwrap();
        assert_eq!(value(&t, l), 0.0);
        assert!(loss_ml_yz(&mut t, y, y, z, ld, 0.0).is_err());
        let y0 = t.constant(Tensor::row(&[0.0, 0.0]));
        let mut prev = f64::NEG_INFINITY;
        for sigma in [1.0, 0.5, 0.1, 0.01] {
            let l = loss_ml_yz(&mut t, y, y0, z, ld, sigma).unwrap();
            assert!(value(&t, l) > prev);
            prev = value(&t, l);
        }
    }

    #[test]
    fn ar_cycle_reduces_to_ml_yz() {
        let mut t = Tape::new();
        let (y, yg, z) = (t.constant(normal(5, 2, 1)), t.constant(normal(5, 2, 2)), t.constant(normal(5, 2, 3)));
        let ld = t.constant(normal(5, 1, 4));
        let (x, xh) = (t.constant(normal(5, 4, 5)), t.constant(normal(5, 4, 6)));
        let ml = loss_ml_yz(&mut t, y, yg, z, ld, 0.1).unwrap();
        let a0 = loss_ar_cycle(&mut t, y, yg, z, ld, x, xh, 0.1, 0.0).unwrap();
        let same = loss_ar_cycle(&mut t, y, yg, z, ld, x, x, 0.1, 1.0).unwrap();
        assert_eq!(value(&t, a0), value(&t, ml));
        assert_eq!(value(&t, same), value(&t, ml));
    }

    /// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
    fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    l[i][j] = (a[i][i] - s).sqrt();
                } else {
                    l[i][j] = (a[i][j] - s) / l[j][j];
                }
            }
        }
        l
    }

    /// Inverse of a lower-triangular matrix.
    fn tri_inverse(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = l.len();
        let mut inv = vec![vec![0.0; n]; n];
        for c in 0..n {
            for i in c..n {
                let rhs = if i == c { 1.0 } else { 0.0 };
                let s: f64 = (c..i).map(|k| l[i][k] * inv[k][c]).sum();
                inv[i][c] = (rhs - s) / l[i][i];
            }
        }
        inv
    }

    #[test]
    fn ml_z_matches_closed_form_gaussian_nll() {
        // zero-mean correlated data; the optimal linear map z = A x has
        // A^T A = S^{-1} and loss d/2 + 0.5 log det S (constants dropped).
        let n = 4000;
        let raw = normal(n, 3, 30);
        let mix = [[1.0, 0.0, 0.0], [0.8, 0.6, 0.0], [-0.3, 0.5, 0.4]];
        let x = Tensor::from_fn(n, 3, |i, j| (0..3).map(|k| mix[j][k] * raw.get(i, k)).sum());
        let mut s = vec![vec![0.0; 3]; 3];
        for r in x.row_iter() {
            for a in 0..3 {
                for b in 0..3 {
                    s[a][b] += r[a] * r[b] / n as f64;
                }
            }
        }
        let l = cholesky(&s);
        let logdet_s: f64 = 2.0 * (0..3).map(|i| l[i][i].ln()).sum::<f64>();
        let closed = 1.5 + 0.5 * logdet_s;
        // A = L^{-1}; x A^T in row layout means the weight is A^T.
        let a = tri_inverse(&l);
        let w = Tensor::from_fn(3, 3, |i, j| a[j][i]);
        let logdet_a: f64 = (0..3).map(|i| a[i][i].abs().ln()).sum();
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let wv = t.constant(w);
        let z = t.matmul(xv, wv).unwrap();
        let ld = t.constant(Tensor::filled(n, 1, logdet_a));
        let loss = loss_ml_z(&mut t, z, ld).unwrap();
        assert!((value(&t, loss) - closed).abs() < 1e-10);

        // gradient descent from the identity converges to the same value
        use crate::autodiff::{AdamConfig, AdamState, ParamStore};
        let mut store = ParamStore::new();
        let wid = store.add("w", Tensor::identity(3));
        let mut adam = AdamState::new(
            &store,
            AdamConfig {
                lr: 1e-2,
                ..Default::default()
            },
        );
        let mut last = 0.0;
        for _ in 0..3000 {
            let mut t = Tape::new();
            let p = store.bind(&mut t);
            let xv = t.constant(x.clone());
            let z = t.matmul(xv, p[wid]).unwrap();
            // log|det W| via the tape-free value; its gradient W^{-T} is
            // supplied by hand below
            let wv = store.get(wid).clone();
            let det = det3(&wv);
            let ld = t.constant(Tensor::filled(n, 1, det.abs().ln()));
            let loss = loss_ml_z(&mut t, z, ld).unwrap();
            last = t.value(loss).item();
            let mut g = t.backward(loss).unwrap();
            let mut grads = store.collect_grads(&p, &mut g);
            let inv_t = inverse3(&wv).transpose();
            for (gv, iv) in grads[0].values_mut().iter_mut().zip(inv_t.values()) {
                *gv -= iv;
            }
            adam.step(&mut store, &grads).unwrap();
        }
        assert!((last - closed).abs() < 1e-3, "{last} vs {closed}");
    }

    fn det3(m: &Tensor) -> f64 {
        let g = |i, j| m.get(i, j);
        g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
            + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
    }

    fn inverse3(m: &Tensor) -> Tensor {
        let d = det3(m);
        let g = |i: usize, j: usize| m.get(i % 3, j % 3);
        // cofactor formula with cyclic indices
        Tensor::from_fn(3, 3, |i, j| {
            (g(j + 1, i + 1) * g(j + 2, i + 2) - g(j + 1, i + 2) * g(j + 2, i + 1)) / d
        })
    }

    #[test]
    fn ml_z_zero_at_origin() {
        let mut t = Tape::new();
        let z = t.constant(Tensor::zeros(3, 4));
        let ld = t.constant(Tensor::zeros(3, 1));
        let l = loss_ml_z(&mut t, z, ld).unwrap();
        assert_eq!(value(&t, l), 0.0);
    }

    #[test]
    fn elbo_vanishes_at_prior() {
        let mut t = Tape::new();
        let x = t.constant(normal(4, 4, 1));
        let mu = t.constant(Tensor::zeros(4, 2));
        let lv = t.constant(Tensor::zeros(4, 2));
        let l = loss_elbo_cycle(&mut t, x, x, mu, lv, 0.7).unwrap();
        assert_eq!(value(&t, l), 0.0);
    }

    fn unit_gmm(t: &mut Tape, mean: &[f64], diag: f64) -> GmmVars {
        GmmVars {
            components: 1,
            dim: mean.len(),
            logits: t.constant(Tensor::zeros(1, 1)),
            means: t.constant(Tensor::row(mean)),
            chol_diag: t.constant(Tensor::filled(1, mean.len(), diag)),
            chol_off: Some(t.constant(Tensor::zeros(1, mean.len() * (mean.len() - 1) / 2))),
        }
    }

    #[test]
    fn mdn_standard_normal_at_mean() {
        let mut t = Tape::new();
        let mu = [0.0; 4];
        let g = unit_gmm(&mut t, &mu, 1.0);
        let x = t.constant(Tensor::row(&mu));
        let nll = loss_mdn_nll(&mut t, &g, x).unwrap();
        assert!((value(&t, nll) - 2.0 * LN_2PI).abs() < 1e-14);
        // tighter precision at the mean lowers the NLL
        let tight = unit_gmm(&mut t, &mu, 2.0);
        let nll2 = loss_mdn_nll(&mut t, &tight, x).unwrap();
        assert!(value(&t, nll2) < value(&t, nll));
    }

    #[test]
    fn lower_index_enumerates_strict_lower_triangle() {
        let d = 4;
        let mut seen = Vec::new();
        for j in 0..d {
            for i in j + 1..d {
                seen.push(lower_index(d, i, j));
            }
        }
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn mdn_density_integrates_to_one_on_grid() {
        // three-component 2-D mixture with correlated precisions
        let (k, d) = (3, 2);
        let means = [[-1.0, 0.5], [0.8, -0.3], [0.2, 1.2]];
        let diag = [[1.4, 2.0], [0.9, 1.1], [2.5, 1.7]];
        let off = [0.8, -1.2, 0.3];
        let logits = [0.3, -0.2, 0.5];
        let step = 0.02;
        let ticks: Vec<f64> = (0..900).map(|i| -9.0 + step * (i as f64 + 0.5)).collect();
        let pts: Vec<[f64; 2]> = ticks.iter().flat_map(|&a| ticks.iter().map(move |&b| [a, b])).collect();
        let n = pts.len();
        let mut t = Tape::new();
        let g = GmmVars {
            components: k,
            dim: d,
            logits: t.constant(Tensor::from_fn(n, k, |_, c| logits[c])),
            means: t.constant(Tensor::from_fn(n, d * k, |_, col| means[col % k][col / k])),
            chol_diag: t.constant(Tensor::from_fn(n, d * k, |_, col| diag[col % k][col / k])),
            chol_off: Some(t.constant(Tensor::from_fn(n, k, |_, c| off[c]))),
        };
        let x = t.constant(Tensor::from_rows(&pts));
        let lp = mdn_log_prob(&mut t, &g, x).unwrap();
        let mass: f64 = t.value(lp).values().iter().map(|v| v.exp() * step * step).sum();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    proptest! {
        #[test]
        fn l2_is_translation_invariant(
            y in prop::collection::vec(-5.0f64..5.0, 6),
            g in prop::collection::vec(-5.0f64..5.0, 6),
            c in prop::collection::vec(-5.0f64..5.0, 2),
        ) {
            let shift = |v: &[f64]| Tensor::from_fn(3, 2, |i, j| v[2 * i + j] + c[j]);
            let base = |v: &[f64]| Tensor::from_fn(3, 2, |i, j| v[2 * i + j]);
            let mut t = Tape::new();
            let (a, b) = (t.constant(base(&y)), t.constant(base(&g)));
            let (sa, sb) = (t.constant(shift(&y)), t.constant(shift(&g)));
            let l0 = l2(&mut t, a, b).unwrap();
            let l1 = l2(&mut t, sa, sb).unwrap();
            prop_assert!((t.value(l0).item() - t.value(l1).item()).abs() < 1e-9);
        }

        #[test]
        fn mmd_is_non_negative(
            a in prop::collection::vec(-3.0f64..3.0, 2..40),
            b in prop::collection::vec(-3.0f64..3.0, 2..40),
            gaussian in any::<bool>(),
        ) {
            let ta = Tensor::from_fn(a.len() / 2, 2, |i, j| a[2 * i + j]);
            let tb = Tensor::from_fn(b.len() / 2, 2, |i, j| b[2 * i + j]);
            let k = if gaussian {
                Kernel::Gaussian { bandwidths: vec![0.3, 1.0] }
            } else {
                Kernel::default()
            };
            prop_assert!(mmd_value(&ta, &tb, &k).unwrap() >= -1e-12);
        }

        #[test]
        fn kl_is_non_negative(mu in -3.0f64..3.0, lv in -4.0f64..4.0) {
            let mut t = Tape::new();
            let m = t.constant(Tensor::scalar(mu));
            let l = t.constant(Tensor::scalar(lv));
            let kl = kl_to_unit(&mut t, m, l).unwrap();
            prop_assert!(t.value(kl).item() >= 0.0);
            if mu.abs() > 1e-6 || lv.abs() > 1e-6 {
                prop_assert!(t.value(kl).item() > 0.0);
            }
        }
    }
}
