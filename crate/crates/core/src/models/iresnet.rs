use rand::Rng;

use super::{ModelConfig, ModelError, LEAKY_SLOPE};
use crate::autodiff::{power_iteration, AdError, Bound, Linear, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug)]
struct SnLinear {
    lin: Linear,
    /// Right singular vector estimate, `[1, out]`.
    v: ParamId,
}

/// Residual blocks `x + r(x)` whose branches are spectrally normalized to
/// Lipschitz constant below `c`, inverted by fixed-point iteration.
#[derive(Clone, Debug)]
pub struct IResNet {
    dim: usize,
    c: f64,
    blocks: Vec<[SnLinear; 3]>,
}

fn leaky(t: &Tensor) -> Tensor {
    t.map(|x| if x >= 0.0 { x } else { LEAKY_SLOPE * x })
}

impl IResNet {
    pub fn new(store: &mut ParamStore, dim: usize, cfg: &ModelConfig, width: usize, rng: &mut impl Rng) -> Self {
        let blocks = (0..cfg.iresnet_blocks)
            .map(|b| {
                let dims = [(dim, width), (width, width), (width, dim)];
                let layers: Vec<SnLinear> = dims
                    .iter()
                    .enumerate()
                    .map(|(k, &(i, o))| {
                        let name = format!("res.{b}.{k}");
                        let lin = Linear::new(store, &name, i, o, rng);
                        let mut v: Vec<f64> = (0..o).map(|_| rng.random::<f64>() - 0.5).collect();
                        power_iteration(store.get(lin.weight), &mut v, 50);
                        let v = store.add_buffer(format!("{name}.v"), Tensor::row(&v));
                        SnLinear { lin, v }
                    })
                    .collect();
                <[SnLinear; 3]>::try_from(layers).expect("three layers")
            })
            .collect();
        Self {
            dim,
            c: cfg.lipschitz,
            blocks,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.c
    }

    /// Advances every power iteration by `iters` rounds.
    pub fn update_power_vectors(&self, store: &mut ParamStore, iters: usize) {
        for layer in self.blocks.iter().flatten() {
            let w = store.get(layer.lin.weight).clone();
            let mut v = store.get(layer.v).values().to_vec();
            power_iteration(&w, &mut v, iters);
            store.get_mut(layer.v).values_mut().copy_from_slice(&v);
        }
    }

    fn normalized_weight(&self, tape: &mut Tape, p: &Bound, layer: &SnLinear) -> Result<Var, AdError> {
        let w = p[layer.lin.weight];
        let v = tape.value(p[layer.v]).transpose();
        let v = tape.constant(v);
        let wv = tape.matmul(w, v)?;
        let sq = tape.square(wv)?;
        let s = tape.sum(sq)?;
        let sigma = tape.sqrt(s)?;
        if tape.value(sigma).item() <= self.c {
            return Ok(w);
        }
        let inv = tape.recip(sigma)?;
        let factor = tape.scale(inv, self.c)?;
        tape.mul(w, factor)
    }

    fn branch(&self, tape: &mut Tape, p: &Bound, block: &[SnLinear; 3], x: Var) -> Result<Var, AdError> {
        let mut h = x;
        for (i, layer) in block.iter().enumerate() {
            let w = self.normalized_weight(tape, p, layer)?;
            let m = tape.matmul(h, w)?;
            h = tape.add(m, p[layer.lin.bias])?;
            if i < 2 {
                h = tape.leaky_relu(h, LEAKY_SLOPE)?;
            }
        }
        Ok(h)
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AdError> {
        let mut h = x;
        for block in &self.blocks {
            let r = self.branch(tape, p, block, h)?;
            h = tape.add(h, r)?;
        }
        Ok(h)
    }

    /// Normalized `(weight, bias)` per layer, as used by the forward pass.
    pub fn effective_weights(&self, store: &ParamStore) -> Vec<[(Tensor, Tensor); 3]> {
        let mut tape = Tape::new();
        let p = store.bind_frozen(&mut tape);
        self.blocks
            .iter()
            .map(|block| {
                block.clone().map(|layer| {
                    let w = self.normalized_weight(&mut tape, &p, &layer).expect("finite weights");
                    (tape.value(w).clone(), store.get(layer.lin.bias).clone())
                })
            })
            .collect()
    }

    fn branch_value(weights: &[(Tensor, Tensor); 3], x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for (i, (w, b)) in weights.iter().enumerate() {
            let mut m = h.matmul(w).expect("shapes fixed at build time");
            let bv = b.values();
            let cols = m.cols();
            for (k, v) in m.values_mut().iter_mut().enumerate() {
                *v += bv[k % cols];
            }
            h = if i < 2 { leaky(&m) } else { m };
        }
        h
    }

    /// Inverts block by block with `x_{k+1} = u - r(x_k)`, stopping once the
    /// largest per-row step is below `tol`. Returns the inputs and the total
    /// number of iterations.
    pub fn inverse(&self, store: &ParamStore, out: &Tensor, tol: f64, max_iter: usize) -> Result<(Tensor, usize), ModelError> {
        debug_assert_eq!(out.cols(), self.dim);
        let weights = self.effective_weights(store);
        let mut u = out.clone();
        let mut total = 0;
        for w in weights.iter().rev() {
            let mut x = u.clone();
            let mut converged = false;
            let mut step = f64::INFINITY;
            for _ in 0..max_iter {
                let r = Self::branch_value(w, &x);
                let next = Tensor::from_fn(u.rows(), u.cols(), |i, j| u.get(i, j) - r.get(i, j));
                step = next
                    .row_iter()
                    .zip(x.row_iter())
                    .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                x = next;
                total += 1;
                if step < tol {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(ModelError::NonConvergence {
                    iters: total,
                    residual: step,
                });
            }
            u = x;
        }
        Ok((u, total))
    }
}
