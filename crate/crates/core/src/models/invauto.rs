use rand::Rng;

use crate::autodiff::{AdError, Bound, Linear, ParamStore, Tape, Tensor, Var};

/// LeakyReLU slope. A power of two, so that `x * SLOPE` and its inverse
/// `y / SLOPE` are exact in floating point; with 0.1 distinct inputs can
/// round to the same output and no inverse recovers both.
pub const INVAUTO_SLOPE: f64 = 0.125;

/// Inverse of `leaky_relu(x, slope)` for `slope > 0`.
pub fn inverse_leaky_relu(y: f64, slope: f64) -> f64 {
    if y >= 0.0 {
        y
    } else {
        y / slope
    }
}

/// Weight matrices with invertible LeakyReLUs. The encoder applies `W`,
/// the decoder the transposed weights and inverse nonlinearities in
/// reverse order; the cycle loss drives the weights towards orthogonality.
#[derive(Clone, Debug)]
pub struct InvAuto {
    layers: Vec<Linear>,
}

impl InvAuto {
    pub fn new(store: &mut ParamStore, dim: usize, width: usize, rng: &mut impl Rng) -> Self {
        let dims = [dim, width, width, width, dim];
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("invauto.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn encode(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AdError> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(tape, p, h)?;
            if i < last {
                h = tape.leaky_relu(h, INVAUTO_SLOPE)?;
            }
        }
        Ok(h)
    }

    pub fn decode(&self, tape: &mut Tape, p: &Bound, u: Var) -> Result<Var, AdError> {
        let last = self.layers.len() - 1;
        let mut h = u;
        for (i, l) in self.layers.iter().enumerate().rev() {
            if i < last {
                h = tape.leaky_relu(h, 1.0 / INVAUTO_SLOPE)?;
            }
            let shifted = tape.sub(h, p[l.bias])?;
            let wt = tape.transpose(p[l.weight])?;
            h = tape.matmul(shifted, wt)?;
        }
        Ok(h)
    }

    /// Sum over layers of `|G - I|_F`, where `G` is the Gram matrix of the
    /// weight in its smaller dimension.
    pub fn orthogonality_defect(&self, store: &ParamStore) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let w = store.get(l.weight);
                let g = if w.rows() <= w.cols() {
                    w.matmul(&w.transpose())
                } else {
                    w.transpose().matmul(w)
                }
                .expect("square Gram");
                let eye = Tensor::identity(g.rows());
                g.values()
                    .iter()
                    .zip(eye.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}
