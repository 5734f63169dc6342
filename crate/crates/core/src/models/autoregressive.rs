use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, LEAKY_SLOPE};
use crate::autodiff::{AdError, Activation, Bound, Linear, Mlp, ParamStore, Tape, Tensor, Var};

/// Masked MLP whose outputs `(mu_i, a_i)` depend only on inputs `< i`.
#[derive(Clone, Debug)]
pub struct Made {
    dim: usize,
    layers: [Linear; 3],
    masks: [Tensor; 3],
    clamp: f64,
}

impl Made {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, width: usize, clamp: f64, rng: &mut impl Rng) -> Self {
        // input i has degree i + 1; hidden degrees cycle through 1..dim-1
        let hidden: Vec<usize> = (0..width).map(|k| k % (dim - 1).max(1) + 1).collect();
        let m1 = Tensor::from_fn(dim, width, |i, k| f64::from(u8::from(hidden[k] > i)));
        let m2 = Tensor::from_fn(width, width, |a, b| f64::from(u8::from(hidden[b] >= hidden[a])));
        let m3 = Tensor::from_fn(width, 2 * dim, |k, o| f64::from(u8::from(o % dim + 1 > hidden[k])));
        let layers = [
            Linear::new(store, &format!("{name}.0"), dim, width, rng),
            Linear::new(store, &format!("{name}.1"), width, width, rng),
            Linear::zeros(store, &format!("{name}.2"), width, 2 * dim),
        ];
        Self {
            dim,
            layers,
            masks: [m1, m2, m3],
            clamp,
        }
    }

    /// `(mu, a)`, each `[n, dim]`, with `a` soft-clamped.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<(Var, Var), AdError> {
        let mut h = x;
        for (i, (layer, mask)) in self.layers.iter().zip(&self.masks).enumerate() {
            let m = tape.constant(mask.clone());
            h = layer.forward_masked(tape, p, h, m)?;
            if i < 2 {
                h = tape.leaky_relu(h, LEAKY_SLOPE)?;
            }
        }
        let mu = tape.slice(h, 0, self.dim)?;
        let raw = tape.slice(h, self.dim, 2 * self.dim)?;
        let r = tape.scale(raw, 1.0 / self.clamp)?;
        let r = tape.tanh(r)?;
        let a = tape.scale(r, self.clamp)?;
        Ok((mu, a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArDirection {
    /// Density direction is one pass: `u = (x - mu(x)) exp(-a(x))`.
    Masked,
    /// Sampling direction is one pass: `x = u exp(a(u)) + mu(u)`; the
    /// density direction is solved one dimension at a time.
    Inverse,
}

/// Stack of autoregressive layers mapping `x -> [y, z]`, with column
/// reversal between layers, plus a free-form decoder `[y, z] -> x`.
#[derive(Clone, Debug)]
pub struct ArFlow {
    dim: usize,
    direction: ArDirection,
    layers: Vec<Made>,
    decoder: Mlp,
}

impl ArFlow {
    pub fn new(
        store: &mut ParamStore,
        dim: usize,
        direction: ArDirection,
        cfg: &ModelConfig,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..cfg.ar_layers)
            .map(|l| Made::new(store, &format!("ar.{l}"), dim, width, cfg.clamp, rng))
            .collect();
        let decoder = Mlp::new(
            store,
            "decoder",
            &[dim, width, width, width, dim],
            Activation::LeakyRelu(LEAKY_SLOPE),
            false,
            rng,
        );
        Self {
            dim,
            direction,
            layers,
            decoder,
        }
    }

    pub fn layers(&self) -> &[Made] {
        &self.layers
    }

    pub fn direction(&self) -> ArDirection {
        self.direction
    }

    #[cfg(test)]
    pub(crate) fn with_layers(&self, layers: Vec<Made>) -> Self {
        Self {
            layers,
            ..self.clone()
        }
    }

    fn layer_forward(&self, made: &Made, tape: &mut Tape, p: &Bound, x: Var) -> Result<(Var, Var), AdError> {
        let n = tape.shape(x)[0];
        match self.direction {
            ArDirection::Masked => {
                let (mu, a) = made.forward(tape, p, x)?;
                let d = tape.sub(x, mu)?;
                let na = tape.neg(a)?;
                let e = tape.exp(na)?;
                let u = tape.mul(d, e)?;
                let ld = tape.row_sum(na)?;
                Ok((u, ld))
            }
            ArDirection::Inverse => {
                let mut cols: Vec<Var> = Vec::with_capacity(self.dim);
                let mut ld: Option<Var> = None;
                for i in 0..self.dim {
                    let mut parts = cols.clone();
                    parts.push(tape.constant(Tensor::zeros(n, self.dim - i)));
                    let cur = tape.concat(&parts)?;
                    let (mu, a) = made.forward(tape, p, cur)?;
                    let xi = tape.slice(x, i, i + 1)?;
                    let mi = tape.slice(mu, i, i + 1)?;
                    let ai = tape.slice(a, i, i + 1)?;
                    let na = tape.neg(ai)?;
                    let d = tape.sub(xi, mi)?;
                    let e = tape.exp(na)?;
                    cols.push(tape.mul(d, e)?);
                    ld = Some(match ld {
                        None => na,
                        Some(acc) => tape.add(acc, na)?,
                    });
                }
                Ok((tape.concat(&cols)?, ld.expect("dim >= 1")))
            }
        }
    }

    /// `x -> [y, z]` with the per-row log-determinant `[n, 1]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<(Var, Var), AdError> {
        let reverse: Vec<usize> = (0..self.dim).rev().collect();
        let mut u = x;
        let mut ld: Option<Var> = None;
        for (l, made) in self.layers.iter().enumerate() {
            if l > 0 {
                u = tape.gather(u, &reverse)?;
            }
            let (next, l_ld) = self.layer_forward(made, tape, p, u)?;
            u = next;
            ld = Some(match ld {
                None => l_ld,
                Some(acc) => tape.add(acc, l_ld)?,
            });
        }
        Ok((u, ld.expect("at least one layer")))
    }

    pub fn decode(&self, tape: &mut Tape, p: &Bound, u: Var) -> Result<Var, AdError> {
        self.decoder.forward(tape, p, u)
    }
}
