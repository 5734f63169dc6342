use rand::Rng;

use super::{Dims, LEAKY_SLOPE};
use crate::autodiff::{AdError, Activation, Bound, Mlp, ParamStore, Tape, Var};

/// Unconstrained encoder/decoder pair: `x -> [y, z] -> x`.
#[derive(Clone, Debug)]
pub struct Autoencoder {
    encoder: Mlp,
    decoder: Mlp,
}

impl Autoencoder {
    pub fn new(store: &mut ParamStore, dim: usize, width: usize, rng: &mut impl Rng) -> Self {
        let act = Activation::LeakyRelu(LEAKY_SLOPE);
        let dims = [dim, width, width, width, dim];
        Self {
            encoder: Mlp::new(store, "encoder", &dims, act, false, rng),
            decoder: Mlp::new(store, "decoder", &dims, act, false, rng),
        }
    }

    pub fn encode(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AdError> {
        self.encoder.forward(tape, p, x)
    }

    pub fn decode(&self, tape: &mut Tape, p: &Bound, u: Var) -> Result<Var, AdError> {
        self.decoder.forward(tape, p, u)
    }
}

/// Conditional VAE: `q(z | x, y)` is a diagonal Gaussian, the decoder maps
/// `(z, y) -> x`.
#[derive(Clone, Debug)]
pub struct Cvae {
    z_dim: usize,
    encoder: Mlp,
    decoder: Mlp,
}

impl Cvae {
    pub fn new(store: &mut ParamStore, dims: Dims, z_dim: usize, width: usize, rng: &mut impl Rng) -> Self {
        let act = Activation::LeakyRelu(LEAKY_SLOPE);
        Self {
            z_dim,
            encoder: Mlp::new(store, "encoder", &[dims.x + dims.y, width, width, 2 * z_dim], act, false, rng),
            decoder: Mlp::new(store, "decoder", &[z_dim + dims.y, width, width, width, dims.x], act, false, rng),
        }
    }

    /// `(mu, log_var)` of the approximate posterior over `z`.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, x: Var, y: Var) -> Result<(Var, Var), AdError> {
        let inp = tape.concat(&[x, y])?;
        let h = self.encoder.forward(tape, p, inp)?;
        let mu = tape.slice(h, 0, self.z_dim)?;
        let log_var = tape.slice(h, self.z_dim, 2 * self.z_dim)?;
        Ok((mu, log_var))
    }

    pub fn decode(&self, tape: &mut Tape, p: &Bound, z: Var, y: Var) -> Result<Var, AdError> {
        let inp = tape.concat(&[z, y])?;
        self.decoder.forward(tape, p, inp)
    }
}
