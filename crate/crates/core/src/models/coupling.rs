use rand::seq::SliceRandom;
use rand::Rng;

use super::{ModelConfig, LEAKY_SLOPE};
use crate::autodiff::{AdError, Activation, Bound, Mlp, ParamStore, Tape, Var};

/// One affine coupling: the active columns are scaled and shifted by
/// functions of the passive columns (and the condition, if any).
#[derive(Clone, Debug)]
struct Coupling {
    passive: (usize, usize),
    active: (usize, usize),
    scale: Mlp,
    shift: Mlp,
}

/// Stack of coupling blocks. Each block is two couplings with swapped
/// roles followed by a fixed random permutation. With `cond_dim > 0` every
/// subnet also sees the condition (conditional flow).
#[derive(Clone, Debug)]
pub struct FlowNet {
    dim: usize,
    cond_dim: usize,
    clamp: f64,
    couplings: Vec<Coupling>,
    perms: Vec<Vec<usize>>,
    inv_perms: Vec<Vec<usize>>,
}

fn soft_clamp(tape: &mut Tape, raw: Var, c: f64) -> Result<Var, AdError> {
    let r = tape.scale(raw, 1.0 / c)?;
    let t = tape.tanh(r)?;
    tape.scale(t, c)
}

impl FlowNet {
    pub fn new(
        store: &mut ParamStore,
        dim: usize,
        cond_dim: usize,
        cfg: &ModelConfig,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let split = dim / 2;
        let act = Activation::LeakyRelu(LEAKY_SLOPE);
        let mut couplings = Vec::new();
        let mut perms = Vec::new();
        for b in 0..cfg.coupling_blocks {
            for (h, (passive, active)) in [((0, split), (split, dim)), ((split, dim), (0, split))].into_iter().enumerate() {
                let inp = passive.1 - passive.0 + cond_dim;
                let out = active.1 - active.0;
                let name = format!("flow.{b}.{h}");
                let dims = [inp, width, width, out];
                couplings.push(Coupling {
                    passive,
                    active,
                    scale: Mlp::new(store, &format!("{name}.s"), &dims, act, true, rng),
                    shift: Mlp::new(store, &format!("{name}.t"), &dims, act, true, rng),
                });
            }
            let mut perm: Vec<usize> = (0..dim).collect();
            perm.shuffle(rng);
            perms.push(perm);
        }
        let inv_perms = perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; dim];
                for (i, &j) in p.iter().enumerate() {
                    inv[j] = i;
                }
                inv
            })
            .collect();
        Self {
            dim,
            cond_dim,
            clamp: cfg.clamp,
            couplings,
            perms,
            inv_perms,
        }
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.perms
    }

    fn check_cond(&self, tape: &Tape, cond: Option<Var>) -> Result<(), AdError> {
        let ok = match cond {
            None => self.cond_dim == 0,
            Some(c) => self.cond_dim > 0 && tape.shape(c)[1] == self.cond_dim,
        };
        if ok {
            Ok(())
        } else {
            Err(AdError::Domain {
                op: "flow",
                detail: format!("expected a condition of width {}", self.cond_dim),
            })
        }
    }

    fn subnets(&self, c: &Coupling, tape: &mut Tape, p: &Bound, pas: Var, cond: Option<Var>) -> Result<(Var, Var), AdError> {
        let inp = match cond {
            Some(y) => tape.concat(&[pas, y])?,
            None => pas,
        };
        let raw = c.scale.forward(tape, p, inp)?;
        let log_s = soft_clamp(tape, raw, self.clamp)?;
        let t = c.shift.forward(tape, p, inp)?;
        Ok((log_s, t))
    }

    fn assemble(tape: &mut Tape, c: &Coupling, pas: Var, act: Var) -> Result<Var, AdError> {
        if c.passive.0 < c.active.0 {
            tape.concat(&[pas, act])
        } else {
            tape.concat(&[act, pas])
        }
    }

    /// `x -> out` with the per-row log-determinant `[n, 1]`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var, cond: Option<Var>) -> Result<(Var, Var), AdError> {
        self.check_cond(tape, cond)?;
        let mut u = x;
        let mut log_det: Option<Var> = None;
        for (k, c) in self.couplings.iter().enumerate() {
            let pas = tape.slice(u, c.passive.0, c.passive.1)?;
            let act = tape.slice(u, c.active.0, c.active.1)?;
            let (log_s, t) = self.subnets(c, tape, p, pas, cond)?;
            let s = tape.exp(log_s)?;
            let scaled = tape.mul(act, s)?;
            let act = tape.add(scaled, t)?;
            u = Self::assemble(tape, c, pas, act)?;
            let ld = tape.row_sum(log_s)?;
            log_det = Some(match log_det {
                None => ld,
                Some(acc) => tape.add(acc, ld)?,
            });
            if k % 2 == 1 {
                u = tape.gather(u, &self.perms[k / 2])?;
            }
        }
        let log_det = match log_det {
            Some(l) => l,
            None => {
                let n = tape.shape(x)[0];
                tape.constant(crate::autodiff::Tensor::zeros(n, 1))
            }
        };
        debug_assert_eq!(tape.shape(u)[1], self.dim);
        Ok((u, log_det))
    }

    /// Exact inverse of [`forward`](Self::forward).
    pub fn inverse(&self, tape: &mut Tape, p: &Bound, out: Var, cond: Option<Var>) -> Result<Var, AdError> {
        self.check_cond(tape, cond)?;
        let mut u = out;
        for (k, c) in self.couplings.iter().enumerate().rev() {
            if k % 2 == 1 {
                u = tape.gather(u, &self.inv_perms[k / 2])?;
            }
            let pas = tape.slice(u, c.passive.0, c.passive.1)?;
            let act = tape.slice(u, c.active.0, c.active.1)?;
            let (log_s, t) = self.subnets(c, tape, p, pas, cond)?;
            let shifted = tape.sub(act, t)?;
            let neg = tape.neg(log_s)?;
            let inv_s = tape.exp(neg)?;
            let act = tape.mul(shifted, inv_s)?;
            u = Self::assemble(tape, c, pas, act)?;
        }
        Ok(u)
    }
}
