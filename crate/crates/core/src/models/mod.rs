//! The architecture zoo behind one interface: build to a parameter budget,
//! train on paired `(x, y)` data, sample the posterior `p(x | y*)`.

mod autoencoder;
mod autoregressive;
mod checkpoint;
mod coupling;
mod iresnet;
mod invauto;
mod mdn;
mod train;

pub use autoencoder::{Autoencoder, Cvae};
pub use autoregressive::{ArDirection, ArFlow, Made};
pub use checkpoint::{Checkpoint, Manifest};
pub use coupling::FlowNet;
pub use iresnet::IResNet;
pub use invauto::{inverse_leaky_relu, InvAuto, INVAUTO_SLOPE};
pub use mdn::{Gmm, MdnNet};
pub use train::{train, train_from, Schedule, TrainProgress, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::losses::{LossKind, LossSpec};
use crate::problems::SampleSet;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("model has not been trained")]
    Untrained,
    #[error("condition has {got} entries, model expects {expected}")]
    ConditionMismatch { expected: usize, got: usize },
    #[error("{model} cannot be trained with the {loss} loss")]
    IncompatibleLoss { model: &'static str, loss: &'static str },
    #[error("fixed-point inversion did not converge in {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },
    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: AdError,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Inn,
    InnL2Mmd,
    Cinn,
    IafDecoder,
    MafDecoder,
    IResNet,
    InvAuto,
    Autoencoder,
    Cvae,
    Mdn,
    /// MDN with diagonal precision matrices, as an ablation.
    MdnDiagonal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::Inn,
        ModelKind::InnL2Mmd,
        ModelKind::Cinn,
        ModelKind::IafDecoder,
        ModelKind::MafDecoder,
        ModelKind::IResNet,
        ModelKind::InvAuto,
        ModelKind::Autoencoder,
        ModelKind::Cvae,
        ModelKind::Mdn,
        ModelKind::MdnDiagonal,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Inn => "inn",
            ModelKind::InnL2Mmd => "inn_l2_mmd",
            ModelKind::Cinn => "cinn",
            ModelKind::IafDecoder => "iaf_decoder",
            ModelKind::MafDecoder => "maf_decoder",
            ModelKind::IResNet => "iresnet",
            ModelKind::InvAuto => "invauto",
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::Cvae => "cvae",
            ModelKind::Mdn => "mdn",
            ModelKind::MdnDiagonal => "mdn_diagonal",
        }
    }

    /// Row label in reports.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Inn => "INN",
            ModelKind::InnL2Mmd => "INN (L2 + MMD)",
            ModelKind::Cinn => "cINN",
            ModelKind::IafDecoder => "IAF + Decoder",
            ModelKind::MafDecoder => "MAF + Decoder",
            ModelKind::IResNet => "iResNet",
            ModelKind::InvAuto => "InvAuto",
            ModelKind::Autoencoder => "Autoencoder",
            ModelKind::Cvae => "cVAE",
            ModelKind::Mdn => "MDN",
            ModelKind::MdnDiagonal => "MDN (diagonal)",
        }
    }

    /// The published pairing of architecture and objective.
    pub fn default_loss(self) -> LossKind {
        match self {
            ModelKind::Inn => LossKind::MlYz,
            ModelKind::InnL2Mmd | ModelKind::IResNet => LossKind::L2Mmd,
            ModelKind::Cinn => LossKind::MlZ,
            ModelKind::IafDecoder | ModelKind::MafDecoder => LossKind::ArCycle,
            ModelKind::InvAuto | ModelKind::Autoencoder => LossKind::L2MmdCycle,
            ModelKind::Cvae => LossKind::ElboCycle,
            ModelKind::Mdn | ModelKind::MdnDiagonal => LossKind::MdnNll,
        }
    }

    pub fn accepts(self, loss: LossKind) -> bool {
        use LossKind::*;
        match self {
            ModelKind::Inn | ModelKind::InnL2Mmd => matches!(loss, MlYz | L2Mmd),
            ModelKind::Cinn => loss == MlZ,
            ModelKind::IafDecoder | ModelKind::MafDecoder => loss == ArCycle,
            ModelKind::IResNet => loss == L2Mmd,
            ModelKind::InvAuto | ModelKind::Autoencoder => matches!(loss, L2MmdCycle | L2Mmd),
            ModelKind::Cvae => loss == ElboCycle,
            ModelKind::Mdn | ModelKind::MdnDiagonal => loss == MdnNll,
        }
    }

    /// Whether the objective has a maximum-likelihood term.
    pub fn ml_loss(self) -> bool {
        matches!(self.default_loss(), LossKind::MlYz | LossKind::MlZ | LossKind::ArCycle | LossKind::MdnNll)
    }

    /// Whether the objective supervises the forward prediction of `y`.
    pub fn y_supervised(self) -> bool {
        !matches!(self, ModelKind::Cinn | ModelKind::Cvae | ModelKind::Mdn | ModelKind::MdnDiagonal)
    }

    /// Latent dimension for an `x_dim -> y_dim` problem.
    pub fn z_dim(self, dims: Dims) -> usize {
        match self {
            ModelKind::Cinn | ModelKind::Mdn | ModelKind::MdnDiagonal => dims.x,
            _ => dims.x - dims.y,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown model {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub x: usize,
    pub y: usize,
}

/// Architecture hyperparameters. The hidden width is fitted to `budget`
/// unless `width` is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub budget: usize,
    pub width: Option<usize>,
    pub coupling_blocks: usize,
    /// Soft clamp for coupling and autoregressive log-scales.
    pub clamp: f64,
    pub ar_layers: usize,
    pub iresnet_blocks: usize,
    pub lipschitz: f64,
    pub power_iters: usize,
    pub inverse_tol: f64,
    pub inverse_max_iter: usize,
    pub mdn_components: usize,
    /// Fraction of training over which the cVAE KL weight ramps up.
    pub kl_anneal: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            budget: 100_000,
            width: None,
            coupling_blocks: 8,
            clamp: 2.0,
            ar_layers: 4,
            iresnet_blocks: 12,
            lipschitz: 0.9,
            power_iters: 5,
            inverse_tol: 1e-6,
            inverse_max_iter: 100,
            mdn_components: 10,
            kl_anneal: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.budget == 0 && self.width.is_none() {
            return bad("budget or width must be set");
        }
        if self.coupling_blocks == 0 || self.ar_layers == 0 || self.iresnet_blocks == 0 || self.mdn_components == 0 {
            return bad("block and component counts must be positive");
        }
        if !(self.lipschitz > 0.0 && self.lipschitz < 1.0) {
            return bad("lipschitz must lie in (0, 1)");
        }
        if !(self.clamp > 0.0) || !(self.inverse_tol > 0.0) || self.power_iters == 0 {
            return bad("clamp, inverse_tol and power_iters must be positive");
        }
        if !(0.0..=1.0).contains(&self.kl_anneal) {
            return bad("kl_anneal must lie in [0, 1]");
        }
        Ok(())
    }
}

pub(crate) const LEAKY_SLOPE: f64 = 0.01;

/// Inputs for one loss evaluation. `x` is standardized, `y` centred.
pub struct Batch<'a> {
    pub x: &'a Tensor,
    pub y: &'a Tensor,
    /// Fraction of training completed, in `[0, 1]`.
    pub progress: f64,
}

pub(crate) fn standard_normal(n: usize, d: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

#[derive(Clone, Debug)]
pub(crate) enum Arch {
    Flow(FlowNet),
    Ar(ArFlow),
    IResNet(IResNet),
    InvAuto(InvAuto),
    Ae(Autoencoder),
    Cvae(Cvae),
    Mdn(MdnNet),
}

impl Arch {
    fn build(
        kind: ModelKind,
        dims: Dims,
        cfg: &ModelConfig,
        width: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        match kind {
            ModelKind::Inn | ModelKind::InnL2Mmd => Arch::Flow(FlowNet::new(store, dims.x, 0, cfg, width, rng)),
            ModelKind::Cinn => Arch::Flow(FlowNet::new(store, dims.x, dims.y, cfg, width, rng)),
            ModelKind::IafDecoder => Arch::Ar(ArFlow::new(store, dims.x, ArDirection::Inverse, cfg, width, rng)),
            ModelKind::MafDecoder => Arch::Ar(ArFlow::new(store, dims.x, ArDirection::Masked, cfg, width, rng)),
            ModelKind::IResNet => Arch::IResNet(IResNet::new(store, dims.x, cfg, width, rng)),
            ModelKind::InvAuto => Arch::InvAuto(InvAuto::new(store, dims.x, width, rng)),
            ModelKind::Autoencoder => Arch::Ae(Autoencoder::new(store, dims.x, width, rng)),
            ModelKind::Cvae => Arch::Cvae(Cvae::new(store, dims, kind.z_dim(dims), width, rng)),
            ModelKind::Mdn => Arch::Mdn(MdnNet::new(store, dims, cfg.mdn_components, true, width, rng)),
            ModelKind::MdnDiagonal => Arch::Mdn(MdnNet::new(store, dims, cfg.mdn_components, false, width, rng)),
        }
    }
}

/// Hidden width whose trainable parameter count is closest to `budget`.
pub fn fit_width(kind: ModelKind, dims: Dims, cfg: &ModelConfig) -> usize {
    let count = |w: usize| {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Arch::build(kind, dims, cfg, w, &mut store, &mut rng);
        store.trainable_count()
    };
    let (mut lo, mut hi) = (1usize, 4096usize);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if count(mid) < cfg.budget {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo > 1 && cfg.budget.abs_diff(count(lo - 1)) < cfg.budget.abs_diff(count(lo)) {
        lo - 1
    } else {
        lo
    }
}

/// Column-wise affine normalization of `x` and centring of `y`, fitted on
/// the training data and stored as buffers.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Normalizer {
    x_mean: ParamId,
    x_std: ParamId,
    y_mean: ParamId,
}

impl Normalizer {
    fn new(store: &mut ParamStore, dims: Dims) -> Self {
        Self {
            x_mean: store.add_buffer("norm.x_mean", Tensor::zeros(1, dims.x)),
            x_std: store.add_buffer("norm.x_std", Tensor::filled(1, dims.x, 1.0)),
            y_mean: store.add_buffer("norm.y_mean", Tensor::zeros(1, dims.y)),
        }
    }

    fn fit(&self, store: &mut ParamStore, xs: &Tensor, ys: &Tensor) {
        let n = xs.rows() as f64;
        let col_mean = |t: &Tensor| {
            Tensor::from_fn(1, t.cols(), |_, j| t.row_iter().map(|r| r[j]).sum::<f64>() / t.rows() as f64)
        };
        let xm = col_mean(xs);
        let xs_std = Tensor::from_fn(1, xs.cols(), |_, j| {
            let m = xm.get(0, j);
            let v = xs.row_iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        });
        *store.get_mut(self.y_mean) = col_mean(ys);
        *store.get_mut(self.x_mean) = xm;
        *store.get_mut(self.x_std) = xs_std;
    }

    fn x_in(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let (m, s) = (store.get(self.x_mean), store.get(self.x_std));
        Tensor::from_fn(x.rows(), x.cols(), |i, j| (x.get(i, j) - m.get(0, j)) / s.get(0, j))
    }

    fn x_out(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let (m, s) = (store.get(self.x_mean), store.get(self.x_std));
        Tensor::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * s.get(0, j) + m.get(0, j))
    }

    fn y_in(&self, store: &ParamStore, y: &Tensor) -> Tensor {
        let m = store.get(self.y_mean);
        Tensor::from_fn(y.rows(), y.cols(), |i, j| y.get(i, j) - m.get(0, j))
    }
}

/// A model of one [`ModelKind`] with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub dims: Dims,
    pub width: usize,
    pub seed: u64,
    pub(crate) store: ParamStore,
    pub(crate) arch: Arch,
    norm: Normalizer,
    pub(crate) trained: bool,
}

impl Model {
    /// Builds the architecture with weights drawn from `seed`.
    pub fn new(kind: ModelKind, dims: Dims, config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if dims.y == 0 || dims.y >= dims.x {
            return Err(ModelError::InvalidConfig(format!(
                "need 0 < y_dim < x_dim, got {} and {}",
                dims.y, dims.x
            )));
        }
        let width = config.width.unwrap_or_else(|| fit_width(kind, dims, &config));
        let mut store = ParamStore::new();
        let norm = Normalizer::new(&mut store, dims);
        let mut rng = crate::seed::stream(seed, "init", 0);
        let arch = Arch::build(kind, dims, &config, width, &mut store, &mut rng);
        Ok(Self {
            kind,
            config,
            dims,
            width,
            seed,
            store,
            arch,
            norm,
            trained: false,
        })
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Marks the model usable for sampling without training; for tests.
    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub(crate) fn fit_normalizer(&mut self, xs: &Tensor, ys: &Tensor) {
        self.norm.fit(&mut self.store, xs, ys);
    }

    pub fn normalize_x(&self, x: &Tensor) -> Tensor {
        self.norm.x_in(&self.store, x)
    }

    pub fn denormalize_x(&self, x: &Tensor) -> Tensor {
        self.norm.x_out(&self.store, x)
    }

    pub fn center_y(&self, y: &Tensor) -> Tensor {
        self.norm.y_in(&self.store, y)
    }

    /// Work done before each optimizer step (power iterations).
    pub(crate) fn pre_step(&mut self) {
        if let Arch::IResNet(net) = &self.arch {
            net.update_power_vectors(&mut self.store, self.config.power_iters);
        }
    }

    /// The training objective on normalized data. Stochastic terms (latent
    /// reference samples, reparameterization noise) are drawn from `rng`.
    pub fn loss(
        &self,
        tape: &mut Tape,
        p: &Bound,
        batch: &Batch,
        spec: &LossSpec,
        rng: &mut impl Rng,
    ) -> Result<Var, ModelError> {
        if !self.kind.accepts(spec.kind) {
            return Err(ModelError::IncompatibleLoss {
                model: self.kind.label(),
                loss: spec.kind.name(),
            });
        }
        spec.validate()?;
        let n = batch.x.rows();
        let x = tape.constant(batch.x.clone());
        let y = tape.constant(batch.y.clone());
        let yd = self.dims.y;
        let zd = self.kind.z_dim(self.dims);
        let z_ref = |tape: &mut Tape, rng: &mut _| tape.constant(standard_normal(n, zd, rng));
        let loss = match (&self.arch, spec.kind) {
            (Arch::Flow(net), LossKind::MlZ) => {
                let (z, ld) = net.forward(tape, p, x, Some(y))?;
                crate::losses::loss_ml_z(tape, z, ld)?
            }
            (Arch::Flow(net), kind) => {
                let (out, ld) = net.forward(tape, p, x, None)?;
                let yp = tape.slice(out, 0, yd)?;
                let z = tape.slice(out, yd, self.dims.x)?;
                if kind == LossKind::MlYz {
                    crate::losses::loss_ml_yz(tape, yp, y, z, ld, spec.sigma)?
                } else {
                    let zr = z_ref(tape, rng);
                    crate::losses::loss_l2_mmd(tape, yp, y, z, zr, spec.alpha, &spec.kernel)?
                }
            }
            (Arch::Ar(net), _) => {
                let (out, ld) = net.forward(tape, p, x)?;
                let yp = tape.slice(out, 0, yd)?;
                let z = tape.slice(out, yd, self.dims.x)?;
                let xh = net.decode(tape, p, out)?;
                crate::losses::loss_ar_cycle(tape, yp, y, z, ld, x, xh, spec.sigma, spec.alpha)?
            }
            (Arch::IResNet(net), _) => {
                let out = net.forward(tape, p, x)?;
                let yp = tape.slice(out, 0, yd)?;
                let z = tape.slice(out, yd, self.dims.x)?;
                let zr = z_ref(tape, rng);
                crate::losses::loss_l2_mmd(tape, yp, y, z, zr, spec.alpha, &spec.kernel)?
            }
            (Arch::InvAuto(_) | Arch::Ae(_), kind) => {
                let (out, xh) = match &self.arch {
                    Arch::InvAuto(net) => {
                        let out = net.encode(tape, p, x)?;
                        (out, net.decode(tape, p, out)?)
                    }
                    Arch::Ae(net) => {
                        let out = net.encode(tape, p, x)?;
                        (out, net.decode(tape, p, out)?)
                    }
                    _ => unreachable!(),
                };
                let yp = tape.slice(out, 0, yd)?;
                let z = tape.slice(out, yd, self.dims.x)?;
                let zr = z_ref(tape, rng);
                let beta = if kind == LossKind::L2Mmd { 0.0 } else { spec.beta };
                crate::losses::loss_l2_mmd_cycle(tape, yp, y, z, zr, x, xh, spec.alpha, beta, &spec.kernel)?
            }
            (Arch::Cvae(net), _) => {
                let (mu, log_var) = net.encode(tape, p, x, y)?;
                let eps = tape.constant(standard_normal(n, zd, rng));
                let half = tape.scale(log_var, 0.5)?;
                let sd = tape.exp(half)?;
                let noise = tape.mul(sd, eps)?;
                let z = tape.add(mu, noise)?;
                let xh = net.decode(tape, p, z, y)?;
                let ramp = if self.config.kl_anneal > 0.0 {
                    (batch.progress / self.config.kl_anneal).min(1.0)
                } else {
                    1.0
                };
                crate::losses::loss_elbo_cycle(tape, x, xh, mu, log_var, spec.alpha * ramp)?
            }
            (Arch::Mdn(net), _) => {
                let g = net.predict(tape, p, y)?;
                crate::losses::loss_mdn_nll(tape, &g, x)?
            }
        };
        Ok(loss)
    }

    /// Draws `n` samples from the model's posterior for observation `y_star`,
    /// in the original parameter units.
    pub fn sample_posterior(&self, y_star: &[f64], n: usize, rng: &mut impl Rng) -> Result<SampleSet, ModelError> {
        if !self.trained {
            return Err(ModelError::Untrained);
        }
        if y_star.len() != self.dims.y {
            return Err(ModelError::ConditionMismatch {
                expected: self.dims.y,
                got: y_star.len(),
            });
        }
        if n == 0 {
            return Ok(SampleSet::from_model(self.id(), y_star, Tensor::zeros(0, self.dims.x)));
        }
        let y = self.center_y(&Tensor::from_fn(n, self.dims.y, |_, j| y_star[j]));
        let xs = self.sample_normalized(&y, rng)?;
        Ok(SampleSet::from_model(self.id(), y_star, self.denormalize_x(&xs)))
    }

    /// Posterior samples in normalized coordinates, one per row of the
    /// centred conditions `y`.
    pub fn sample_normalized(&self, y: &Tensor, rng: &mut impl Rng) -> Result<Tensor, ModelError> {
        let n = y.rows();
        let zd = self.kind.z_dim(self.dims);
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let yv = tape.constant(y.clone());
        let out = match &self.arch {
            Arch::Flow(net) => {
                let z = tape.constant(standard_normal(n, zd, rng));
                if net.cond_dim() > 0 {
                    net.inverse(&mut tape, &p, z, Some(yv))?
                } else {
                    let u = tape.concat(&[yv, z])?;
                    net.inverse(&mut tape, &p, u, None)?
                }
            }
            Arch::Ar(net) => {
                let z = tape.constant(standard_normal(n, zd, rng));
                let u = tape.concat(&[yv, z])?;
                net.decode(&mut tape, &p, u)?
            }
            Arch::IResNet(net) => {
                let z = standard_normal(n, zd, rng);
                let u = Tensor::from_fn(n, self.dims.x, |i, j| if j < self.dims.y { y.get(i, j) } else { z.get(i, j - self.dims.y) });
                let x = net.inverse(&self.store, &u, self.config.inverse_tol, self.config.inverse_max_iter)?;
                return Ok(x.0);
            }
            Arch::InvAuto(net) => {
                let z = tape.constant(standard_normal(n, zd, rng));
                let u = tape.concat(&[yv, z])?;
                net.decode(&mut tape, &p, u)?
            }
            Arch::Ae(net) => {
                let z = tape.constant(standard_normal(n, zd, rng));
                let u = tape.concat(&[yv, z])?;
                net.decode(&mut tape, &p, u)?
            }
            Arch::Cvae(net) => {
                let z = tape.constant(standard_normal(n, zd, rng));
                net.decode(&mut tape, &p, z, yv)?
            }
            Arch::Mdn(net) => {
                let g = net.predict(&mut tape, &p, yv)?;
                let gmm = Gmm::from_tape(&tape, &g);
                return Ok(gmm.sample_rows(rng));
            }
        };
        Ok(tape.value(out).clone())
    }

    /// `[y, z]` (or `z` for the conditional flow) for normalized inputs,
    /// plus the log-determinant where the architecture has one.
    pub fn encode_normalized(&self, x: &Tensor, y: Option<&Tensor>) -> Result<(Tensor, Option<Tensor>), ModelError> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let (out, ld) = match &self.arch {
            Arch::Flow(net) => {
                let cond = match (net.cond_dim(), y) {
                    (0, _) => None,
                    (_, Some(y)) => Some(tape.constant(y.clone())),
                    (_, None) => {
                        return Err(ModelError::ConditionMismatch {
                            expected: net.cond_dim(),
                            got: 0,
                        })
                    }
                };
                let (o, l) = net.forward(&mut tape, &p, xv, cond)?;
                (o, Some(l))
            }
            Arch::Ar(net) => {
                let (o, l) = net.forward(&mut tape, &p, xv)?;
                (o, Some(l))
            }
            Arch::IResNet(net) => (net.forward(&mut tape, &p, xv)?, None),
            Arch::InvAuto(net) => (net.encode(&mut tape, &p, xv)?, None),
            Arch::Ae(net) => (net.encode(&mut tape, &p, xv)?, None),
            Arch::Cvae(_) | Arch::Mdn(_) => {
                return Err(ModelError::InvalidConfig(format!("{} has no encoder to [y, z]", self.kind.label())))
            }
        };
        Ok((tape.value(out).clone(), ld.map(|l| tape.value(l).clone())))
    }

    /// Inverse of [`Model::encode_normalized`] for the architectures that
    /// have one: coupling flows exactly, the i-ResNet by fixed-point
    /// iteration to `tol`, the invertible autoencoder through its
    /// transposed weights (exact only for orthogonal weights).
    pub fn invert_normalized(&self, out: &Tensor, y: Option<&Tensor>, tol: f64) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let ov = tape.constant(out.clone());
        let x = match &self.arch {
            Arch::Flow(net) => {
                let cond = match (net.cond_dim(), y) {
                    (0, _) => None,
                    (_, Some(y)) => Some(tape.constant(y.clone())),
                    (_, None) => {
                        return Err(ModelError::ConditionMismatch {
                            expected: net.cond_dim(),
                            got: 0,
                        })
                    }
                };
                net.inverse(&mut tape, &p, ov, cond)?
            }
            Arch::IResNet(net) => return Ok(net.inverse(&self.store, out, tol, self.config.inverse_max_iter.max(1000))?.0),
            Arch::InvAuto(net) => net.decode(&mut tape, &p, ov)?,
            _ => {
                return Err(ModelError::InvalidConfig(format!(
                    "{} has no closed-form inverse",
                    self.kind.label()
                )))
            }
        };
        Ok(tape.value(x).clone())
    }

    /// Tracked orthogonality defect of the invertible autoencoder.
    pub fn orthogonality_defect(&self) -> Option<f64> {
        match &self.arch {
            Arch::InvAuto(net) => Some(net.orthogonality_defect(&self.store)),
            _ => None,
        }
    }
}
