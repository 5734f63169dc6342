use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Batch, Model, ModelError};
use crate::autodiff::{AdError, AdamConfig, AdamState, Tape, Tensor};
use crate::losses::LossSpec;
use crate::seed::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 256,
            adam: AdamConfig::default(),
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(ModelError::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to continue training where it stopped.
#[derive(Clone, Debug)]
pub struct TrainProgress {
    /// Completed epochs.
    pub epoch: usize,
    pub adam: AdamState,
    /// Mean training loss per completed epoch.
    pub losses: Vec<f64>,
    /// Orthogonality defect after each epoch (invertible autoencoder only).
    pub orthogonality: Vec<f64>,
}

impl TrainProgress {
    pub fn new(model: &Model, schedule: &Schedule) -> Self {
        Self {
            epoch: 0,
            adam: AdamState::new(&model.store, schedule.adam),
            losses: Vec::new(),
            orthogonality: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub progress: TrainProgress,
    pub steps: u64,
    pub seconds: f64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.progress.losses.last().copied()
    }
}

/// Trains from scratch for `schedule.epochs` epochs.
pub fn train(model: &mut Model, xs: &Tensor, ys: &Tensor, spec: &LossSpec, schedule: &Schedule) -> Result<TrainReport, ModelError> {
    let progress = TrainProgress::new(model, schedule);
    train_from(model, xs, ys, spec, schedule, progress, schedule.epochs)
}

/// Continues from `progress` up to (not including) epoch `until`. Epoch `e`
/// shuffles and draws noise from its own stream, so stopping and resuming
/// reproduces an uninterrupted run exactly.
pub fn train_from(
    model: &mut Model,
    xs: &Tensor,
    ys: &Tensor,
    spec: &LossSpec,
    schedule: &Schedule,
    mut progress: TrainProgress,
    until: usize,
) -> Result<TrainReport, ModelError> {
    schedule.validate()?;
    spec.validate()?;
    if !model.kind.accepts(spec.kind) {
        return Err(ModelError::IncompatibleLoss {
            model: model.kind.label(),
            loss: spec.kind.name(),
        });
    }
    if xs.rows() != ys.rows() || xs.cols() != model.dims.x || ys.cols() != model.dims.y || xs.rows() == 0 {
        return Err(ModelError::InvalidConfig(format!(
            "training data {:?} / {:?} does not match model dims {:?}",
            xs.shape(),
            ys.shape(),
            model.dims
        )));
    }
    if progress.epoch == 0 {
        model.fit_normalizer(xs, ys);
    }
    let xn = model.normalize_x(xs);
    let yn = model.center_y(ys);
    let n = xs.rows();
    let bs = schedule.batch_size.min(n);
    let per_epoch = n.div_ceil(bs);
    let total = (schedule.epochs * per_epoch) as f64;
    let start = Instant::now();
    let steps0 = progress.adam.step_count();
    let until = until.min(schedule.epochs);

    while progress.epoch < until {
        let e = progress.epoch;
        let mut rng = stream(model.seed, "train-epoch", e as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, idx) in order.chunks(bs).enumerate() {
            let diverged = |source: AdError| ModelError::Diverged { epoch: e, batch: b, source };
            model.pre_step();
            let bx = xn.select_rows(idx);
            let by = yn.select_rows(idx);
            let batch = Batch {
                x: &bx,
                y: &by,
                progress: (e * per_epoch + b) as f64 / total,
            };
            let mut tape = Tape::new();
            let p = model.store.bind(&mut tape);
            let loss = match model.loss(&mut tape, &p, &batch, spec, &mut rng) {
                Ok(l) => l,
                Err(ModelError::Ad(err)) => return Err(diverged(err)),
                Err(err) => return Err(err),
            };
            sum += tape.value(loss).item();
            let mut grads = tape.backward(loss).map_err(diverged)?;
            let grads = model.store.collect_grads(&p, &mut grads);
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged(AdError::NonFinite { op: "gradient" }));
            }
            progress.adam.step(&mut model.store, &grads).map_err(diverged)?;
        }
        progress.losses.push(sum / per_epoch as f64);
        if let Some(d) = model.orthogonality_defect() {
            progress.orthogonality.push(d);
        }
        progress.epoch += 1;
    }
    if progress.epoch >= schedule.epochs {
        model.trained = true;
    }
    Ok(TrainReport {
        steps: progress.adam.step_count() - steps0,
        seconds: start.elapsed().as_secs_f64(),
        progress,
    })
}
