use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dims, Model, ModelConfig, ModelError, ModelKind, TrainProgress};
use crate::autodiff::{AdamConfig, AdamState, Tensor};

const MAGIC: &[u8; 8] = b"IVBCKPT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressMeta {
    pub epoch: usize,
    pub step: u64,
    pub adam: AdamConfig,
    pub losses: Vec<f64>,
    pub orthogonality: Vec<f64>,
}

/// JSON header of a checkpoint file; the tensors follow as little-endian
/// `f64` in manifest order, then the optimizer moments if `progress` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub dims: Dims,
    pub width: usize,
    pub seed: u64,
    pub param_count: usize,
    pub trained: bool,
    pub tensors: Vec<TensorEntry>,
    pub progress: Option<ProgressMeta>,
}

/// A model plus optional training state, as stored on disk.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub progress: Option<TrainProgress>,
}

fn format_err(m: impl Into<String>) -> ModelError {
    ModelError::Format(m.into())
}

fn put(buf: &mut Vec<u8>, t: &Tensor) {
    for v in t.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    body: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, rows: usize, cols: usize) -> Result<Tensor, ModelError> {
        let len = rows * cols * 8;
        let end = self.pos + len;
        if end > self.body.len() {
            return Err(format_err("truncated tensor data"));
        }
        let vals = self.body[self.pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        self.pos = end;
        Tensor::new(rows, cols, vals).map_err(|e| format_err(e.to_string()))
    }
}

impl Checkpoint {
    pub fn new(model: Model, progress: Option<TrainProgress>) -> Self {
        Self { model, progress }
    }

    pub fn manifest(&self) -> Manifest {
        let m = &self.model;
        Manifest {
            kind: m.kind,
            config: m.config.clone(),
            dims: m.dims,
            width: m.width,
            seed: m.seed,
            param_count: m.param_count(),
            trained: m.trained,
            tensors: m
                .store
                .iter()
                .map(|(name, t, _)| TensorEntry {
                    name: name.to_string(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
            progress: self.progress.as_ref().map(|p| ProgressMeta {
                epoch: p.epoch,
                step: p.adam.step_count(),
                adam: p.adam.config,
                losses: p.losses.clone(),
                orthogonality: p.orthogonality.clone(),
            }),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), ModelError> {
        let header = serde_json::to_vec(&self.manifest()).map_err(|e| format_err(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::new();
        for (_, t, _) in self.model.store.iter() {
            put(&mut buf, t);
        }
        if let Some(p) = &self.progress {
            let (first, second) = p.adam.moments();
            for t in first.iter().chain(second) {
                put(&mut buf, t);
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Rebuilds the architecture from the manifest and overwrites every
    /// tensor by name; names and shapes must match exactly.
    pub fn read_from(mut r: impl Read) -> Result<Self, ModelError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(format_err("not a checkpoint file"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 26 {
            return Err(format_err("manifest too large"));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let man: Manifest = serde_json::from_slice(&header).map_err(|e| format_err(e.to_string()))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;

        let config = ModelConfig {
            width: Some(man.width),
            ..man.config.clone()
        };
        let mut model = Model::new(man.kind, man.dims, config, man.seed)?;
        model.config = man.config.clone();
        if model.store.len() != man.tensors.len() || model.param_count() != man.param_count {
            return Err(format_err(format!(
                "manifest lists {} tensors ({} parameters), architecture has {} ({})",
                man.tensors.len(),
                man.param_count,
                model.store.len(),
                model.param_count()
            )));
        }
        let mut cur = Cursor { body: &body, pos: 0 };
        for entry in &man.tensors {
            let id = model
                .store
                .find(&entry.name)
                .ok_or_else(|| format_err(format!("unknown tensor {:?}", entry.name)))?;
            let t = cur.take(entry.rows, entry.cols)?;
            if model.store.get(id).shape() != t.shape() {
                return Err(format_err(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    entry.name,
                    t.shape(),
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = t;
        }
        model.trained = man.trained;
        let progress = match &man.progress {
            None => None,
            Some(meta) => {
                let shapes: Vec<[usize; 2]> = model.store.iter().map(|(_, t, _)| t.shape()).collect();
                let mut read = || shapes.iter().map(|s| cur.take(s[0], s[1])).collect::<Result<Vec<_>, _>>();
                let first = read()?;
                let second = read()?;
                let adam = AdamState::from_parts(meta.adam, meta.step, first, second)?;
                Some(TrainProgress {
                    epoch: meta.epoch,
                    adam,
                    losses: meta.losses.clone(),
                    orthogonality: meta.orthogonality.clone(),
                })
            }
        };
        if cur.pos != body.len() {
            return Err(format_err(format!("{} trailing bytes", body.len() - cur.pos)));
        }
        Ok(Self { model, progress })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
