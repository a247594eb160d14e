//! Binary checkpoints of trained estimators.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "UCATECKP"
//! version      u32      CHECKPOINT_VERSION
//! header_len   u32
//! header       JSON     {"kind", "outcome", "input_dim", "config"}
//! best_epoch   u64
//! epochs_run   u64
//! train_loss   u64 count, then f64 values
//! valid_loss   u64 count, then f64 values
//! tensors      u64 count, then per tensor:
//!                rank u32, dims u64 × rank, data f64 × prod(dims)
//! ```
//!
//! Tensors are stored in [`TrainedEstimator::params`] order. Loading rebuilds
//! the architecture from the header and checks every shape against it.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::OutcomeKind;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::training::TrainingCurve;
use super::{
    CevaeModel, Estimator, EstimatorKind, TLearnerModel, TarnetModel, TrainConfig, TrainedEstimator,
};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UCATECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: EstimatorKind,
    outcome: OutcomeKind,
    input_dim: usize,
    config: TrainConfig,
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, v: &[f64]) {
    put_u64(buf, v.len() as u64);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn save_checkpoint(path: &Path, model: &TrainedEstimator, config: &TrainConfig) -> Result<()> {
    fs::write(path, encode(model, config)?).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode(model: &TrainedEstimator, config: &TrainConfig) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        kind: model.kind,
        outcome: model.outcome,
        input_dim: model.input_dim(),
        config: config.clone(),
    })
    .map_err(|e| Error::Schema(format!("checkpoint header: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    put_u64(&mut buf, model.curve.best_epoch as u64);
    put_u64(&mut buf, model.curve.epochs_run as u64);
    put_f64s(&mut buf, &model.curve.train_loss);
    put_f64s(&mut buf, &model.curve.validation_loss);
    let params = model.params();
    put_u64(&mut buf, params.len() as u64);
    for t in params {
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            put_u64(&mut buf, d as u64);
        }
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
    path: &'a Path,
}

impl Reader<'_> {
    fn bad(&self, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }

    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.cur
            .read_exact(&mut b)
            .map_err(|_| self.bad(format!("truncated while reading {what}")))?;
        Ok(b)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(what)?))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let remaining = self.cur.get_ref().len() as u64 - self.cur.position();
        if (count as u64).saturating_mul(8) > remaining {
            return Err(self.bad(format!("truncated while reading {what}")));
        }
        (0..count)
            .map(|_| Ok(f64::from_le_bytes(self.bytes(what)?)))
            .collect()
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        usize::try_from(n).map_err(|_| self.bad(format!("{what} count {n} out of range")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainedEstimator, TrainConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub(crate) fn decode(bytes: &[u8], path: &Path) -> Result<(TrainedEstimator, TrainConfig)> {
    let mut r = Reader {
        cur: Cursor::new(bytes),
        path,
    };
    if &r.bytes::<8>("magic")? != CHECKPOINT_MAGIC {
        return Err(r.bad("not a checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.bad(format!("unsupported checkpoint version {version}")));
    }
    let header_len = r.u32("header length")? as usize;
    let start = r.cur.position() as usize;
    let header_bytes = bytes
        .get(start..start + header_len)
        .ok_or_else(|| r.bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| r.bad(format!("header: {e}")))?;
    r.cur.set_position((start + header_len) as u64);

    let best_epoch = r.len("best epoch")?;
    let epochs_run = r.len("epochs run")?;
    let n = r.len("train loss")?;
    let train_loss = r.f64s(n, "train loss")?;
    let n = r.len("validation loss")?;
    let validation_loss = r.f64s(n, "validation loss")?;

    let mut model = skeleton(&header)?;
    let count = r.len("tensor count")?;
    {
        let mut params = params_mut(&mut model);
        if count != params.len() {
            return Err(r.bad(format!("expected {} tensors, found {count}", params.len())));
        }
        for (i, slot) in params.iter_mut().enumerate() {
            let rank = r.u32("tensor rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.len("tensor dim"))
                .collect::<Result<Vec<_>>>()?;
            if shape != slot.shape() {
                return Err(r.bad(format!(
                    "tensor {i}: expected shape {:?}, found {shape:?}",
                    slot.shape()
                )));
            }
            let data = r.f64s(slot.len(), "tensor data")?;
            slot.data_mut().copy_from_slice(&data);
        }
    }
    if (r.cur.position() as usize) != bytes.len() {
        return Err(r.bad("trailing bytes after last tensor"));
    }
    Ok((
        TrainedEstimator {
            kind: header.kind,
            outcome: header.outcome,
            model,
            curve: TrainingCurve {
                train_loss,
                validation_loss,
                best_epoch,
                epochs_run,
            },
        },
        header.config,
    ))
}

/// Freshly initialised model with the header's architecture.
fn skeleton(h: &Header) -> Result<Estimator> {
    let mut rng = Rng::new(0);
    Ok(match h.kind {
        EstimatorKind::TLearner => Estimator::TLearner(TLearnerModel::new(
            h.input_dim,
            h.outcome,
            &h.config,
            &mut rng,
        )?),
        EstimatorKind::Tarnet | EstimatorKind::CfrMmd | EstimatorKind::Dragonnet => {
            Estimator::Tarnet(TarnetModel::new(
                h.kind,
                h.input_dim,
                h.outcome,
                &h.config,
                &mut rng,
            )?)
        }
        EstimatorKind::Cevae => Estimator::Cevae(CevaeModel::new(
            h.input_dim,
            h.outcome,
            &h.config,
            &mut rng,
        )?),
    })
}

fn params_mut(model: &mut Estimator) -> Vec<&mut Tensor> {
    use super::training::Trainable;
    match model {
        Estimator::TLearner(m) => m.params_mut(),
        Estimator::Tarnet(m) => m.params_mut(),
        Estimator::Cevae(m) => Trainable::params_mut(m),
    }
}
