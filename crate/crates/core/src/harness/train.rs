use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{dataset_tensors, mse_loss, nmse, HarnessError, RunConfig};
use crate::channel::ChannelDataset;
use crate::model::Network;
use crate::nn::{AdamConfig, AdamState, Checkpoint, Layer, Mode, Parameterized, Tensor};
use crate::rng::{indexed_rng, Stream};

/// Prefix of the checkpoint pseudo-entry recording training progress.
pub const TRAIN_ENTRY_PREFIX: &str = "@train:";
const ADAM_M_PREFIX: &str = "adam_m/";
const ADAM_V_PREFIX: &str = "adam_v/";
/// Batch size used for validation and test inference.
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn from_run(cfg: &RunConfig) -> Self {
        TrainConfig {
            batch_size: cfg.train.batch_size,
            epochs: cfg.train.epochs,
            adam: AdamConfig {
                learning_rate: cfg.train.learning_rate,
                ..AdamConfig::default()
            },
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nmse_db: f64,
    pub wall_seconds: f64,
}

/// Optimiser position to continue from.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Last completed epoch.
    pub epoch: usize,
    pub adam: AdamState<f32>,
}

impl TrainState {
    /// Reads the progress entry and Adam moments written by [`train`].
    pub fn from_checkpoint(ck: &Checkpoint, adam: AdamConfig) -> Result<Self, HarnessError> {
        let meta = ck
            .entries
            .iter()
            .find_map(|e| e.name.strip_prefix(TRAIN_ENTRY_PREFIX))
            .ok_or_else(|| HarnessError::Config("checkpoint has no training progress entry".into()))?;
        let field = |key: &str| -> Result<u64, HarnessError> {
            meta.split(',')
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| HarnessError::Config(format!("training entry lacks {key}")))
        };
        let mut state = AdamState::new(adam);
        state.step = field("adam_step")?;
        for e in &ck.entries {
            if let Some(name) = e.name.strip_prefix(ADAM_M_PREFIX) {
                state.m.insert(name.to_string(), e.data.clone());
            } else if let Some(name) = e.name.strip_prefix(ADAM_V_PREFIX) {
                state.v.insert(name.to_string(), e.data.clone());
            }
        }
        Ok(TrainState {
            epoch: field("epoch")? as usize,
            adam: state,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights, descriptor, progress and optimiser state at the best epoch.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Epoch of the retained weights (the starting epoch if none improved).
    pub best_epoch: usize,
    pub best_val_nmse_db: f64,
    pub initial_val_nmse_db: f64,
}

fn snapshot(net: &mut Network<f32>, epoch: usize, adam: &AdamState<f32>) -> Checkpoint {
    let mut ck = net.to_checkpoint();
    ck.push(
        format!("{TRAIN_ENTRY_PREFIX}epoch={epoch},adam_step={}", adam.step),
        &[0],
        Vec::new(),
    );
    for (name, m) in &adam.m {
        ck.push(format!("{ADAM_M_PREFIX}{name}"), &[m.len()], m.clone());
    }
    for (name, v) in &adam.v {
        ck.push(format!("{ADAM_V_PREFIX}{name}"), &[v.len()], v.clone());
    }
    ck
}

fn gather(src: &Tensor<f32>, idx: &[usize]) -> Result<Tensor<f32>, HarnessError> {
    let per = src.len() / src.shape()[0];
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        data.extend_from_slice(&src.data()[i * per..(i + 1) * per]);
    }
    let mut shape = src.shape().to_vec();
    shape[0] = idx.len();
    Ok(Tensor::from_vec(&shape, data)?)
}

/// Validation NMSE in dB with the network in inference mode.
pub fn evaluate_nmse_db(net: &mut Network<f32>, x: &Tensor<f32>, y: &Tensor<f32>) -> Result<f64, HarnessError> {
    let pred = net.predict_batched(x, EVAL_BATCH)?;
    Ok(nmse(&pred, y)?.mean_db())
}

/// Writes the training log header.
pub fn write_log_header(log: &mut dyn Write) -> std::io::Result<()> {
    writeln!(log, "epoch,train_loss,val_nmse_db,wall_seconds")
}

/// Mini-batch Adam on the MSE loss with seeded shuffling.
///
/// After every epoch the validation NMSE is measured; the weights with the
/// lowest value (including the starting weights) are kept, loaded back into
/// `net` and returned as a checkpoint. One CSV row per epoch is written to
/// `log` as soon as the epoch finishes.
pub fn train(
    net: &mut Network<f32>,
    train_set: &ChannelDataset,
    val_set: &ChannelDataset,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome, HarnessError> {
    let m = net.architecture().antennas();
    for (what, ds) in [("training set", train_set), ("validation set", val_set)] {
        if ds.antennas != m {
            return Err(HarnessError::Mismatch {
                what,
                expected: m,
                actual: ds.antennas,
            });
        }
        if ds.is_empty() {
            return Err(HarnessError::Config(format!("{what} is empty")));
        }
    }
    if cfg.batch_size == 0 || cfg.batch_size > train_set.len() {
        return Err(HarnessError::Config(format!(
            "batch size {} must be in 1..={}",
            cfg.batch_size,
            train_set.len()
        )));
    }
    let (x_train, y_train) = dataset_tensors::<f32>(train_set)?;
    let (x_val, y_val) = dataset_tensors::<f32>(val_set)?;

    let (start_epoch, mut adam) = match resume {
        Some(s) => (s.epoch, s.adam),
        None => (0, AdamState::new(cfg.adam)),
    };
    adam.config = cfg.adam;
    let io = |source| HarnessError::Io {
        context: "writing training log".into(),
        source,
    };

    let initial = evaluate_nmse_db(net, &x_val, &y_val)?;
    let mut best = (start_epoch, initial, snapshot(net, start_epoch, &adam));
    let mut history = Vec::with_capacity(cfg.epochs);
    let clock = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in start_epoch + 1..=start_epoch + cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut indexed_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = gather(&x_train, idx)?;
            let y = gather(&y_train, idx)?;
            net.zero_grad();
            let pred = net.forward(&x, Mode::Train)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged { epoch, batch: b, loss });
            }
            net.backward(&grad)?;
            adam.step(net)?;
            loss_sum += loss * idx.len() as f64;
        }
        let val = evaluate_nmse_db(net, &x_val, &y_val)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_nmse_db: val,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(
                w,
                "{},{},{},{:.3}",
                record.epoch, record.train_loss, record.val_nmse_db, record.wall_seconds
            )
            .and_then(|_| w.flush())
            .map_err(io)?;
        }
        history.push(record);
        if val < best.1 {
            best = (epoch, val, snapshot(net, epoch, &adam));
        }
    }

    best.2.load_into(net)?;
    Ok(TrainOutcome {
        checkpoint: best.2,
        history,
        best_epoch: best.0,
        best_val_nmse_db: best.1,
        initial_val_nmse_db: initial,
    })
}
