use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::dataset::{fnv1a, DatasetSplit};
use super::scheduler::PlateauScheduler;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{combined_loss, combined_loss_grad, LossForm, SsimConfig};
use crate::net::{backward, build_network, forward, InputMode, NetworkConfig, NetworkParams, Variant};
use crate::rng::{self, ids};
use crate::scalar::Scalar;
use crate::tensor::{magnitude, magnitude_backward, Mode, Tensor, MAGNITUDE_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Expected slice side; `None` accepts the dataset's.
    pub image_size: Option<usize>,
    pub input_mode: InputMode,
    pub variant: Variant,
    pub loss_form: LossForm,
    /// Trailing training volumes held out for validation.
    pub val_volumes: usize,
    pub extract_width: usize,
    pub bridge_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let net = NetworkConfig::new(InputMode::Dual, Variant::Full);
        Self {
            initial_lr: 1e-4,
            plateau_factor: 0.2,
            plateau_patience: 10,
            batch_size: 8,
            epochs: 150,
            seed: 0,
            image_size: None,
            input_mode: InputMode::Dual,
            variant: Variant::Full,
            loss_form: LossForm::Product,
            val_volumes: 2,
            extract_width: net.extract_width,
            bridge_width: net.bridge_width,
        }
    }
}

impl TrainConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig::new(self.input_mode, self.variant).with_widths(self.extract_width, self.bridge_width)
    }

    pub fn validate(&self) -> Result<()> {
        PlateauScheduler::new(self.initial_lr, self.plateau_factor, self.plateau_patience)?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.extract_width == 0 || self.bridge_width == 0 {
            return Err(Error::invalid("layer widths must be nonzero"));
        }
        if let LossForm::Sum { weight } = self.loss_form {
            if !(weight >= 0.0 && weight.is_finite()) {
                return Err(Error::invalid("sum-form weight must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Stable hash of the JSON form, ignoring the epoch budget so finished
    /// runs can be extended.
    pub fn hash(&self) -> String {
        let key = Self { epochs: 0, ..self.clone() };
        format!("{:016x}", fnv1a(&serde_json::to_vec(&key).expect("config serializes")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub wall_time: f64,
    /// Checkpoint file written after the epoch, relative to the run directory.
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr,wall_time\n");
        for e in &self.epochs {
            let val = e.val_loss.map_or_else(String::new, |v| format!("{v:.10e}"));
            out.push_str(&format!("{},{:.10e},{},{:e},{:.3}\n", e.epoch, e.train_loss, val, e.lr, e.wall_time));
        }
        out
    }

    /// The history without wall-clock times, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut h = self.clone();
        h.epochs.iter_mut().for_each(|e| e.wall_time = 0.0);
        h
    }
}

pub struct TrainOutcome<T> {
    pub params: NetworkParams<T>,
    /// Parameters at the epoch with the lowest monitored validation loss
    /// (training loss when there is no validation set).
    pub best: NetworkParams<T>,
    pub history: TrainingHistory,
}

/// Optional side effects of a training run.
#[derive(Default)]
pub struct RunOptions<'a> {
    pub checkpoint_dir: Option<&'a Path>,
    /// Continue from `checkpoint_dir/last.nxd` when it exists.
    pub resume: bool,
    pub on_epoch: Option<&'a dyn Fn(&EpochRecord)>,
}

pub const LAST_CHECKPOINT: &str = "last.nxd";
pub const BEST_CHECKPOINT: &str = "best.nxd";

#[derive(Serialize, Deserialize)]
struct ResumeState {
    config_hash: String,
    history: TrainingHistory,
    scheduler: PlateauScheduler,
    adam_step: u64,
    best_monitor: f64,
}

/// Parameter container tagged with the configuration that trained it.
pub fn params_container<T: Scalar>(params: &NetworkParams<T>, config: &TrainConfig) -> Result<Container<T>> {
    let mut c = params.to_container("params")?;
    c.header.provenance = serde_json::json!({ "train_config": config, "config_hash": config.hash() });
    Ok(c)
}

/// Splits sample indices into (train, validation) by volume.
pub fn split_validation(data: &DatasetSplit, val_volumes: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let groups = data.volume_groups();
    if val_volumes >= groups.len() {
        return Err(Error::invalid(format!(
            "val_volumes = {val_volumes} leaves no training data ({} volumes)",
            groups.len()
        )));
    }
    let cut = groups.len() - val_volumes;
    let flat = |g: &[(u64, Vec<usize>)]| g.iter().flat_map(|(_, v)| v.iter().copied()).collect::<Vec<_>>();
    Ok((flat(&groups[..cut]), flat(&groups[cut..])))
}

fn images<T: Scalar>(t: &Tensor<T>, s: usize) -> Result<Image<T>> {
    Image::from_vec(t.height(), t.width(), t.plane(s, 0).to_vec())
}

/// Mean per-sample loss of `indices` in eval mode.
pub fn eval_loss<T: Scalar>(params: &NetworkParams<T>, data: &DatasetSplit, indices: &[usize], form: LossForm) -> Result<f64> {
    let cfg = SsimConfig::default();
    let mut total = 0.0;
    for chunk in indices.chunks(8) {
        let input = data.input_batch::<T>(chunk, params.config.input_mode)?;
        let trace = forward(params, &input, Mode::Eval)?;
        let pred = magnitude(&trace.h, T::lit(MAGNITUDE_EPS))?;
        let target = data.target_magnitude::<T>(chunk)?;
        for s in 0..chunk.len() {
            total += combined_loss(&images(&pred, s)?, &images(&target, s)?, &cfg, form)?.loss.to_f64_lossy();
        }
    }
    Ok(total / indices.len() as f64)
}

/// One optimizer step on `batch`; returns the summed per-sample loss.
fn train_step<T: Scalar>(
    params: &mut NetworkParams<T>,
    adam: &mut AdamState<T>,
    data: &DatasetSplit,
    batch: &[usize],
    form: LossForm,
    lr: f64,
) -> Result<f64> {
    let cfg = SsimConfig::default();
    let input = data.input_batch::<T>(batch, params.config.input_mode)?;
    let trace = forward(params, &input, Mode::Train)?;
    let pred = magnitude(&trace.h, T::lit(MAGNITUDE_EPS))?;
    let target = data.target_magnitude::<T>(batch)?;
    let inv_n = T::lit(1.0 / batch.len() as f64);
    let mut grad_pred = Tensor::zeros(pred.shape());
    let mut total = 0.0;
    for s in 0..batch.len() {
        let (parts, g) = combined_loss_grad(&images(&pred, s)?, &images(&target, s)?, &cfg, form)?;
        total += parts.loss.to_f64_lossy();
        for (d, &v) in grad_pred.plane_mut(s, 0).iter_mut().zip(g.data()) {
            *d = v * inv_n;
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("training loss {total}")));
    }
    let grad_h = magnitude_backward(&grad_pred, &trace.h, &pred)?;
    let grads = backward(params, &trace, &grad_h)?;
    params.update_running_stats(&trace)?;
    adam_step(params.trainable_mut(), &grads.blocks(), adam, lr)?;
    Ok(total)
}

fn save_checkpoint<T: Scalar>(dir: &Path, params: &NetworkParams<T>, adam: &AdamState<T>, state: &ResumeState) -> Result<PathBuf> {
    let mut c = params.to_container("checkpoint")?;
    let mut blocks: Vec<(String, Vec<usize>, &[T])> = Vec::new();
    for (i, name) in adam.names.iter().enumerate() {
        blocks.push((format!("adam.m.{name}"), vec![adam.m[i].len()], &adam.m[i]));
        blocks.push((format!("adam.v.{name}"), vec![adam.v[i].len()], &adam.v[i]));
    }
    let extra = Container::from_blocks("adam", blocks)?;
    let base = c.data.len();
    for mut b in extra.header.blocks {
        b.offset += base;
        c.header.blocks.push(b);
    }
    c.data.extend_from_slice(&extra.data);
    c.header.shape = vec![c.data.len()];
    c.header.provenance = serde_json::to_value(state)?;
    let path = dir.join(LAST_CHECKPOINT);
    c.write(&path)?;
    Ok(path)
}

fn load_checkpoint<T: Scalar>(path: &Path, adam: &mut AdamState<T>) -> Result<(NetworkParams<T>, ResumeState)> {
    let c = Container::<T>::read(path)?;
    let params = NetworkParams::from_container(&c)?;
    let state: ResumeState = serde_json::from_value(c.header.provenance.clone())?;
    for (i, name) in adam.names.clone().iter().enumerate() {
        adam.m[i].copy_from_slice(c.block(&format!("adam.m.{name}"))?);
        adam.v[i].copy_from_slice(c.block(&format!("adam.v.{name}"))?);
    }
    adam.step = state.adam_step;
    Ok((params, state))
}

/// Trains a network from its seeded initialization.
pub fn train<T: Scalar>(config: &TrainConfig, data: &DatasetSplit, opts: &RunOptions) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if let Some(size) = config.image_size {
        if data.dims() != (size, size) {
            return Err(Error::Data(format!("dataset slices are {:?}, config expects {size}x{size}", data.dims())));
        }
    }
    let (train_idx, val_idx) = split_validation(data, config.val_volumes)?;
    let mut params = build_network::<T>(config.network(), config.seed);
    let mut adam = AdamState::for_params(&params.trainable());
    let mut sched = PlateauScheduler::new(config.initial_lr, config.plateau_factor, config.plateau_patience)?;
    let mut history = TrainingHistory::default();
    let mut best = params.clone();
    let mut best_monitor = f64::INFINITY;

    if let (true, Some(dir)) = (opts.resume, opts.checkpoint_dir) {
        let path = dir.join(LAST_CHECKPOINT);
        if path.exists() {
            let (p, state) = load_checkpoint(&path, &mut adam)?;
            if state.config_hash != config.hash() {
                return Err(Error::Data("checkpoint was written by a different configuration".into()));
            }
            params = p;
            sched = state.scheduler;
            history = state.history;
            best_monitor = state.best_monitor;
            let best_path = dir.join(BEST_CHECKPOINT);
            best = match best_path.exists() {
                true => NetworkParams::from_container(&Container::<T>::read(&best_path)?)?,
                false => params.clone(),
            };
        }
    }

    let start = Instant::now();
    for epoch in history.epochs.len()..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng::stream(config.seed, &[ids::SHUFFLE, epoch as u64]));
        let lr = sched.lr;
        let mut total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            total += train_step(&mut params, &mut adam, data, batch, config.loss_form, lr)
                .map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("epoch {} batch {b}: {msg}", epoch + 1)),
                    other => other,
                })?;
        }
        let train_loss = total / order.len() as f64;
        let val_loss = match val_idx.is_empty() {
            true => None,
            false => Some(eval_loss(&params, data, &val_idx, config.loss_form)?),
        };
        sched.observe(train_loss);
        let monitor = val_loss.unwrap_or(train_loss);
        if monitor < best_monitor {
            best_monitor = monitor;
            best = params.clone();
            history.best_epoch = Some(epoch + 1);
            if let Some(dir) = opts.checkpoint_dir {
                params_container(&best, config)?.write(dir.join(BEST_CHECKPOINT))?;
            }
        }
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            lr,
            wall_time: start.elapsed().as_secs_f64(),
            checkpoint: opts.checkpoint_dir.map(|_| LAST_CHECKPOINT.to_string()),
        });
        if let Some(dir) = opts.checkpoint_dir {
            let state = ResumeState {
                config_hash: config.hash(),
                history: history.clone(),
                scheduler: sched.clone(),
                adam_step: adam.step,
                best_monitor,
            };
            save_checkpoint(dir, &params, &adam, &state)?;
        }
        if let Some(cb) = opts.on_epoch {
            cb(history.epochs.last().unwrap());
        }
    }
    Ok(TrainOutcome { params, best, history })
}
