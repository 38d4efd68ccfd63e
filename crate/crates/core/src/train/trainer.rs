use std::collections::VecDeque;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{adam_step, l1_loss, TrainConfig};
use crate::data::{sample_batch, Dataset, Rng};
use crate::model::{init_params, Checkpoint, Hran, ModelConfig, OptimizerSnapshot, ParamStore};
use crate::tensor::Tensor4;
use crate::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_LOG_FILE: &str = "loss.log";

const LOSS_WINDOW: usize = 20;
/// Mixed into the seed so the sampling stream differs from the init stream.
const SAMPLER_STREAM: u64 = 0xA076_1D64_78BD_642F;

/// Progress that must survive a checkpoint round-trip. Adam moments live in
/// the parameter store.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub iteration: u64,
    pub rng: Rng,
    window: VecDeque<f64>,
}

impl TrainState {
    fn new(iteration: u64, rng: Rng) -> Self {
        TrainState {
            iteration,
            rng,
            window: VecDeque::with_capacity(LOSS_WINDOW),
        }
    }

    /// Mean loss over the most recent iterations (up to 20).
    pub fn windowed_loss(&self) -> Option<f64> {
        if self.window.is_empty() {
            None
        } else {
            Some(self.window.iter().sum::<f64>() / self.window.len() as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLine {
    pub iteration: u64,
    pub lr: f64,
    pub loss: f64,
}

impl LogLine {
    pub fn format(&self) -> String {
        format!("{}\t{:e}\t{}\n", self.iteration, self.lr, self.loss)
    }
}

pub struct Trainer {
    model: Hran,
    store: ParamStore<f32>,
    cfg: TrainConfig,
    state: TrainState,
}

impl Trainer {
    pub fn new(model_cfg: &ModelConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = Hran::new(model_cfg)?;
        let store = init_params(model_cfg, cfg.seed)?;
        let rng = Rng::new(cfg.seed ^ SAMPLER_STREAM);
        Ok(Trainer {
            model,
            store,
            cfg,
            state: TrainState::new(0, rng),
        })
    }

    /// Continue from a checkpoint written by [`Trainer::checkpoint`].
    pub fn from_checkpoint(ck: Checkpoint, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let opt = ck
            .optimizer
            .ok_or_else(|| Error::Checkpoint("no optimizer section; cannot resume training".into()))?;
        let model = Hran::new(&ck.config)?;
        Ok(Trainer {
            model,
            store: ck.store,
            cfg,
            state: TrainState::new(opt.iteration, Rng::from_state(opt.rng_state)),
        })
    }

    pub fn model(&self) -> &Hran {
        &self.model
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config().clone(),
            store: self.store.clone(),
            optimizer: Some(OptimizerSnapshot {
                iteration: self.state.iteration,
                rng_state: self.state.rng.state(),
            }),
        }
    }

    /// sample → forward → L1 → backward → Adam. Returns the batch loss.
    pub fn step(&mut self, data: &Dataset) -> Result<LogLine> {
        if data.scale() != self.model.config().scale {
            return Err(Error::Config(format!(
                "dataset scale {} does not match model scale {}",
                data.scale(),
                self.model.config().scale
            )));
        }
        let batch = sample_batch(data, &mut self.state.rng, self.cfg.batch, self.cfg.patch)?;
        let lr_in = Tensor4::stack(&batch.iter().map(|p| &p.lr).collect::<Vec<_>>())?;
        let hr = Tensor4::stack(&batch.iter().map(|p| &p.hr).collect::<Vec<_>>())?;

        let (pred, mut cache) = self.model.forward_train(&self.store, &lr_in)?;
        let (loss, grad) = l1_loss(&pred, &hr)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { param: "loss".into() });
        }
        self.model.backward(&mut self.store, &mut cache, &grad)?;

        let lr = self.cfg.lr_at(self.state.iteration);
        self.state.iteration += 1;
        adam_step(&mut self.store, self.state.iteration, lr, &self.cfg)?;

        if self.state.window.len() == LOSS_WINDOW {
            self.state.window.pop_front();
        }
        self.state.window.push_back(loss);
        Ok(LogLine {
            iteration: self.state.iteration,
            lr,
            loss,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    /// Lines written during this run.
    pub lines: Vec<LogLine>,
    pub first_loss: Option<f64>,
    pub windowed_loss: Option<f64>,
}

/// Keep only log lines with an iteration `≤ upto` (used when resuming).
fn truncate_log(path: &Path, upto: u64) -> Result<()> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let kept: String = text
        .lines()
        .filter(|l| {
            l.split('\t')
                .next()
                .and_then(|t| t.parse::<u64>().ok())
                .is_some_and(|t| t <= upto)
        })
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(path, kept).map_err(|e| Error::io(path, e))
}

impl Trainer {
    /// Run until `max_iters`, writing `checkpoint.bin` every
    /// `checkpoint_every` iterations and at the end, and appending
    /// `iter<TAB>lr<TAB>loss` lines to `loss.log` every `log_every`.
    pub fn run(&mut self, data: &Dataset, out_dir: &Path) -> Result<TrainOutcome> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let ck_path = out_dir.join(CHECKPOINT_FILE);
        let log_path = out_dir.join(LOSS_LOG_FILE);
        if self.state.iteration == 0 {
            fs::write(&log_path, b"").map_err(|e| Error::io(&log_path, e))?;
        } else {
            truncate_log(&log_path, self.state.iteration)?;
        }
        let mut log = OpenOptions::new()
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;

        if self.state.iteration == 0 {
            self.checkpoint().save(&ck_path)?;
        }
        let mut lines = Vec::new();
        let mut first_loss = None;
        while self.state.iteration < self.cfg.max_iters {
            let line = self.step(data)?;
            first_loss.get_or_insert(line.loss);
            if line.iteration % self.cfg.log_every == 0 {
                log.write_all(line.format().as_bytes())
                    .map_err(|e| Error::io(&log_path, e))?;
                lines.push(line);
            }
            if line.iteration % self.cfg.checkpoint_every == 0 || line.iteration == self.cfg.max_iters {
                log.flush().map_err(|e| Error::io(&log_path, e))?;
                self.checkpoint().save(&ck_path)?;
                log::info!(
                    "iteration {} lr {:e} windowed loss {:.6}",
                    line.iteration,
                    line.lr,
                    self.state.windowed_loss().unwrap_or(line.loss)
                );
            }
        }
        Ok(TrainOutcome {
            checkpoint: ck_path,
            loss_log: log_path,
            lines,
            first_loss,
            windowed_loss: self.state.windowed_loss(),
        })
    }
}

/// Fresh training run from a seeded initialization.
pub fn train_loop(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &Dataset,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    Trainer::new(model_cfg, cfg.clone())?.run(data, out_dir)
}
