//! L1 objective, Adam, step-decay learning rate and the training loop.

mod adam;
mod trainer;

use crate::tensor::{check_same_dims, Scalar, Tensor4};
use crate::{Error, Result};

pub use adam::adam_step;
pub use trainer::{train_loop, LogLine, TrainOutcome, TrainState, Trainer, CHECKPOINT_FILE, LOSS_LOG_FILE};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    /// LR patch side; HR patches are `scale ×` larger.
    pub patch: usize,
    pub lr0: f64,
    pub halve_every: u64,
    pub max_iters: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 16,
            patch: 64,
            lr0: 1e-4,
            halve_every: 200_000,
            max_iters: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 1000,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch", self.batch as u64),
            ("patch", self.patch as u64),
            ("halve_every", self.halve_every),
            ("checkpoint_every", self.checkpoint_every),
            ("log_every", self.log_every),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        Ok(())
    }

    /// `lr0 · 0.5^⌊t / halve_every⌋`.
    pub fn lr_at(&self, t: u64) -> f64 {
        lr_at(self.lr0, self.halve_every, t)
    }
}

pub fn lr_at(lr0: f64, halve_every: u64, t: u64) -> f64 {
    let halvings = (t / halve_every).min(i32::MAX as u64) as i32;
    lr0 * 0.5f64.powi(halvings)
}

/// Mean absolute error and its gradient `sign(pred − target) / N`, with
/// `sign(0) = 0`.
pub fn l1_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<(f64, Tensor4<T>)> {
    check_same_dims("l1_loss", pred.dims(), target.dims())?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::Data("l1_loss on empty tensors".into()));
    }
    let inv = T::one() / T::of(n as f64);
    let mut total = 0.0f64;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            total += d.abs().as_f64();
            if d > T::zero() {
                inv
            } else if d < T::zero() {
                -inv
            } else {
                T::zero()
            }
        })
        .collect();
    Ok((total / n as f64, Tensor4::from_vec(pred.dims(), grad)?))
}
