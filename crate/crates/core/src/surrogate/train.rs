use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dropout, Features, Regressor};
use crate::error::{Error, Result};
use crate::genome::ArchGenome;
use crate::util;

/// A featurized input and its label.
pub type Sample = (Features, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.0,
            batch_size: 32,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be positive"));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0 && self.eps > 0.0) {
            return Err(Error::domain(
                "lr, weight decay and eps must be non-negative",
            ));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::domain("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
struct Adam<'a> {
    cfg: &'a TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl<'a> Adam<'a> {
    fn new(cfg: &'a TrainConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = self.cfg;
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps);
            params[i] -= c.lr * (update + c.weight_decay * params[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch L1 seen during the epoch (dropout on).
    pub train_l1: f64,
    /// Held-out L1 after the epoch (dropout off); `None` without a test split.
    pub test_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train_l1: f64,
    pub final_train_l1: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch of the returned parameters; `None` means the initial ones.
    pub best_epoch: Option<usize>,
    /// Selection L1 of the returned parameters (test split if present, else train).
    pub best_l1: f64,
}

/// Mean absolute error with dropout off.
pub fn mean_l1<M: Regressor>(model: &M, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("mean L1 of an empty set"));
    }
    let mut sum = 0.0;
    for (x, y) in data {
        sum += (model.forward(x, Dropout::Off)? - y).abs();
    }
    Ok(sum / data.len() as f64)
}

/// One optimizer step on `batch`; returns the batch L1.
fn batch_step<M: Regressor>(
    model: &mut M,
    opt: &mut Adam,
    grad: &mut [f64],
    batch: &[&Sample],
    seed: u64,
) -> Result<f64> {
    grad.fill(0.0);
    let inv = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (j, (x, y)) in batch.iter().enumerate() {
        let dropout = Dropout::On {
            seed: util::mix_seed(seed, j as u64),
        };
        let mut dl = |pred: f64| {
            let r = pred - y;
            loss += r.abs() * inv;
            if r > 0.0 {
                inv
            } else if r < 0.0 {
                -inv
            } else {
                0.0
            }
        };
        model.forward_backward(x, dropout, &mut dl, grad)?;
    }
    opt.step(model.params_mut(), grad);
    Ok(loss)
}

/// Minimizes mean L1 on `train_set` with Adam and returns the parameters with
/// the best held-out L1 (train L1 when `test_set` is empty).
pub fn train<M: Regressor>(
    model: M,
    train_set: &[Sample],
    test_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(M, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::domain("empty training split"));
    }
    let select = |m: &M| {
        if test_set.is_empty() {
            mean_l1(m, train_set)
        } else {
            mean_l1(m, test_set)
        }
    };
    let initial_train_l1 = mean_l1(&model, train_set)?;
    let mut best_l1 = select(&model)?;
    let mut best = model.clone();
    let mut best_epoch = None;

    let mut model = model;
    let mut opt = Adam::new(cfg, model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = util::rng(util::mix_seed(cfg.seed, 0x5u64));
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let seed = util::mix_seed(cfg.seed, (1 << 32) + step);
            sum += batch_step(&mut model, &mut opt, &mut grad, &batch, seed)? * batch.len() as f64;
            step += 1;
        }
        let test_l1 = if test_set.is_empty() {
            None
        } else {
            Some(mean_l1(&model, test_set)?)
        };
        let sel = match test_l1 {
            Some(v) => v,
            None => mean_l1(&model, train_set)?,
        };
        if sel < best_l1 {
            best_l1 = sel;
            best = model.clone();
            best_epoch = Some(epoch);
        }
        epochs.push(EpochStats {
            epoch,
            train_l1: sum / train_set.len() as f64,
            test_l1,
        });
    }
    let final_train_l1 = mean_l1(&best, train_set)?;
    Ok((
        best,
        TrainReport {
            initial_train_l1,
            final_train_l1,
            epochs,
            best_epoch,
            best_l1,
        },
    ))
}

/// Sample mean and standard deviation over `n_mc` dropout-on forwards. The
/// deviation is exactly zero when every pass agrees (no dropout, or
/// `n_mc = 1`).
pub fn mc_predict<M: Regressor>(
    model: &M,
    x: &Features,
    n_mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_mc == 0 {
        return Err(Error::domain("n_mc must be at least 1"));
    }
    let preds = (0..n_mc)
        .map(|i| {
            model.forward(
                x,
                Dropout::On {
                    seed: util::mix_seed(seed, i as u64),
                },
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = preds.iter().sum::<f64>() / n_mc as f64;
    if preds.iter().all(|&p| p == preds[0]) {
        return Ok((preds[0], 0.0));
    }
    let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n_mc - 1) as f64;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    pub replay_ratio: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            replay_ratio: 5.0,
            epochs: 10,
            lr: 1e-4,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneReport {
    pub dropped: usize,
    pub steps: usize,
    pub old_rows: usize,
    pub new_rows: usize,
}

/// Rows per mini-batch as `(old corpus, buffer)`. The buffer gets
/// `max(1, floor(batch / (rho + 1)))` rows and the corpus the rest.
pub fn replay_split(batch: usize, rho: f64) -> Result<(usize, usize)> {
    if batch == 0 || !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!(
            "bad replay setup: batch {batch}, ratio {rho}"
        )));
    }
    let new = ((batch as f64 / (rho + 1.0)).floor() as usize).clamp(1, batch);
    Ok((batch - new, new))
}

/// Fine-tunes a copy of `base` on `buffer`, mixing in rows of the original
/// corpus `replay` in every mini-batch. `base` is left untouched.
pub fn fine_tune<M: Regressor>(
    base: &M,
    buffer: &[(ArchGenome, f64)],
    replay: &[Sample],
    cfg: &FineTuneConfig,
) -> Result<(M, FineTuneReport)> {
    let fresh: Vec<Sample> = buffer
        .iter()
        .filter(|(_, y)| y.is_finite())
        .map(|(g, y)| Ok((base.featurize(g)?, *y)))
        .collect::<Result<_>>()?;
    let dropped = buffer.len() - fresh.len();
    if fresh.is_empty() {
        return Err(Error::domain("fine-tuning buffer has no finite labels"));
    }
    let (mut old_rows, new_rows) = replay_split(cfg.batch_size, cfg.replay_ratio)?;
    old_rows = old_rows.min(replay.len());

    let tc = TrainConfig {
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let mut model = base.clone();
    let mut opt = Adam::new(&tc, model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut rng = util::rng(util::mix_seed(cfg.seed, 0xF7));
    let mut order: Vec<usize> = (0..fresh.len()).collect();
    let mut old_idx: Vec<usize> = (0..replay.len()).collect();
    let per_epoch = fresh.len().div_ceil(new_rows);
    let mut steps = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for s in 0..per_epoch {
            let mut batch: Vec<&Sample> = (0..new_rows)
                .map(|j| &fresh[order[(s * new_rows + j) % order.len()]])
                .collect();
            let (picked, _) = old_idx.partial_shuffle(&mut rng, old_rows);
            batch.extend(picked.iter().map(|&i| &replay[i]));
            let seed = util::mix_seed(cfg.seed, (2 << 32) + steps as u64);
            batch_step(&mut model, &mut opt, &mut grad, &batch, seed)?;
            steps += 1;
        }
    }
    Ok((
        model,
        FineTuneReport {
            dropped,
            steps,
            old_rows,
            new_rows,
        },
    ))
}
