use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{backward_into, evaluate_rmse, BackpropScratch, MlpModel};
use crate::dataset::SplitDataset;
use crate::error::{Error, Result};
use crate::signal::mix_seed;

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    Adam { learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64 },
    Momentum { learning_rate: f64, momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam(1e-3)
    }
}

impl Optimizer {
    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn momentum(learning_rate: f64) -> Self {
        Optimizer::Momentum { learning_rate, momentum: 0.9 }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Adam { learning_rate, .. } | Optimizer::Momentum { learning_rate, .. } => learning_rate,
        }
    }

    fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("learning_rate", format!("{lr}")));
        }
        match *self {
            Optimizer::Adam { beta1, beta2, epsilon, .. } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                    return Err(Error::invalid("adam", "betas must lie in [0, 1) and epsilon > 0"));
                }
            }
            Optimizer::Momentum { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::invalid("momentum", format!("{momentum}")));
                }
            }
        }
        Ok(())
    }
}

struct OptimizerState {
    opt: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(opt: Optimizer, n: usize) -> Self {
        OptimizerState { opt, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        match self.opt {
            Optimizer::Adam { learning_rate, beta1, beta2, epsilon } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                }
            }
            Optimizer::Momentum { learning_rate, momentum } => {
                for ((p, &g), vel) in params.iter_mut().zip(grads).zip(&mut self.m) {
                    *vel = momentum * *vel - learning_rate * g;
                    *p += *vel;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_units: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub l1_coeff: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Output units per meter. The network regresses `label_scale · θ`.
    pub label_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_units: 400,
            batch_size: 128,
            batches_per_epoch: 300,
            max_epochs: 100_000,
            patience: 200,
            l1_coeff: 0.001,
            optimizer: Optimizer::default(),
            seed: 0,
            label_scale: 100.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("hidden_units", self.hidden_units),
            ("batch_size", self.batch_size),
            ("batches_per_epoch", self.batches_per_epoch),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::invalid(what, "must be positive"));
            }
        }
        if !(self.l1_coeff >= 0.0 && self.l1_coeff.is_finite()) {
            return Err(Error::invalid("l1_coeff", format!("{}", self.l1_coeff)));
        }
        if !(self.label_scale > 0.0 && self.label_scale.is_finite()) {
            return Err(Error::invalid("label_scale", format!("{}", self.label_scale)));
        }
        self.optimizer.validate()
    }
}

/// Per-epoch learning curves. Epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// RMSE over the minibatches drawn during each epoch.
    pub train_rmse_cm: Vec<f64>,
    /// Validation RMSE at the end of each epoch.
    pub val_rmse_cm: Vec<f64>,
    /// Mean minibatch objective (MSE term plus L1 penalty) in training units.
    pub objective: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.val_rmse_cm.len()
    }

    pub fn best_val_rmse_cm(&self) -> f64 {
        self.val_rmse_cm[self.best_epoch - 1]
    }

    /// Running minimum of the validation curve.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.val_rmse_cm
            .iter()
            .map(|&v| {
                best = best.min(v);
                best
            })
            .collect()
    }

    /// Columns `epoch, train_rmse_cm, val_rmse_cm, objective`. Wall-clock
    /// time is left out so the file is reproducible.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_rmse_cm,val_rmse_cm,objective")?;
        for (i, ((t, v), o)) in self.train_rmse_cm.iter().zip(&self.val_rmse_cm).zip(&self.objective).enumerate() {
            writeln!(w, "{},{t},{v},{o}", i + 1)?;
        }
        Ok(())
    }
}

/// Trains from a fresh initialization and returns the snapshot with the
/// lowest validation RMSE.
///
/// Each epoch draws `batches_per_epoch` minibatches of `batch_size` by
/// walking a shuffled permutation of the training set, reshuffling whenever
/// it is exhausted. Training stops after `patience` epochs without a new
/// strict validation minimum, or at `max_epochs`.
pub fn train(dataset: &SplitDataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(Error::TooFewRecords { needed: 1, got: dataset.train.len().min(dataset.validation.len()) });
    }
    let n_in = dataset.input_dim();
    if n_in == 0 {
        return Err(Error::invalid("features", "empty"));
    }
    for r in dataset.records() {
        if r.features.len() != n_in {
            return Err(Error::DimensionMismatch { expected: n_in, actual: r.features.len() });
        }
    }
    let started = Instant::now();

    let mut model = MlpModel::init(n_in, cfg.hidden_units, mix_seed(cfg.seed, 1));
    model.label_scale = cfg.label_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2));
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let labels: Vec<[f64; 2]> =
        dataset.train.iter().map(|r| [r.label[0] * cfg.label_scale, r.label[1] * cfg.label_scale]).collect();
    let mut opt = OptimizerState::new(cfg.optimizer, model.params().len());
    let mut grads = model.gradients();
    let mut scratch = BackpropScratch::new(&model);
    let mut batch_x: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<[f64; 2]> = Vec::with_capacity(cfg.batch_size);

    let mut report = TrainReport {
        train_rmse_cm: Vec::new(),
        val_rmse_cm: Vec::new(),
        objective: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
        wall_clock_secs: 0.0,
    };
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;

    for epoch in 1..=cfg.max_epochs {
        let mut sse = 0.0;
        let mut objective = 0.0;
        for _ in 0..cfg.batches_per_epoch {
            batch_x.clear();
            batch_y.clear();
            for _ in 0..cfg.batch_size {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let i = order[cursor];
                cursor += 1;
                batch_x.push(&dataset.train[i].features);
                batch_y.push(labels[i]);
            }
            let penalty = cfg.l1_coeff * model.l1_norm();
            let batch_sse = backward_into(&model, &batch_x, &batch_y, cfg.l1_coeff, &mut grads, &mut scratch)?;
            let loss = 0.5 * batch_sse / cfg.batch_size as f64 + penalty;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            sse += batch_sse;
            objective += loss;
            opt.step(model.params_mut(), &grads.flat);
        }
        if !model.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let samples = (cfg.batches_per_epoch * cfg.batch_size) as f64;
        let val = evaluate_rmse(&model, &dataset.validation)?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.train_rmse_cm.push((sse / samples).sqrt() / cfg.label_scale * 100.0);
        report.val_rmse_cm.push(val);
        report.objective.push(objective / cfg.batches_per_epoch as f64);
        report.stopped_epoch = epoch;
        if val < best_val {
            best_val = val;
            report.best_epoch = epoch;
            best.params_mut().copy_from_slice(model.params());
        }
        if epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((best, report))
}
