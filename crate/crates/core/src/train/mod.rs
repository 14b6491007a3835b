//! Gradients, the training loop and evaluation metrics.

mod metrics;
mod optim;

pub use metrics::{EpochRecord, Metrics, VariableError};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{ModelError, TrainError};
use crate::scalar::Scalar;
use crate::semantic_graph::GraphInput;
use crate::sgn::{encode_model, forward, forward_tape, insertion_probs, record_loss, Dropout, Preset, SgnConfig, SgnParams};

/// One labeled prediction: network input, index of the DIA the vehicle
/// inserts into, and `(y_s1, y_s2, y_t)` in meters and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: GraphInput,
    pub target: usize,
    pub y: [f64; 3],
}

impl Sample {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.input.validate().map_err(|e| ModelError::InvalidLabel(e.to_string()))?;
        if self.target >= self.input.node_count() {
            return Err(ModelError::InvalidLabel(format!(
                "target {} out of {} candidates",
                self.target,
                self.input.node_count()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidLabel("non-finite regression target".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta: f64,
    pub k_reg: f64,
    pub mixtures: usize,
    pub ua_sgn: bool,
    pub nc_sgn: bool,
    pub raw_sigma: bool,
    pub seed: u64,
    pub preset: Preset,
    pub optimizer: OptimizerKind,
    pub clip_norm: f64,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn full() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 512,
            epochs: 50,
            beta: 1.0,
            k_reg: 1e-3,
            mixtures: 3,
            ua_sgn: false,
            nc_sgn: false,
            raw_sigma: false,
            seed: 7,
            preset: Preset::Full,
            optimizer: OptimizerKind::Adam,
            clip_norm: 10.0,
            dropout: 0.1,
        }
    }

    pub fn desk() -> Self {
        Self { batch_size: 64, preset: Preset::Desk, ..Self::full() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) || !(self.beta >= 0.0) {
            return Err(TrainError::InvalidConfig("clip norm must be positive and beta non-negative".into()));
        }
        Ok(())
    }

    /// Network configuration implied by the preset and flags.
    pub fn model_config(&self) -> SgnConfig {
        SgnConfig {
            mixtures: self.mixtures,
            k_reg: self.k_reg,
            dropout: self.dropout,
            ua_sgn: self.ua_sgn,
            nc_sgn: self.nc_sgn,
            raw_sigma: self.raw_sigma,
            ..SgnConfig::preset(self.preset)
        }
    }
}

/// Mean loss of `batch` and its gradient. With `dropout_seed`, training-mode
/// dropout masks are drawn from a generator seeded with it.
pub fn gradients<T: Scalar>(
    params: &SgnParams<T>,
    batch: &[Sample],
    beta: T,
    dropout_seed: Option<u64>,
) -> Result<(T, Vec<T>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyHistory);
    }
    let mut grad = vec![T::zero(); params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed.unwrap_or(0));
    let scale = T::one() / T::lit(batch.len() as f64);
    let mut total = T::zero();
    for s in batch {
        let mut tape = Tape::new(&params.data);
        let drop = dropout_seed.map(|_| Dropout { rate: params.config.dropout, rng: &mut rng });
        let trace = forward_tape(&mut tape, params, &s.input, drop)?;
        let l = record_loss(&mut tape, params, &trace, s.target, s.y, beta)?;
        total += tape.scalar(l);
        tape.backward(l, scale, &mut grad);
    }
    Ok((total * scale, grad))
}

/// Trains a freshly initialized network.
pub fn train(dataset: &[Sample], cfg: &TrainConfig) -> Result<(SgnParams<f64>, Metrics), TrainError> {
    let params = SgnParams::init(cfg.model_config(), cfg.seed)?;
    train_from(params, dataset, cfg)
}

/// Continues training `params` for `cfg.epochs` epochs. Everything is
/// sequential and seeded, so a fixed configuration reproduces the final
/// parameters bit for bit.
pub fn train_from<T: Scalar>(
    mut params: SgnParams<T>,
    dataset: &[Sample],
    cfg: &TrainConfig,
) -> Result<(SgnParams<T>, Metrics), TrainError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for s in dataset {
        s.validate()?;
    }
    let mut opt = Optimizer::<T>::new(cfg.optimizer, cfg.learning_rate, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a1e);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let beta = T::lit(cfg.beta);
    let clip = T::lit(cfg.clip_norm);
    let mut metrics = Metrics::default();
    let mut grad = vec![T::zero(); params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::lit(chunk.len() as f64);
            let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
            let mut batch_loss = 0.0;
            for &i in chunk {
                let s = &dataset[i];
                let mut tape = Tape::new(&params.data);
                let drop = (params.config.dropout > 0.0).then(|| Dropout { rate: params.config.dropout, rng: &mut drop_rng });
                let trace = forward_tape(&mut tape, &params, &s.input, drop)?;
                let l = record_loss(&mut tape, &params, &trace, s.target, s.y, beta)?;
                let lv = tape.scalar(l).to_f64_lossy();
                if !lv.is_finite() {
                    return Err(TrainError::Diverged { epoch, step, last_good: encode_model(&params) });
                }
                batch_loss += lv;
                let scores: Vec<T> = trace.out2.iter().map(|&n| tape.scalar(n)).collect();
                let w = insertion_probs(&scores)?;
                if argmax(&w) == s.target {
                    correct += 1;
                }
                tape.backward(l, scale, &mut grad);
            }
            if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGradient { param: params.name_of(i).to_string(), epoch, step });
            }
            clip_global_norm(&mut grad, clip);
            opt.step(&mut params.data, &grad);
            loss_sum += batch_loss;
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            mean_loss: loss_sum / dataset.len() as f64,
            accuracy: correct as f64 / dataset.len() as f64,
        };
        log::info!("epoch {} loss {:.4} accuracy {:.4}", rec.epoch, rec.mean_loss, rec.accuracy);
        metrics.loss_curve.push(rec);
    }
    Ok((params, metrics))
}

fn argmax<T: Scalar>(w: &[T]) -> usize {
    let mut best = 0;
    for k in 1..w.len() {
        if w[k] > w[best] {
            best = k;
        }
    }
    best
}

/// Intention accuracy and regression errors on `dataset`. The point
/// estimate of each variable is the mean of `n_samples` draws from the true
/// candidate's mixture.
pub fn evaluate<T: Scalar>(
    params: &SgnParams<T>,
    dataset: &[Sample],
    n_samples: usize,
    seed: u64,
) -> Result<Metrics, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut correct = 0usize;
    let mut errs: [Vec<f64>; 3] = Default::default();
    for s in dataset {
        s.validate()?;
        let pred = forward(params, &s.input)?;
        if pred.argmax() == s.target {
            correct += 1;
        }
        let gmm = pred.edges[s.target].gmm.cast::<f64>();
        let mut est = [0.0; 3];
        for _ in 0..n_samples.max(1) {
            let y = gmm.sample(&mut rng)?;
            for k in 0..3 {
                est[k] += y[k];
            }
        }
        for k in 0..3 {
            errs[k].push(est[k] / n_samples.max(1) as f64 - s.y[k]);
        }
    }
    Ok(Metrics {
        samples: dataset.len(),
        intention_accuracy: correct as f64 / dataset.len() as f64,
        y_s1: VariableError::from_errors(&errs[0]),
        y_s2: VariableError::from_errors(&errs[1]),
        y_t: VariableError::from_errors(&errs[2]),
        loss_curve: Vec::new(),
    })
}
