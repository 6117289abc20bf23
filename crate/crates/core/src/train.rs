//! Mini-batch training with RMSProp and per-epoch evaluation.
//!
//! Each mini-batch sample and each evaluation window runs on its own child
//! stream split off the run's root stream before the batch is dispatched, so a
//! run's output is a pure function of its seed regardless of [`Execution`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::lstm::{self, LstmParams, SequenceCache};
use crate::math::Prng;
use crate::metrics::{mse_and_grad, r2_score, rmse};
use crate::optim::{RmspropConfig, RmspropState};
use crate::par::{ordered_map, Execution};
use crate::params::ParamSet;
use crate::qlstm::{self, QlstmCache, QlstmParams};
use crate::quantum::ExpectationMode;
use crate::stochastic::{self, QuantConfig};

/// A sequence model that maps a window to a prediction and back-propagates a
/// prediction gradient into a parameter-shaped gradient record.
pub trait SequenceModel: Sync {
    type Params: ParamSet + Send + Sync;
    type Cache: Send;

    fn params(&self) -> &Self::Params;

    fn params_mut(&mut self) -> &mut Self::Params;

    fn forward(&self, window: &[Vec<f64>], rng: &mut Prng) -> Result<(Vec<f64>, Self::Cache)>;

    fn backward(&self, cache: &Self::Cache, d_prediction: &[f64], rng: &mut Prng)
        -> Result<Self::Params>;

    /// How expectations are formed: `"deterministic"`, `"analytic"`, or `"shots:<k>"`.
    fn mode_label(&self) -> String;
}

#[derive(Clone, Debug)]
pub struct ClassicModel {
    pub params: LstmParams,
}

impl SequenceModel for ClassicModel {
    type Params = LstmParams;
    type Cache = SequenceCache;

    fn params(&self) -> &LstmParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut LstmParams {
        &mut self.params
    }

    fn forward(&self, window: &[Vec<f64>], _rng: &mut Prng) -> Result<(Vec<f64>, SequenceCache)> {
        lstm::sequence_forward(&self.params, window)
    }

    fn backward(&self, cache: &SequenceCache, d: &[f64], _rng: &mut Prng) -> Result<LstmParams> {
        lstm::sequence_backward(&self.params, cache, d)
    }

    fn mode_label(&self) -> String {
        "deterministic".into()
    }
}

#[derive(Clone, Debug)]
pub struct StochasticModel {
    pub params: LstmParams,
    pub quant: QuantConfig,
}

impl SequenceModel for StochasticModel {
    type Params = LstmParams;
    type Cache = SequenceCache;

    fn params(&self) -> &LstmParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut LstmParams {
        &mut self.params
    }

    fn forward(&self, window: &[Vec<f64>], rng: &mut Prng) -> Result<(Vec<f64>, SequenceCache)> {
        stochastic::slstm_sequence_forward(&self.params, &self.quant, window, rng)
    }

    fn backward(&self, cache: &SequenceCache, d: &[f64], _rng: &mut Prng) -> Result<LstmParams> {
        stochastic::slstm_sequence_backward(&self.params, &self.quant, cache, d)
    }

    fn mode_label(&self) -> String {
        format!("shots:{}", self.quant.shots)
    }
}

#[derive(Clone, Debug)]
pub struct QuantumModel {
    pub params: QlstmParams,
    pub mode: ExpectationMode,
}

impl SequenceModel for QuantumModel {
    type Params = QlstmParams;
    type Cache = QlstmCache;

    fn params(&self) -> &QlstmParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut QlstmParams {
        &mut self.params
    }

    fn forward(&self, window: &[Vec<f64>], rng: &mut Prng) -> Result<(Vec<f64>, QlstmCache)> {
        qlstm::qlstm_sequence_forward(&self.params, window, self.mode, rng)
    }

    fn backward(&self, cache: &QlstmCache, d: &[f64], rng: &mut Prng) -> Result<QlstmParams> {
        qlstm::qlstm_sequence_backward(&self.params, cache, d, self.mode, rng)
    }

    fn mode_label(&self) -> String {
        match self.mode {
            ExpectationMode::Analytic => "analytic".into(),
            ExpectationMode::Shots(k) => format!("shots:{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmspropConfig,
    /// Shuffle sample order each epoch instead of chronological batches.
    pub shuffle: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 4,
            optimizer: RmspropConfig::default(),
            shuffle: false,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_rmse: f64,
    /// NaN when the split's targets have zero variance.
    pub train_r2: f64,
    pub val_rmse: f64,
    pub val_r2: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochMetrics>,
    pub wall_seconds: f64,
}

impl RunRecord {
    /// Epoch with the lowest validation RMSE; the earliest one on ties.
    pub fn best_epoch(&self) -> Result<&EpochMetrics> {
        self.epochs
            .iter()
            .reduce(|best, e| if e.val_rmse < best.val_rmse { e } else { best })
            .ok_or(Error::NoEpochs)
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub predictions: Vec<f64>,
    pub rmse: f64,
    pub r2: f64,
}

/// One forward pass over every sample of `ds`.
pub fn evaluate<M: SequenceModel>(
    model: &M,
    ds: &Dataset,
    rng: &mut Prng,
    exec: Execution,
) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Degenerate("evaluation on an empty dataset"));
    }
    let jobs: Vec<_> = ds.samples.iter().zip(rng.split_n(ds.len())).collect();
    let preds = ordered_map(exec, jobs, |(s, mut r)| {
        model.forward(&s.window, &mut r).map(|(p, _)| p[0])
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let targets = ds.targets();
    Ok(Evaluation {
        rmse: rmse(&preds, &targets)?,
        r2: r2_score(&preds, &targets).unwrap_or(f64::NAN),
        predictions: preds,
    })
}

/// Mean loss and mean gradient over one mini-batch.
pub fn batch_gradient<M: SequenceModel>(
    model: &M,
    ds: &Dataset,
    indices: &[usize],
    rng: &mut Prng,
    exec: Execution,
) -> Result<(f64, M::Params)> {
    if indices.is_empty() {
        return Err(Error::Degenerate("empty batch"));
    }
    let jobs: Vec<_> = indices.iter().copied().zip(rng.split_n(indices.len())).collect();
    let per_sample = ordered_map(exec, jobs, |(idx, mut r)| {
        let s = &ds.samples[idx];
        let (pred, cache) = model.forward(&s.window, &mut r)?;
        let (loss, d_pred) = mse_and_grad(&pred, &s.target)?;
        let grad = model.backward(&cache, &d_pred, &mut r)?;
        Ok((loss, grad))
    });
    let mut total = model.params().zeros_like();
    let mut loss = 0.0;
    for item in per_sample {
        let (l, g): (f64, M::Params) = item?;
        loss += l;
        total.add_assign(&g);
    }
    let k = 1.0 / indices.len() as f64;
    total.scale(k);
    Ok((loss * k, total))
}

/// Trains `model` in place and returns per-epoch metrics.
pub fn train_model<M: SequenceModel>(
    model: &mut M,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    rng: &mut Prng,
) -> Result<RunRecord> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Degenerate("training and validation sets must be nonempty"));
    }
    let mut optimizer = RmspropState::new(cfg.optimizer, model.params())?;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let run_start = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = batch_gradient(model, train, batch, rng, cfg.execution)?;
            optimizer.step(model.params_mut(), &grad)?;
        }
        let tr = evaluate(model, train, rng, cfg.execution)?;
        let va = evaluate(model, val, rng, cfg.execution)?;
        let m = EpochMetrics {
            epoch,
            train_rmse: tr.rmse,
            train_r2: tr.r2,
            val_rmse: va.rmse,
            val_r2: va.r2,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: train rmse {:.4}, val rmse {:.4}",
            m.train_rmse,
            m.val_rmse
        );
        epochs.push(m);
    }
    Ok(RunRecord {
        mode: model.mode_label(),
        config: cfg.clone(),
        epochs,
        wall_seconds: run_start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_windows, split_chronological, Sample};

    fn constant_target_dataset() -> Dataset {
        let samples = (0..40)
            .map(|_| Sample {
                window: vec![vec![0.4]; 4],
                target: vec![0.4],
            })
            .collect();
        Dataset {
            samples,
            scaler: None,
            offset: 0,
        }
    }

    fn fit_constant(seed: u64, learning_rate: f64) -> RunRecord {
        let ds = constant_target_dataset();
        let (train, val) = split_chronological(&ds, 0.75).unwrap();
        let mut rng = Prng::seed_from_u64(seed);
        let mut model = ClassicModel {
            params: LstmParams::init(1, 5, 1, &mut rng).unwrap(),
        };
        let mut cfg = TrainConfig::default();
        cfg.optimizer.learning_rate = learning_rate;
        train_model(&mut model, &train, &val, &cfg, &mut rng).unwrap()
    }

    #[test]
    fn learns_constant_target_within_100_epochs() {
        let rec = fit_constant(2, 0.01);
        assert_eq!(rec.epochs.len(), 100);
        let best = rec
            .epochs
            .iter()
            .map(|e| e.train_rmse)
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-3, "best train rmse {best}");
        assert!(rec.epochs[0].train_r2.is_nan());
    }

    #[test]
    fn smaller_step_settles_on_constant_target() {
        for seed in 1..=3 {
            let last = *fit_constant(seed, 0.003).epochs.last().unwrap();
            assert!(last.train_rmse < 1e-3, "seed {seed}: {}", last.train_rmse);
        }
    }

    #[test]
    fn zero_epochs_has_no_best() {
        let series: Vec<f64> = (0..30).map(|k| (k as f64 * 0.2).sin()).collect();
        let ds = make_windows(&series, 4).unwrap();
        let (train, val) = split_chronological(&ds, 0.67).unwrap();
        let mut rng = Prng::seed_from_u64(2);
        let mut model = ClassicModel {
            params: LstmParams::init(1, 3, 1, &mut rng).unwrap(),
        };
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let rec = train_model(&mut model, &train, &val, &cfg, &mut rng).unwrap();
        assert!(rec.epochs.is_empty());
        assert!(matches!(rec.best_epoch(), Err(Error::NoEpochs)));
    }

    #[test]
    fn best_epoch_is_argmin_of_val_rmse() {
        let mk = |epoch, val_rmse| EpochMetrics {
            epoch,
            train_rmse: 0.0,
            train_r2: 0.0,
            val_rmse,
            val_r2: 0.0,
            seconds: 0.0,
        };
        let rec = RunRecord {
            mode: "deterministic".into(),
            config: TrainConfig::default(),
            epochs: vec![mk(1, 0.3), mk(2, 0.1), mk(3, 0.2), mk(4, 0.1)],
            wall_seconds: 0.0,
        };
        assert_eq!(rec.best_epoch().unwrap().epoch, 2);
    }

    #[test]
    fn sequential_and_parallel_are_bit_identical() {
        let series: Vec<f64> = (0..40).map(|k| (k as f64 * 0.3).sin()).collect();
        let ds = make_windows(&series, 4).unwrap();
        let (train, val) = split_chronological(&ds, 0.67).unwrap();
        let run = |exec| {
            let mut rng = Prng::seed_from_u64(5);
            let mut model = StochasticModel {
                params: LstmParams::init(1, 3, 1, &mut rng).unwrap(),
                quant: QuantConfig::with_shots(3),
            };
            let cfg = TrainConfig {
                epochs: 3,
                execution: exec,
                ..TrainConfig::default()
            };
            let rec = train_model(&mut model, &train, &val, &cfg, &mut rng).unwrap();
            (
                rec.epochs.iter().map(|e| e.val_rmse.to_bits()).collect::<Vec<_>>(),
                model.params.flatten(),
            )
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
    }

    #[test]
    fn rejects_empty_sets_and_bad_batch() {
        let series: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let ds = make_windows(&series, 4).unwrap();
        let empty = Dataset {
            samples: vec![],
            scaler: None,
            offset: 0,
        };
        let mut rng = Prng::seed_from_u64(6);
        let mut model = ClassicModel {
            params: LstmParams::init(1, 2, 1, &mut rng).unwrap(),
        };
        assert!(train_model(&mut model, &ds, &empty, &TrainConfig::default(), &mut rng).is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train_model(&mut model, &ds, &ds, &cfg, &mut rng).is_err());
    }
}
