//! Penalized training with dual ascent on the penalty weight.
//!
//! Within an epoch every mini-batch takes one momentum step on
//! `CE(probs, y) + lambda * D(probs, Z, Y)`, with `lambda` frozen. After the
//! epoch, `lambda += beta * mean_batch_penalty`. `D` is distance covariance
//! between softmax outputs and one-hot groups (demographic parity) or the
//! conditional statistic given one-hot labels (equalized odds).
//!
//! Randomness: the initial weights use `derive_seed(seed, [0])` and the
//! shuffle of epoch `e` uses `derive_seed(seed, [1, e])`.

use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{one_hot, Dataset};
use crate::derive_seed;
use crate::grad::{cdc_grad, dcov_grad};
use crate::metrics::{delta_dp, delta_eo, EoMode, FairnessReport, GroupedPredictions, MetricsError};
use crate::nn::{softmax_backward, softmax_cross_entropy, Mlp, NnError, OutputGrad};
use crate::stats::{silverman_bandwidth, SampleBatch, StatsError};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("dataset has no samples")]
    EmptyDataset,

    #[error("dual update called before any batch was recorded")]
    NoBatches,

    #[error("{0}")]
    Inconsistent(String),

    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    #[default]
    None,
    /// Distance covariance with the group; targets demographic parity.
    Dc,
    /// Conditional distance covariance given the label; targets equalized odds.
    Cdc,
}

impl std::str::FromStr for PenaltyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "dc" => Ok(Self::Dc),
            "cdc" => Ok(Self::Cdc),
            other => Err(format!("unknown penalty {other:?} (expected none, dc or cdc)")),
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Dc => "dc",
            Self::Cdc => "cdc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthPolicy {
    /// Silverman's rule on the batch size and label-encoding width.
    #[default]
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    #[serde(default)]
    pub bandwidth: BandwidthPolicy,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind) -> Self {
        Self {
            kind,
            bandwidth: BandwidthPolicy::Silverman,
        }
    }
}

/// Value of the penalty on one batch and its gradient with respect to the
/// probability rows. `groups` and `labels` are the one-hot encodings.
pub fn penalty_value_and_grad(
    spec: &PenaltySpec,
    probs: &SampleBatch,
    groups: &SampleBatch,
    labels: &SampleBatch,
) -> Result<(f64, Array2<f64>)> {
    let zeros = || Array2::zeros((probs.n(), probs.dim()));
    match spec.kind {
        PenaltyKind::None => Ok((0.0, zeros())),
        PenaltyKind::Dc => {
            let g = dcov_grad(probs, groups)?;
            Ok((g.value, g.grad))
        }
        PenaltyKind::Cdc => {
            if labels.n() != probs.n() {
                return Err(TrainError::Inconsistent(format!(
                    "{} label rows for {} predictions",
                    labels.n(),
                    probs.n()
                )));
            }
            let h = match spec.bandwidth {
                BandwidthPolicy::Silverman => silverman_bandwidth(probs.n(), labels.dim())?,
                BandwidthPolicy::Fixed(h) => h,
            };
            let g = cdc_grad(probs, groups, labels, h)?;
            Ok((g.value, g.grad))
        }
    }
}

/// Penalty weight and the running sums for its once-per-epoch update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub beta: f64,
    pub epoch_penalty_sum: f64,
    pub batch_count: usize,
    /// Optional cap on `lambda`; off by default.
    pub ceiling: Option<f64>,
}

impl DualState {
    pub fn new(lambda: f64, beta: f64) -> Self {
        Self {
            lambda,
            beta,
            epoch_penalty_sum: 0.0,
            batch_count: 0,
            ceiling: None,
        }
    }

    pub fn record(&mut self, penalty: f64) {
        self.epoch_penalty_sum += penalty;
        self.batch_count += 1;
    }

    pub fn mean_penalty(&self) -> Option<f64> {
        (self.batch_count > 0).then(|| self.epoch_penalty_sum / self.batch_count as f64)
    }

    /// `lambda += beta * mean penalty`, then resets the accumulators.
    pub fn dual_update(&mut self) -> Result<f64> {
        let mean = self.mean_penalty().ok_or(TrainError::NoBatches)?;
        self.lambda += self.beta * mean;
        if let Some(cap) = self.ceiling {
            self.lambda = self.lambda.min(cap);
        }
        self.epoch_penalty_sum = 0.0;
        self.batch_count = 0;
        Ok(self.lambda)
    }
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128]
}

/// Training hyperparameters. Defaults follow the tabular protocol: batch
/// 1024, learning rate 0.1 with momentum 0.9, 40 epochs, learning rate
/// divided by 10 at the start of (0-based) epochs 15 and 30.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_milestones: Vec<usize>,
    pub lambda_init: f64,
    pub beta: f64,
    pub lambda_ceiling: Option<f64>,
    pub penalty: PenaltySpec,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub eo_mode: EoMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 1024,
            lr: 0.1,
            momentum: 0.9,
            lr_decay_factor: 10.0,
            lr_milestones: vec![15, 30],
            lambda_init: 2.0,
            beta: 0.5,
            lambda_ceiling: None,
            penalty: PenaltySpec::default(),
            hidden: default_hidden(),
            eo_mode: EoMode::Binary,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size < 2 {
            problems.push(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            problems.push(format!("lr_decay_factor must be positive, got {}", self.lr_decay_factor));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            problems.push(format!("lambda_init must be nonnegative, got {}", self.lambda_init));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            problems.push(format!("beta must be nonnegative, got {}", self.beta));
        }
        if let Some(cap) = self.lambda_ceiling {
            if cap.is_nan() || cap < self.lambda_init {
                problems.push(format!("lambda_ceiling {cap} is below lambda_init {}", self.lambda_init));
            }
        }
        if let BandwidthPolicy::Fixed(h) = self.penalty.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                problems.push(format!("fixed bandwidth must be positive, got {h}"));
            }
        }
        if self.hidden.contains(&0) {
            problems.push("hidden layer widths must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::Config(problems))
        }
    }

    /// Learning rate in effect during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr / self.lr_decay_factor.powi(drops as i32)
    }

    pub fn layer_sizes(&self, input: usize, classes: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub penalty_mean: f64,
    pub batch_penalties: Vec<f64>,
    pub batches: usize,
    /// Batches with a single sample; they get penalty 0.
    pub singleton_batches: usize,
}

/// One optimization pass over `data` in a seeded order. `lambda` is read
/// from `dual` and left unchanged; every batch penalty is recorded into it.
pub fn train_epoch(
    model: &mut Mlp,
    data: &Dataset,
    dual: &mut DualState,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if data.n() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64])));
    let lr = config.lr_at(epoch);
    let penalized = config.penalty.kind != PenaltyKind::None;

    let mut loss_sum = 0.0;
    let mut batch_penalties = Vec::new();
    let mut singleton_batches = 0;
    for rows in order.chunks(config.batch_size) {
        let x = data.features.select(Axis(0), rows);
        let labels: Vec<usize> = rows.iter().map(|&i| data.labels[i]).collect();
        let trace = model.forward(x.view())?;
        let (loss, mut dlogits) = softmax_cross_entropy(&trace.probs, &labels)?;
        loss_sum += loss;

        let mut penalty = 0.0;
        if penalized {
            if rows.len() < 2 {
                singleton_batches += 1;
            } else {
                let groups: Vec<usize> = rows.iter().map(|&i| data.groups[i]).collect();
                let probs = SampleBatch::new(trace.probs.clone())?;
                let z = SampleBatch::new(one_hot(&groups, data.num_groups))?;
                let u = SampleBatch::new(one_hot(&labels, data.num_classes))?;
                let (value, grad) = penalty_value_and_grad(&config.penalty, &probs, &z, &u)?;
                penalty = value;
                if dual.lambda != 0.0 {
                    dlogits += &softmax_backward(&trace.probs, &(grad * dual.lambda));
                }
            }
            dual.record(penalty);
        }
        batch_penalties.push(penalty);

        let grads = model.backward(&trace, OutputGrad::Logits(dlogits))?;
        model.sgd_momentum_step(&grads, lr, config.momentum)?;
    }
    let batches = batch_penalties.len();
    Ok(EpochStats {
        mean_loss: loss_sum / batches as f64,
        penalty_mean: batch_penalties.iter().sum::<f64>() / batches as f64,
        batch_penalties,
        batches,
        singleton_batches,
    })
}

/// One line of the training history stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub penalty_mean: f64,
    /// Penalty weight used during this epoch.
    pub lambda: f64,
    /// Penalty weight after this epoch's dual update.
    pub lambda_next: f64,
    pub lr: f64,
    pub singleton_batches: usize,
    pub val_accuracy: Option<f64>,
    pub val_ddp: Option<f64>,
    pub val_deo: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// `lambda` of every epoch followed by the final value.
    pub fn lambda_trace(&self) -> Vec<f64> {
        let mut trace: Vec<f64> = self.records.iter().map(|r| r.lambda).collect();
        if let Some(last) = self.records.last() {
            trace.push(last.lambda_next);
        }
        trace
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn evaluate(model: &Mlp, data: &Dataset, mode: EoMode) -> Result<FairnessReport> {
    if data.n() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let pred = model.predict(data.features.view())?;
    let g = GroupedPredictions::new(
        pred,
        data.labels.clone(),
        data.groups.clone(),
        data.num_groups,
        data.num_classes,
    )?;
    Ok(FairnessReport::compute(&g, data.positive_class, mode)?)
}

/// Accuracy and both gaps on `data`. A gap whose group or stratum is empty
/// in a small split comes back as `None` instead of failing the run.
fn validation_metrics(model: &Mlp, data: &Dataset, mode: EoMode) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    if data.n() == 0 {
        return Ok((None, None, None));
    }
    let pred = model.predict(data.features.view())?;
    let g = GroupedPredictions::new(
        pred,
        data.labels.clone(),
        data.groups.clone(),
        data.num_groups,
        data.num_classes,
    )?;
    Ok((
        Some(g.accuracy()),
        delta_dp(&g, data.positive_class).ok(),
        delta_eo(&g, mode).ok(),
    ))
}

pub fn fit(train: &Dataset, val: Option<&Dataset>, config: &TrainConfig) -> Result<(Mlp, TrainingHistory)> {
    fit_with(train, val, config, |_| {})
}

/// [`fit`], calling `on_epoch` with every history record as it is produced.
pub fn fit_with(
    train: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Mlp, TrainingHistory)> {
    config.validate()?;
    if train.n() == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if config.penalty.kind != PenaltyKind::None && (train.num_groups < 2 || train.num_classes < 2) {
        return Err(TrainError::Inconsistent(format!(
            "penalized training needs at least 2 groups and 2 classes, got {} and {}",
            train.num_groups, train.num_classes
        )));
    }
    let sizes = config.layer_sizes(train.dim(), train.num_classes);
    let mut model = Mlp::new(&sizes, derive_seed(config.seed, &[INIT_STREAM]))?;
    let mut dual = DualState::new(config.lambda_init, config.beta);
    dual.ceiling = config.lambda_ceiling;
    let mut history = TrainingHistory::default();

    for epoch in 0..config.epochs {
        let lambda = dual.lambda;
        let stats = train_epoch(&mut model, train, &mut dual, config, epoch)?;
        let lambda_next = if dual.batch_count > 0 { dual.dual_update()? } else { dual.lambda };
        let (val_accuracy, val_ddp, val_deo) = match val {
            Some(v) => validation_metrics(&model, v, config.eo_mode)?,
            None => (None, None, None),
        };
        let record = EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            penalty_mean: stats.penalty_mean,
            lambda,
            lambda_next,
            lr: config.lr_at(epoch),
            singleton_batches: stats.singleton_batches,
            val_accuracy,
            val_ddp,
            val_deo,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok((model, history))
}
