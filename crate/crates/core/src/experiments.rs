//! Monte Carlo convergence studies and penalty-weight sweeps.
//!
//! Every trial draws from its own seed `derive_seed(master, [n, trial])`,
//! so results do not depend on thread count or scheduling. Set
//! `DCFAIR_THREADS` to cap the worker threads used here.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataio::{one_hot, DataError, Splits};
use crate::derive_seed;
use crate::fairtrain::{evaluate, fit, PenaltyKind, PenaltySpec, TrainConfig, TrainError};
use crate::stats::{cdc_stat, dcov, dcov_sform, silverman_bandwidth, SampleBatch, StatsError};

pub const THREADS_ENV: &str = "DCFAIR_THREADS";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Runs `f` on a pool limited by `DCFAIR_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

/// Sample pairs for the distance-covariance study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DcDistribution {
    /// `Y ~ N(0, I_p)` and `Z ~ N(0, I_q)` independent; population value 0.
    IndependentNormal { p: usize, q: usize },
    /// `Y ~ N(0, I_p)` and `Z = Y`.
    Identical { p: usize },
}

impl DcDistribution {
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> (SampleBatch, SampleBatch) {
        let (y, z) = match *self {
            DcDistribution::IndependentNormal { p, q } => {
                let y = normal_matrix(rng, n, p);
                (y, normal_matrix(rng, n, q))
            }
            DcDistribution::Identical { p } => {
                let y = normal_matrix(rng, n, p);
                (y.clone(), y)
            }
        };
        (SampleBatch::new(y).expect("finite draw"), SampleBatch::new(z).expect("finite draw"))
    }

    pub fn known_target(&self) -> Option<f64> {
        match self {
            DcDistribution::IndependentNormal { .. } => Some(0.0),
            DcDistribution::Identical { .. } => None,
        }
    }
}

/// Triples `(Y, Z, U)` for the conditional study. `U` is uniform on two
/// categories, one-hot encoded; `Y = 2u + e1` with `e1 ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdcDistribution {
    /// `Z = -u + e2` with `e2` independent of `e1`, so `Y` and `Z` are
    /// independent given `U`; population value 0.
    ConditionallyIndependent,
    /// `Z = Y`.
    Dependent,
}

impl CdcDistribution {
    pub fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> (SampleBatch, SampleBatch, SampleBatch) {
        let u: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(0.5))).collect();
        let y = Array2::from_shape_fn((n, 1), |(i, _)| 2.0 * u[i] as f64 + rng.sample::<f64, _>(StandardNormal));
        let z = match self {
            CdcDistribution::ConditionallyIndependent => {
                Array2::from_shape_fn((n, 1), |(i, _)| -(u[i] as f64) + rng.sample::<f64, _>(StandardNormal))
            }
            CdcDistribution::Dependent => y.clone(),
        };
        (
            SampleBatch::new(y).expect("finite draw"),
            SampleBatch::new(z).expect("finite draw"),
            SampleBatch::new(one_hot(&u, 2)).expect("finite draw"),
        )
    }

    pub fn known_target(&self) -> Option<f64> {
        match self {
            CdcDistribution::ConditionallyIndependent => Some(0.0),
            CdcDistribution::Dependent => None,
        }
    }

    pub const CONDITIONING_DIM: usize = 2;
}

/// Order statistics of a sample, computed after sorting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "summary of an empty sample");
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: quantile(&sorted, 0.5),
            q10: quantile(&sorted, 0.1),
            q90: quantile(&sorted, 0.9),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Results at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrial {
    pub n: usize,
    pub trials: usize,
    pub target: f64,
    /// Statistic value of every trial, in trial order.
    pub values: Vec<f64>,
    /// `|value - target|` of every trial.
    pub deviations: Vec<f64>,
    pub value_summary: Summary,
    pub summary: Summary,
    pub epsilon: f64,
    pub exceed_rate: f64,
    /// Kernel bandwidth at this `n` (conditional study only).
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub grid: Vec<usize>,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl StudySpec {
    fn validate(&self, min_n: usize) -> Result<()> {
        if self.grid.is_empty() {
            return Err(ExperimentError::InvalidStudy("empty sample-size grid".into()));
        }
        if let Some(&n) = self.grid.iter().find(|&&n| n < min_n) {
            return Err(ExperimentError::InvalidStudy(format!("sample size {n} is below {min_n}")));
        }
        if self.trials == 0 {
            return Err(ExperimentError::InvalidStudy("trials must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ExperimentError::InvalidStudy(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn assemble(n: usize, spec: &StudySpec, target: f64, values: Vec<f64>, bandwidth: Option<f64>) -> ConvergenceTrial {
    let deviations: Vec<f64> = values.iter().map(|v| (v - target).abs()).collect();
    let exceed = deviations.iter().filter(|&&d| d > spec.epsilon).count();
    ConvergenceTrial {
        n,
        trials: spec.trials,
        target,
        value_summary: Summary::of(&values),
        summary: Summary::of(&deviations),
        exceed_rate: exceed as f64 / spec.trials as f64,
        values,
        deviations,
        epsilon: spec.epsilon,
        bandwidth,
    }
}

fn trial_rng(seed: u64, n: usize, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[n as u64, trial as u64]))
}

/// Deviation of `dcov` from its population value across a sample-size grid.
/// `target` is required when the distribution has no known value.
pub fn convergence_study_dc(dist: DcDistribution, spec: &StudySpec, target: Option<f64>) -> Result<Vec<ConvergenceTrial>> {
    spec.validate(2)?;
    let target = target.or(dist.known_target()).ok_or_else(|| {
        ExperimentError::InvalidStudy("this distribution needs a reference target (see reference_dc)".into())
    })?;
    with_thread_cap(|| {
        spec.grid
            .iter()
            .map(|&n| {
                let values = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| {
                        let (y, z) = dist.draw(n, &mut trial_rng(spec.seed, n, t));
                        dcov(&y, &z).map(|r| r.value)
                    })
                    .collect::<std::result::Result<Vec<f64>, _>>()?;
                Ok(assemble(n, spec, target, values, None))
            })
            .collect()
    })
}

/// Same as [`convergence_study_dc`] for `cdc_stat` with Silverman's
/// bandwidth at each `n`.
pub fn convergence_study_cdc(dist: CdcDistribution, spec: &StudySpec, target: Option<f64>) -> Result<Vec<ConvergenceTrial>> {
    spec.validate(2)?;
    let target = target.or(dist.known_target()).ok_or_else(|| {
        ExperimentError::InvalidStudy("this distribution needs a reference target (see reference_cdc)".into())
    })?;
    with_thread_cap(|| {
        spec.grid
            .iter()
            .map(|&n| {
                let h = silverman_bandwidth(n, CdcDistribution::CONDITIONING_DIM)?;
                let values = (0..spec.trials)
                    .into_par_iter()
                    .map(|t| {
                        let (y, z, u) = dist.draw(n, &mut trial_rng(spec.seed, n, t));
                        cdc_stat(&y, &z, &u, h).map(|r| r.value)
                    })
                    .collect::<std::result::Result<Vec<f64>, _>>()?;
                Ok(assemble(n, spec, target, values, Some(h)))
            })
            .collect()
    })
}

/// Single large draw used as a stand-in for the population value. Uses the
/// O(n)-memory route, so `n = 8192` is cheap on memory.
pub fn reference_dc(dist: DcDistribution, n: usize, seed: u64) -> Result<f64> {
    let (y, z) = dist.draw(n, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(dcov_sform(&y, &z)?.value)
}

/// Single large draw of the conditional statistic. Memory grows as `n^2`
/// (a few `n x n` matrices), so keep `n` at a few thousand.
pub fn reference_cdc(dist: CdcDistribution, n: usize, seed: u64) -> Result<f64> {
    let (y, z, u) = dist.draw(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let h = silverman_bandwidth(n, CdcDistribution::CONDITIONING_DIM)?;
    Ok(cdc_stat(&y, &z, &u, h)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub lambda_init: f64,
    pub kind: PenaltyKind,
    pub seed: u64,
    pub accuracy: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCell {
    pub lambda_init: f64,
    pub kind: PenaltyKind,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub delta_dp_mean: f64,
    pub delta_dp_std: f64,
    pub delta_eo_mean: f64,
    pub delta_eo_std: f64,
}

/// Config for one sweep cell. A zero initial weight also pins `beta` to 0,
/// otherwise dual ascent would lift it and the cell would not be a baseline.
pub fn cell_config(base: &TrainConfig, kind: PenaltyKind, lambda_init: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        penalty: PenaltySpec {
            kind,
            ..base.penalty
        },
        lambda_init,
        beta: if lambda_init == 0.0 { 0.0 } else { base.beta },
        seed,
        ..base.clone()
    }
}

/// Trains one model per `(kind, lambda_init, seed)` and evaluates it on the
/// test split of `splits(seed)`. Points come back ordered by kind, then
/// `lambda_init`, then seed, as given.
pub fn tradeoff_sweep<F>(
    splits: F,
    grid: &[f64],
    kinds: &[PenaltyKind],
    seeds: &[u64],
    base: &TrainConfig,
) -> Result<Vec<TradeoffPoint>>
where
    F: Fn(u64) -> Result<Splits> + Sync,
{
    if grid.is_empty() || kinds.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::InvalidStudy("empty lambda grid, kind list or seed list".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(ExperimentError::InvalidStudy(format!("lambda_init {bad} is not a nonnegative number")));
    }
    let data: Vec<Splits> = seeds.iter().map(|&s| splits(s)).collect::<Result<_>>()?;
    let cells: Vec<(PenaltyKind, f64, usize)> = kinds
        .iter()
        .flat_map(|&k| grid.iter().flat_map(move |&l| (0..seeds.len()).map(move |i| (k, l, i))))
        .collect();
    with_thread_cap(|| {
        cells
            .par_iter()
            .map(|&(kind, lambda_init, i)| {
                let cfg = cell_config(base, kind, lambda_init, seeds[i]);
                let (model, _) = fit(&data[i].train, Some(&data[i].val), &cfg)?;
                let report = evaluate(&model, &data[i].test, cfg.eo_mode)?;
                Ok(TradeoffPoint {
                    lambda_init,
                    kind,
                    seed: seeds[i],
                    accuracy: report.accuracy,
                    delta_dp: report.delta_dp,
                    delta_eo: report.delta_eo,
                })
            })
            .collect()
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation over seeds for every
/// `(kind, lambda_init)` cell, in first-appearance order.
pub fn aggregate(points: &[TradeoffPoint]) -> Vec<TradeoffCell> {
    let mut keys: Vec<(PenaltyKind, f64)> = Vec::new();
    for p in points {
        if !keys.iter().any(|&(k, l)| k == p.kind && l.to_bits() == p.lambda_init.to_bits()) {
            keys.push((p.kind, p.lambda_init));
        }
    }
    keys.into_iter()
        .map(|(kind, lambda_init)| {
            let cell: Vec<&TradeoffPoint> = points
                .iter()
                .filter(|p| p.kind == kind && p.lambda_init.to_bits() == lambda_init.to_bits())
                .collect();
            let col = |f: fn(&TradeoffPoint) -> f64| mean_std(&cell.iter().map(|p| f(p)).collect::<Vec<_>>());
            let (accuracy_mean, accuracy_std) = col(|p| p.accuracy);
            let (delta_dp_mean, delta_dp_std) = col(|p| p.delta_dp);
            let (delta_eo_mean, delta_eo_std) = col(|p| p.delta_eo);
            TradeoffCell {
                lambda_init,
                kind,
                seeds: cell.len(),
                accuracy_mean,
                accuracy_std,
                delta_dp_mean,
                delta_dp_std,
                delta_eo_mean,
                delta_eo_std,
            }
        })
        .collect()
}

/// First 12 hex digits of the SHA-256 of `grid`'s JSON form.
pub fn grid_hash<T: Serialize>(grid: &T) -> String {
    let bytes = serde_json::to_vec(grid).expect("grid serializes");
    hex::encode(Sha256::digest(&bytes))[..12].to_string()
}

/// `dir/<prefix>_seed<seed>_grid<hash>.<ext>`.
pub fn output_path<T: Serialize>(dir: &Path, prefix: &str, seed: u64, grid: &T, ext: &str) -> PathBuf {
    dir.join(format!("{prefix}_seed{seed}_grid{}.{ext}", grid_hash(grid)))
}

#[derive(Serialize)]
struct TrialRow {
    n: usize,
    trial: usize,
    value: f64,
    deviation: f64,
    bandwidth: Option<f64>,
}

/// One CSV row per trial.
pub fn write_trials_csv<W: Write>(out: W, results: &[ConvergenceTrial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for (trial, (&value, &deviation)) in r.values.iter().zip(&r.deviations).enumerate() {
            w.serialize(TrialRow {
                n: r.n,
                trial,
                value,
                deviation,
                bandwidth: r.bandwidth,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    n: usize,
    trials: usize,
    target: f64,
    epsilon: f64,
    exceed_rate: f64,
    bandwidth: Option<f64>,
    #[serde(flatten)]
    summary: &'a Summary,
}

/// Per-`n` summaries without the raw trial vectors.
pub fn write_summary_json<W: Write>(out: W, results: &[ConvergenceTrial]) -> Result<()> {
    let rows: Vec<SummaryRow> = results
        .iter()
        .map(|r| SummaryRow {
            n: r.n,
            trials: r.trials,
            target: r.target,
            epsilon: r.epsilon,
            exceed_rate: r.exceed_rate,
            bandwidth: r.bandwidth,
            summary: &r.summary,
        })
        .collect();
    serde_json::to_writer_pretty(out, &rows)?;
    Ok(())
}

pub fn write_points_csv<W: Write>(out: W, points: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cells_csv<W: Write>(out: W, cells: &[TradeoffCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{prepare_dataset, synth_biased, SplitFractions};

    fn spec(grid: Vec<usize>, trials: usize) -> StudySpec {
        StudySpec {
            grid,
            trials,
            epsilon: 0.05,
            seed: 17,
        }
    }

    #[test]
    fn dc_study_is_reproducible_and_shaped() {
        let dist = DcDistribution::IndependentNormal { p: 1, q: 1 };
        let a = convergence_study_dc(dist, &spec(vec![16, 64], 5), None).unwrap();
        let b = convergence_study_dc(dist, &spec(vec![16, 64], 5), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|t| t.deviations.len() == 5 && (0.0..=1.0).contains(&t.exceed_rate)));
        assert!(a.iter().all(|t| t.deviations.iter().all(|&d| d >= 0.0)));

        let single = convergence_study_dc(dist, &spec(vec![32], 1), None).unwrap();
        assert_eq!(single, convergence_study_dc(dist, &spec(vec![32], 1), None).unwrap());
    }

    #[test]
    fn identical_pairs_need_a_reference() {
        let dist = DcDistribution::Identical { p: 1 };
        assert!(convergence_study_dc(dist, &spec(vec![16], 2), None).is_err());
        let reference = reference_dc(dist, 512, 1).unwrap();
        assert!(reference > 0.0);
        let r = convergence_study_dc(dist, &spec(vec![16], 2), Some(reference)).unwrap();
        assert_eq!(r[0].target, reference);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let dist = DcDistribution::IndependentNormal { p: 1, q: 1 };
        assert!(convergence_study_dc(dist, &spec(vec![], 5), None).is_err());
        assert!(convergence_study_dc(dist, &spec(vec![1, 8], 5), None).is_err());
        assert!(convergence_study_dc(dist, &spec(vec![8], 0), None).is_err());
    }

    #[test]
    fn cdc_study_records_bandwidth() {
        let r = convergence_study_cdc(CdcDistribution::ConditionallyIndependent, &spec(vec![20, 40], 3), None).unwrap();
        assert_eq!(r[0].bandwidth, Some(silverman_bandwidth(20, 2).unwrap()));
        assert!(r[1].bandwidth < r[0].bandwidth);
        assert!(convergence_study_cdc(CdcDistribution::Dependent, &spec(vec![20], 3), None).is_err());
        assert!(reference_cdc(CdcDistribution::Dependent, 200, 1).unwrap() > 0.0);
    }

    #[test]
    fn conditional_construction_is_as_documented() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (y, z, u) = CdcDistribution::Dependent.draw(50, &mut rng);
        assert_eq!(y, z);
        assert!(u.data().rows().into_iter().all(|r| r.sum() == 1.0));
    }

    #[test]
    fn summary_quantiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.mean, s.median, s.min, s.max), (3.0, 3.0, 1.0, 5.0));
        assert!((s.q10 - 1.4).abs() < 1e-12);
        assert_eq!(Summary::of(&[1.0, 2.0]).median, 1.5);
    }

    #[test]
    fn aggregate_mean_and_sample_std() {
        let pt = |lambda_init, seed, accuracy| TradeoffPoint {
            lambda_init,
            kind: PenaltyKind::Dc,
            seed,
            accuracy,
            delta_dp: 0.1,
            delta_eo: 0.2,
        };
        let cells = aggregate(&[pt(0.5, 1, 0.7), pt(0.5, 2, 0.9), pt(2.0, 1, 0.8)]);
        assert_eq!(cells.len(), 2);
        assert!((cells[0].accuracy_mean - 0.8).abs() < 1e-15);
        assert!((cells[0].accuracy_std - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!(cells[1].accuracy_std, 0.0);
        assert_eq!(cells[0].seeds, 2);
    }

    #[test]
    fn sweep_shape_and_zero_lambda_baseline() {
        let base = TrainConfig {
            epochs: 2,
            batch_size: 128,
            hidden: vec![8],
            ..TrainConfig::default()
        };
        let provider = |s: u64| {
            let d = synth_biased(300, 0.8, 0.5, s)?;
            Ok(prepare_dataset(&d, SplitFractions::default(), s)?)
        };
        let kinds = [PenaltyKind::None, PenaltyKind::Dc];
        let points = tradeoff_sweep(provider, &[0.0, 4.0], &kinds, &[1, 2], &base).unwrap();
        assert_eq!(points.len(), 2 * 2 * 2);
        for seed in [1, 2] {
            let find = |k, l| points.iter().find(|p| p.kind == k && p.lambda_init == l && p.seed == seed).unwrap();
            let none = find(PenaltyKind::None, 0.0);
            let dc0 = find(PenaltyKind::Dc, 0.0);
            assert_eq!((none.accuracy, none.delta_dp, none.delta_eo), (dc0.accuracy, dc0.delta_dp, dc0.delta_eo));
        }
        assert_eq!(cell_config(&base, PenaltyKind::Dc, 0.0, 3).beta, 0.0);
        assert_eq!(cell_config(&base, PenaltyKind::Dc, 1.0, 3).beta, base.beta);
    }

    #[test]
    fn output_files_embed_seed_and_grid() {
        let p = output_path(Path::new("/tmp"), "converge_dc", 7, &vec![32, 128], "csv");
        let name = p.file_name().unwrap().to_str().unwrap();
        assert!(name.starts_with("converge_dc_seed7_grid") && name.ends_with(".csv"));
        assert_ne!(grid_hash(&vec![32, 128]), grid_hash(&vec![32, 256]));

        let r = convergence_study_dc(DcDistribution::IndependentNormal { p: 1, q: 1 }, &spec(vec![8, 16], 3), None).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.starts_with("n,trial,value,deviation,bandwidth"));
        let mut buf = Vec::new();
        write_summary_json(&mut buf, &r).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert!(v[0]["median"].is_number() && v[1]["exceed_rate"].is_number());
    }
}
