//! Monte-Carlo checks of the synthetic generator and the tradeoff sweep.

use dcfair::dataio::{prepare_dataset, synth_biased, SplitFractions, Splits};
use dcfair::derive_seed;
use dcfair::experiments::{aggregate, tradeoff_sweep, ExperimentError};
use dcfair::fairtrain::{evaluate, fit, PenaltyKind, PenaltySpec, TrainConfig};
use dcfair::metrics::EoMode;

fn splits(n: usize, bias: f64, seed: u64) -> Splits {
    let ds = synth_biased(n, bias, 0.5, derive_seed(seed, &[1])).unwrap();
    prepare_dataset(&ds, SplitFractions::default(), derive_seed(seed, &[2])).unwrap()
}

fn baseline_dp(n: usize, bias: f64, seed: u64) -> f64 {
    let s = splits(n, bias, seed);
    let config = TrainConfig {
        penalty: PenaltySpec::new(PenaltyKind::None),
        seed,
        ..TrainConfig::default()
    };
    let (model, _) = fit(&s.train, Some(&s.val), &config).unwrap();
    evaluate(&model, &s.test, EoMode::Binary).unwrap().delta_dp
}

#[test]
fn unbiased_data_gives_a_fair_baseline() {
    let gaps: Vec<f64> = (0..10).map(|s| baseline_dp(4000, 0.0, 500 + s)).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    println!("bias 0 baseline dDP per seed: {gaps:.4?}, mean {mean:.4}");
    // A single 600-row test split has sampling noise near 0.04 on the gap,
    // so the bound applies to the seed average.
    assert!(mean < 0.05, "{gaps:?}");
}

#[test]
fn strong_bias_gives_an_unfair_baseline() {
    let gaps: Vec<f64> = (0..10).map(|s| baseline_dp(4000, 0.9, 600 + s)).collect();
    println!("bias 0.9 baseline dDP per seed: {gaps:.4?}");
    assert!(gaps.iter().all(|&g| g > 0.2), "{gaps:?}");
}

#[test]
fn fairness_bias_grows_with_bias() {
    let mean = |bias: f64| (0..3).map(|s| baseline_dp(2000, bias, 700 + s)).sum::<f64>() / 3.0;
    let (lo, mid, hi) = (mean(0.0), mean(0.5), mean(0.9));
    assert!(lo < mid && mid < hi, "{lo} {mid} {hi}");
}

#[test]
fn dc_sweep_lowers_demographic_gap_as_lambda_grows() {
    let grid = [0.5, 2.0, 8.0];
    let seeds: Vec<u64> = (0..3).map(|i| 900 + i).collect();
    let points = tradeoff_sweep(
        |seed| Ok::<_, ExperimentError>(splits(4000, 0.9, seed)),
        &grid,
        &[PenaltyKind::Dc],
        &seeds,
        &TrainConfig::default(),
    )
    .unwrap();
    assert_eq!(points.len(), grid.len() * seeds.len());
    let cells = aggregate(&points);
    let means: Vec<f64> = cells.iter().map(|c| c.delta_dp_mean).collect();
    println!("dDP cell means over lambda {grid:?}: {means:.4?}");
    for &seed in &seeds {
        let trace: Vec<f64> = grid
            .iter()
            .map(|&l| points.iter().find(|p| p.seed == seed && p.lambda_init == l).unwrap().delta_dp)
            .collect();
        println!("seed {seed}: {trace:.4?}");
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
}
