use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dataset::Dataset;
use super::{DataError, Result};

pub const INFORMATIVE: usize = 4;
pub const PROXIES: usize = 4;
pub const NOISE: usize = 2;

/// Shift of the informative features, `(2y - 1) * SIGNAL`.
const SIGNAL: f64 = 0.35;
/// Shift of the proxy features at `bias = 1`, `(2g - 1) * bias * PROXY_SHIFT`.
const PROXY_SHIFT: f64 = 1.0;
/// Largest label-rate gap between groups, as a fraction of the room left by
/// the class balance.
const LABEL_SKEW: f64 = 0.4;

/// Two-group binary classification data with a tunable unfairness knob.
///
/// Each row draws a group `g ~ Bernoulli(1/2)` and a label with
/// `P(y = 1 | g) = b + (2g - 1) * 0.4 * bias * min(b, 1 - b)` where `b` is
/// `class_balance`. Features are, in order:
///
/// * 4 informative columns `(2y - 1) * 0.35 + N(0, 1)`,
/// * 4 proxy columns `(2g - 1) * bias + N(0, 1)`,
/// * 2 pure-noise columns `N(0, 1)`.
///
/// With `bias = 0` group and label are independent and the proxies carry
/// nothing, so an unconstrained classifier is fair up to sampling noise.
/// Raising `bias` skews label rates between groups and lets the proxies
/// leak the group, so both demographic-parity and equalized-odds gaps grow.
/// Features are returned unstandardized.
pub fn synth_biased(n: usize, bias: f64, class_balance: f64, seed: u64) -> Result<Dataset> {
    if n < 100 {
        return Err(DataError::TooFewSamples { n, min: 100 });
    }
    if !(0.0..=1.0).contains(&bias) {
        return Err(DataError::InvalidArgument(format!("bias must lie in [0, 1], got {bias}")));
    }
    if !(class_balance > 0.0 && class_balance < 1.0) {
        return Err(DataError::InvalidArgument(format!(
            "class balance must lie in (0, 1), got {class_balance}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skew = LABEL_SKEW * bias * class_balance.min(1.0 - class_balance);
    let dim = INFORMATIVE + PROXIES + NOISE;
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for mut row in features.rows_mut() {
        let g = usize::from(rng.random_bool(0.5));
        let sg = 2.0 * g as f64 - 1.0;
        let y = usize::from(rng.random_bool(class_balance + sg * skew));
        let sy = 2.0 * y as f64 - 1.0;
        for (j, v) in row.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            *v = eps
                + if j < INFORMATIVE {
                    sy * SIGNAL
                } else if j < INFORMATIVE + PROXIES {
                    sg * bias * PROXY_SHIFT
                } else {
                    0.0
                };
        }
        labels.push(y);
        groups.push(g);
    }
    let feature_names = (0..INFORMATIVE)
        .map(|i| format!("informative_{i}"))
        .chain((0..PROXIES).map(|i| format!("proxy_{i}")))
        .chain((0..NOISE).map(|i| format!("noise_{i}")))
        .collect();
    Ok(Dataset {
        features,
        labels,
        groups,
        num_classes: 2,
        num_groups: 2,
        positive_class: 1,
        feature_names,
        class_names: vec!["0".into(), "1".into()],
        group_names: vec!["0".into(), "1".into()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_biased(500, 0.5, 0.5, 3).unwrap();
        assert_eq!(a, synth_biased(500, 0.5, 0.5, 3).unwrap());
        assert_ne!(a.features, synth_biased(500, 0.5, 0.5, 4).unwrap().features);
        assert_eq!(a.dim(), 10);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(synth_biased(99, 0.5, 0.5, 0), Err(DataError::TooFewSamples { .. })));
        assert!(synth_biased(200, 1.5, 0.5, 0).is_err());
        assert!(synth_biased(200, -0.1, 0.5, 0).is_err());
        assert!(synth_biased(200, 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn bias_drives_label_and_proxy_association() {
        let rate = |d: &Dataset, g: usize| {
            let (pos, tot) = d
                .labels
                .iter()
                .zip(&d.groups)
                .filter(|(_, &gg)| gg == g)
                .fold((0, 0), |(p, t), (&y, _)| (p + y, t + 1));
            pos as f64 / tot as f64
        };
        let fair = synth_biased(20_000, 0.0, 0.5, 1).unwrap();
        let biased = synth_biased(20_000, 0.9, 0.5, 1).unwrap();
        assert!((rate(&fair, 1) - rate(&fair, 0)).abs() < 0.03);
        // expected gap 2 * 0.4 * 0.9 * 0.5 = 0.36
        assert!(((rate(&biased, 1) - rate(&biased, 0)) - 0.36).abs() < 0.03);

        let proxy_gap = |d: &Dataset| {
            let mean = |g: usize| {
                let v: Vec<f64> = (0..d.n()).filter(|&i| d.groups[i] == g).map(|i| d.features[[i, 4]]).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            mean(1) - mean(0)
        };
        assert!(proxy_gap(&fair).abs() < 0.06);
        assert!((proxy_gap(&biased) - 1.8).abs() < 0.06);
    }
}
