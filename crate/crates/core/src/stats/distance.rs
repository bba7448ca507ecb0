use ndarray::{Array1, Array2, Axis};

use super::{ensure_same_n, Result, SampleBatch, StatsError};

/// Euclidean distances between every pair of rows of a [`SampleBatch`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDistanceMatrix {
    values: Array2<f64>,
    source_dim: usize,
}

impl PairwiseDistanceMatrix {
    /// Wraps a precomputed matrix after checking that it is square,
    /// symmetric, nonnegative, finite and zero on the diagonal.
    pub fn from_values(values: Array2<f64>, source_dim: usize) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != cols {
            return Err(StatsError::ShapeMismatch {
                expected: rows,
                rows,
                cols,
            });
        }
        for k in 0..rows {
            if values[[k, k]] != 0.0 {
                return Err(StatsError::InvalidDistanceMatrix(format!(
                    "diagonal entry {k} is {}",
                    values[[k, k]]
                )));
            }
            for l in (k + 1)..rows {
                let v = values[[k, l]];
                if !v.is_finite() || v < 0.0 {
                    return Err(StatsError::InvalidDistanceMatrix(format!(
                        "entry ({k}, {l}) is {v}"
                    )));
                }
                if v != values[[l, k]] {
                    return Err(StatsError::InvalidDistanceMatrix(format!(
                        "entries ({k}, {l}) and ({l}, {k}) differ"
                    )));
                }
            }
        }
        Ok(Self { values, source_dim })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// `values[k][l] = ||X_k - X_l||_2`.
///
/// Each entry is computed from the squared coordinate differences, which do
/// not depend on the order of the pair, so the result is exactly symmetric.
pub fn pairwise_distance_matrix(x: &SampleBatch) -> PairwiseDistanceMatrix {
    let (n, p) = (x.n(), x.dim());
    let data = x.view().as_standard_layout().into_owned();
    let data = data.as_slice().expect("standard layout");
    let mut values = Array2::<f64>::zeros((n, n));
    for (k, mut row) in values.outer_iter_mut().enumerate() {
        let xk = &data[k * p..(k + 1) * p];
        for (out, xl) in row.iter_mut().zip(data.chunks_exact(p)) {
            *out = xk.iter().zip(xl).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        }
    }
    PairwiseDistanceMatrix {
        values,
        source_dim: x.dim(),
    }
}

/// `A = D - (1/n) 1 D - (1/n) D 1 + (1/n^2) 1 D 1`, i.e. subtract row and
/// column means and add back the grand mean.
pub fn double_center(d: &PairwiseDistanceMatrix) -> Array2<f64> {
    let values = d.values();
    let n = values.nrows() as f64;
    let col_means: Array1<f64> = values.sum_axis(Axis(0)) / n;
    let row_means: Array1<f64> = values.sum_axis(Axis(1)) / n;
    let grand = row_means.sum() / n;
    let mut centered = values.clone();
    for (mut row, &rm) in centered.outer_iter_mut().zip(&row_means) {
        for (v, &cm) in row.iter_mut().zip(&col_means) {
            *v = *v - cm - rm + grand;
        }
    }
    centered
}

/// Double-centered distance matrices of a pair of samples, plus the raw
/// distances they came from.
#[derive(Debug, Clone)]
pub struct CenteredDistancePair {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub raw_a: PairwiseDistanceMatrix,
    pub raw_b: PairwiseDistanceMatrix,
}

impl CenteredDistancePair {
    pub fn new(y: &SampleBatch, z: &SampleBatch) -> Result<Self> {
        ensure_same_n("distance covariance", y, z)?;
        let raw_a = pairwise_distance_matrix(y);
        let raw_b = pairwise_distance_matrix(z);
        Ok(Self {
            a: double_center(&raw_a),
            b: double_center(&raw_b),
            raw_a,
            raw_b,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SampleBatch {
        SampleBatch::new(Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0))).unwrap()
    }

    #[test]
    fn two_points_on_a_line() {
        let x = SampleBatch::from_column(&[0.0, 2.0]).unwrap();
        assert_eq!(pairwise_distance_matrix(&x).values(), &array![[0.0, 2.0], [2.0, 0.0]]);
    }

    #[test]
    fn single_row_gives_single_zero() {
        let x = SampleBatch::from_rows(&[[1.0, -4.0, 2.5]]).unwrap();
        assert_eq!(pairwise_distance_matrix(&x).values(), &array![[0.0]]);
    }

    #[test]
    fn matches_two_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_batch(&mut rng, 8, 3);
        let d = pairwise_distance_matrix(&x);
        for k in 0..8 {
            for l in 0..8 {
                let mut s = 0.0;
                for c in 0..3 {
                    s += (x.row(k)[c] - x.row(l)[c]).powi(2);
                }
                assert_relative_eq!(d.values()[[k, l]], s.sqrt(), max_relative = 1e-12);
            }
        }
        assert!(PairwiseDistanceMatrix::from_values(d.values().clone(), 3).is_ok());
    }

    #[test]
    fn double_center_two_points() {
        let d = PairwiseDistanceMatrix::from_values(array![[0.0, 2.0], [2.0, 0.0]], 1).unwrap();
        assert_eq!(double_center(&d), array![[-1.0, 1.0], [1.0, -1.0]]);
    }

    #[test]
    fn double_center_zeros_stay_zero() {
        let d = PairwiseDistanceMatrix::from_values(Array2::zeros((5, 5)), 2).unwrap();
        assert_eq!(double_center(&d), Array2::<f64>::zeros((5, 5)));
    }

    #[test]
    fn double_center_matches_entrywise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 16;
        let mut raw = Array2::<f64>::zeros((n, n));
        for k in 0..n {
            for l in (k + 1)..n {
                let v = rng.random_range(0.0..10.0);
                raw[[k, l]] = v;
                raw[[l, k]] = v;
            }
        }
        let d = PairwiseDistanceMatrix::from_values(raw.clone(), 1).unwrap();
        let centered = double_center(&d);

        let nf = n as f64;
        let row_mean = |k: usize| (0..n).map(|l| raw[[k, l]]).sum::<f64>() / nf;
        let col_mean = |l: usize| (0..n).map(|k| raw[[k, l]]).sum::<f64>() / nf;
        let grand = raw.iter().sum::<f64>() / (nf * nf);
        for k in 0..n {
            for l in 0..n {
                let expected = raw[[k, l]] - row_mean(k) - col_mean(l) + grand;
                assert!((centered[[k, l]] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
        let scale = centered.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for s in centered.sum_axis(Axis(0)).iter().chain(centered.sum_axis(Axis(1)).iter()) {
            assert!(s.abs() <= 1e-9 * nf * scale);
        }
    }

    #[test]
    fn from_values_rejects_bad_matrices() {
        assert!(PairwiseDistanceMatrix::from_values(array![[0.0, 1.0], [2.0, 0.0]], 1).is_err());
        assert!(PairwiseDistanceMatrix::from_values(array![[1.0, 1.0], [1.0, 0.0]], 1).is_err());
        assert!(PairwiseDistanceMatrix::from_values(array![[0.0, -1.0], [-1.0, 0.0]], 1).is_err());
        assert!(PairwiseDistanceMatrix::from_values(Array2::zeros((2, 3)), 1).is_err());
    }

    #[test]
    fn centered_pair_requires_equal_counts() {
        let y = SampleBatch::from_column(&[0.0, 1.0]).unwrap();
        let z = SampleBatch::from_column(&[0.0, 1.0, 2.0]).unwrap();
        let err = CenteredDistancePair::new(&y, &z).unwrap_err();
        assert!(err.to_string().contains("2 vs 3"));
    }
}
