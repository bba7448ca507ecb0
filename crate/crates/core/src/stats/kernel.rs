use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};

use super::{Result, SampleBatch, StatsError};

/// Silverman's rule of thumb for an `r`-dimensional conditioning variable:
/// `h = (n (r + 2) / 4)^(-1 / (r + 4))`.
pub fn silverman_bandwidth(n: usize, r: usize) -> Result<f64> {
    if n == 0 || r == 0 {
        return Err(StatsError::InvalidSilvermanArgs { n, r });
    }
    let base = n as f64 * (r as f64 + 2.0) / 4.0;
    Ok(base.powf(-1.0 / (r as f64 + 4.0)))
}

/// Gaussian kernel matrix `K_kl = exp(-||U_k - U_l||^2 / (2 h^2)) / (sqrt(2 pi) h)`.
///
/// The one-dimensional prefactor is used for every `r`. Column-normalized
/// weights do not see it, only the `(sum_i K_iu / n)^4` weight of the
/// conditional statistic does.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    bandwidth: f64,
    dim_u: usize,
}

pub fn gaussian_kernel_matrix(u: &SampleBatch, h: f64) -> Result<KernelMatrix> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(StatsError::InvalidBandwidth(h));
    }
    let n = u.n();
    let data = u.view();
    let prefactor = 1.0 / ((2.0 * PI).sqrt() * h);
    let denom = 2.0 * h * h;
    let mut values = Array2::<f64>::from_elem((n, n), prefactor);
    for k in 0..n {
        for l in (k + 1)..n {
            let sq: f64 = data
                .row(k)
                .iter()
                .zip(data.row(l).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = prefactor * (-sq / denom).exp();
            values[[k, l]] = v;
            values[[l, k]] = v;
        }
    }
    Ok(KernelMatrix {
        values,
        bandwidth: h,
        dim_u: u.dim(),
    })
}

/// Columns of the kernel matrix for one representative of each group of
/// bit-identical rows of `U`, with the group sizes, in order of first
/// appearance. Equal rows give equal columns, so this is the compressed
/// form of [`gaussian_kernel_matrix`] without building the `n x n` matrix.
pub(crate) fn distinct_kernel_columns(u: &SampleBatch, h: f64) -> Result<(Array2<f64>, Vec<usize>)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(StatsError::InvalidBandwidth(h));
    }
    let n = u.n();
    let data = u.view();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut counts = Vec::new();
    for (k, row) in data.outer_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        match seen.get(&key) {
            Some(&g) => counts[g] += 1,
            None => {
                seen.insert(key, reps.len());
                reps.push(k);
                counts.push(1);
            }
        }
    }
    let prefactor = 1.0 / ((2.0 * PI).sqrt() * h);
    let denom = 2.0 * h * h;
    let mut kr = Array2::<f64>::zeros((n, reps.len()));
    for (c, &rep) in reps.iter().enumerate() {
        let ur = data.row(rep);
        for k in 0..n {
            kr[[k, c]] = if k == rep {
                prefactor
            } else {
                let sq: f64 = data.row(k).iter().zip(ur.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                prefactor * (-sq / denom).exp()
            };
        }
    }
    Ok((kr, counts))
}

impl KernelMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `sum_i K_iu` for every `u`.
    pub fn column_sums(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(0))
    }

    /// `omega_ku = K_ku / sum_k K_ku`; every column sums to one.
    pub fn weights(&self) -> Array2<f64> {
        let sums = self.column_sums();
        &self.values / &sums.view().insert_axis(Axis(0))
    }

    /// Groups bit-identical columns. Returns one representative column index
    /// per group and the group sizes, in order of first appearance.
    ///
    /// Samples sharing a conditioning value produce identical columns, so
    /// with discrete `U` the number of groups is the number of distinct
    /// values rather than `n`.
    pub fn distinct_columns(&self) -> (Vec<usize>, Vec<usize>) {
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut reps = Vec::new();
        let mut counts = Vec::new();
        for (u, col) in self.values.axis_iter(Axis(1)).enumerate() {
            let key: Vec<u64> = col.iter().map(|v| v.to_bits()).collect();
            match seen.get(&key) {
                Some(&g) => counts[g] += 1,
                None => {
                    seen.insert(key, reps.len());
                    reps.push(u);
                    counts.push(1);
                }
            }
        }
        (reps, counts)
    }
}
