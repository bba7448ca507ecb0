use super::{ensure_same_n, CenteredDistancePair, Result, SampleBatch};

/// Empirical squared distance covariance `V^2_n(Y, Z)`.
///
/// The value is not clamped: rounding can leave it a hair below zero for
/// (near-)independent inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcovResult {
    pub value: f64,
    pub n: usize,
}

fn row_distance(x: &SampleBatch, k: usize, l: usize) -> f64 {
    x.row(k)
        .iter()
        .zip(x.row(l).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `(1/n^2) sum_{k,l} A_kl B_kl` with every mean and centered entry spelled
/// out as an explicit loop.
pub fn dcov_direct(y: &SampleBatch, z: &SampleBatch) -> Result<DcovResult> {
    ensure_same_n("distance covariance", y, z)?;
    let n = y.n();
    let nf = n as f64;

    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            a[k * n + l] = row_distance(y, k, l);
            b[k * n + l] = row_distance(z, k, l);
        }
    }

    let mut a_row = vec![0.0; n];
    let mut a_col = vec![0.0; n];
    let mut b_row = vec![0.0; n];
    let mut b_col = vec![0.0; n];
    let mut a_all = 0.0;
    let mut b_all = 0.0;
    for k in 0..n {
        for l in 0..n {
            a_row[k] += a[k * n + l];
            a_col[l] += a[k * n + l];
            b_row[k] += b[k * n + l];
            b_col[l] += b[k * n + l];
            a_all += a[k * n + l];
            b_all += b[k * n + l];
        }
    }
    let a_all = a_all / (nf * nf);
    let b_all = b_all / (nf * nf);

    let mut sum = 0.0;
    for k in 0..n {
        for l in 0..n {
            let big_a = a[k * n + l] - a_row[k] / nf - a_col[l] / nf + a_all;
            let big_b = b[k * n + l] - b_row[k] / nf - b_col[l] / nf + b_all;
            sum += big_a * big_b;
        }
    }
    Ok(DcovResult {
        value: sum / (nf * nf),
        n,
    })
}

/// `(1/n^2) <A, B>` over the double-centered distance matrices.
pub fn dcov(y: &SampleBatch, z: &SampleBatch) -> Result<DcovResult> {
    let pair = CenteredDistancePair::new(y, z)?;
    Ok(dcov_from_centered(&pair))
}

pub(crate) fn dcov_from_centered(pair: &CenteredDistancePair) -> DcovResult {
    let n = pair.n();
    let nf = n as f64;
    let inner: f64 = pair
        .a
        .iter()
        .zip(pair.b.iter())
        .map(|(a, b)| a * b)
        .sum();
    DcovResult {
        value: inner / (nf * nf),
        n,
    }
}

/// `S1 + S2 - 2 S3` with
///
/// * `S1 = (1/n^2) sum_{i,j} a_ij b_ij`
/// * `S2 = (1/n^2) sum_{i,j} a_ij * (1/n^2) sum_{i,j} b_ij`
/// * `S3 = (1/n^3) sum_{i,j,l} a_ij b_il`
///
/// Distances are streamed one row at a time, so memory stays O(n); this is
/// the route used for large reference samples.
pub fn dcov_sform(y: &SampleBatch, z: &SampleBatch) -> Result<DcovResult> {
    ensure_same_n("distance covariance", y, z)?;
    let n = y.n();
    let nf = n as f64;

    let mut s1 = 0.0;
    let mut a_total = 0.0;
    let mut b_total = 0.0;
    // sum_{i,j,l} a_ij b_il = sum_i (sum_j a_ij)(sum_l b_il)
    let mut triple = 0.0;
    let mut a_row = vec![0.0; n];
    let mut b_row = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            a_row[j] = row_distance(y, i, j);
            b_row[j] = row_distance(z, i, j);
        }
        let mut ra = 0.0;
        let mut rb = 0.0;
        for j in 0..n {
            s1 += a_row[j] * b_row[j];
            ra += a_row[j];
            rb += b_row[j];
        }
        a_total += ra;
        b_total += rb;
        triple += ra * rb;
    }
    let n2 = nf * nf;
    let s1 = s1 / n2;
    let s2 = (a_total / n2) * (b_total / n2);
    let s3 = triple / (n2 * nf);
    Ok(DcovResult {
        value: s1 + s2 - 2.0 * s3,
        n,
    })
}
