use ndarray::{Array1, Array2, Axis, Zip};

use super::{
    distinct_kernel_columns, ensure_same_n, gaussian_kernel_matrix, pairwise_distance_matrix, KernelMatrix, PairwiseDistanceMatrix,
    Result, SampleBatch, StatsError,
};

/// Kernel-weighted conditional distance covariance `S_n(Y, Z, U)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdcResult {
    pub value: f64,
    pub n: usize,
    pub bandwidth: f64,
    /// `D^2_n(Y, Z | U_u)` for every `u`, when the route computes them.
    pub per_point: Option<Vec<f64>>,
}

fn check_square(n: usize, m: &Array2<f64>) -> Result<()> {
    if m.dim() != (n, n) {
        return Err(StatsError::ShapeMismatch {
            expected: n,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Local conditional distance covariance at conditioning point `u`:
/// `D1 + D2 - 2 D3` with weights `omega_ku = K_ku / sum_k K_ku`.
pub fn cdc_local(
    dy: &PairwiseDistanceMatrix,
    dz: &PairwiseDistanceMatrix,
    k: &KernelMatrix,
    u: usize,
) -> Result<f64> {
    let n = dy.n();
    check_square(n, dz.values())?;
    check_square(n, k.values())?;
    if u >= n {
        return Err(StatsError::IndexOutOfRange { index: u, n });
    }
    let col = k.values().column(u);
    let total: f64 = col.sum();
    let omega: Vec<f64> = col.iter().map(|v| v / total).collect();
    Ok(local_from_weights(dy.values(), dz.values(), &omega))
}

fn local_from_weights(dy: &Array2<f64>, dz: &Array2<f64>, omega: &[f64]) -> f64 {
    let n = omega.len();
    let mut d1 = 0.0;
    let mut y_mass = 0.0;
    let mut z_mass = 0.0;
    let mut d3 = 0.0;
    for k in 0..n {
        let dy_k = dy.row(k);
        let dz_k = dz.row(k);
        let mut cross = 0.0;
        let mut y_row = 0.0;
        let mut z_row = 0.0;
        for l in 0..n {
            let w = omega[l];
            cross += dy_k[l] * dz_k[l] * w;
            y_row += dy_k[l] * w;
            z_row += dz_k[l] * w;
        }
        d1 += omega[k] * cross;
        y_mass += omega[k] * y_row;
        z_mass += omega[k] * z_row;
        // sum_{l,m} dY_kl dZ_km w_l w_m factorizes per k
        d3 += omega[k] * y_row * z_row;
    }
    d1 + y_mass * z_mass - 2.0 * d3
}

fn check_inputs(y: &SampleBatch, z: &SampleBatch, u: &SampleBatch) -> Result<()> {
    ensure_same_n("conditional distance covariance (Y vs Z)", y, z)?;
    ensure_same_n("conditional distance covariance (Y vs U)", y, u)?;
    Ok(())
}

/// `(12/n) sum_u ((sum_i K_iu)^4 / n^4) D^2_n(Y, Z | U_u)`, evaluating the
/// local statistic separately at every sample.
pub fn cdc_stat_direct(y: &SampleBatch, z: &SampleBatch, u: &SampleBatch, h: f64) -> Result<CdcResult> {
    check_inputs(y, z, u)?;
    let k = gaussian_kernel_matrix(u, h)?;
    let dy = pairwise_distance_matrix(y);
    let dz = pairwise_distance_matrix(z);
    let n = y.n();
    let nf = n as f64;
    let sums = k.column_sums();

    let mut per_point = Vec::with_capacity(n);
    let mut total = 0.0;
    for idx in 0..n {
        let local = cdc_local(&dy, &dz, &k, idx)?;
        let weight = (sums[idx] / nf).powi(4);
        total += weight * local;
        per_point.push(local);
    }
    Ok(CdcResult {
        value: 12.0 / nf * total,
        n,
        bandwidth: h,
        per_point: Some(per_point),
    })
}

/// `(12/n^5)(E1 + E2 - 2 E3)` with
///
/// * `E1 = <(K1) . (K1), diag(K^T (D^Y . D^Z) K)>`
/// * `E2 = <diag(K^T D^Y K), diag(K^T D^Z K)>`
/// * `E3 = <K1, diag(K^T ((D^Y K) . (D^Z K)))>`
///
/// Repeated conditioning values give coinciding columns of `K`; each is
/// evaluated once and weighted by its multiplicity, so one-hot labels cost
/// O(n^2) instead of O(n^3).
pub fn cdc_stat(y: &SampleBatch, z: &SampleBatch, u: &SampleBatch, h: f64) -> Result<CdcResult> {
    check_inputs(y, z, u)?;
    let dy = pairwise_distance_matrix(y);
    let plan = CdcPlan::new(pairwise_distance_matrix(z).into_values(), u, h)?;
    Ok(CdcResult {
        value: plan.value(dy.values()),
        n: y.n(),
        bandwidth: h,
        per_point: None,
    })
}

/// The parts of the matrix route that depend only on `Z` and `U`.
///
/// `S_n` is linear in `D^Y`, so once these are in hand both the value
/// for a given `D^Y` and the derivative with respect to `D^Y` are cheap.
pub(crate) struct CdcPlan {
    n: usize,
    dz: Array2<f64>,
    /// Distinct kernel columns, `n x m`.
    kr: Array2<f64>,
    /// Multiplicity of each distinct column.
    mult: Array1<f64>,
    /// Column sums `sum_i K_iu`.
    sums: Array1<f64>,
    /// `D^Z K`, restricted to the distinct columns.
    dz_k: Array2<f64>,
    /// `diag(K^T D^Z K)` restricted to the distinct columns.
    qz: Array1<f64>,
}

/// `diag(A^T B)` for `n x m` matrices.
fn column_dots(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    (a * b).sum_axis(Axis(0))
}

impl CdcPlan {
    pub(crate) fn new(dz: Array2<f64>, u: &SampleBatch, h: f64) -> Result<Self> {
        let (kr, counts) = distinct_kernel_columns(u, h)?;
        let mult = counts.iter().map(|&c| c as f64).collect::<Array1<f64>>();
        let sums = kr.sum_axis(Axis(0));
        let dz_k = dz.dot(&kr);
        let qz = column_dots(&kr, &dz_k);
        Ok(Self {
            n: u.n(),
            dz,
            kr,
            mult,
            sums,
            dz_k,
            qz,
        })
    }

    fn scale(&self) -> f64 {
        12.0 / (self.n as f64).powi(5)
    }

    pub(crate) fn value(&self, dy: &Array2<f64>) -> f64 {
        let (n, m) = (self.n, self.kr.ncols());
        let kr = self.kr.as_slice().expect("standard layout");
        // D^Y K and (D^Y . D^Z) K in one sweep over the distance matrices
        let mut dy_k = Array2::<f64>::zeros((n, m));
        let mut joint_k = Array2::<f64>::zeros((n, m));
        let (dyk, jk) = (dy_k.as_slice_mut().expect("fresh"), joint_k.as_slice_mut().expect("fresh"));
        for (i, (dy_row, dz_row)) in dy.outer_iter().zip(self.dz.outer_iter()).enumerate() {
            let (dyk_i, jk_i) = (&mut dyk[i * m..(i + 1) * m], &mut jk[i * m..(i + 1) * m]);
            for ((&a, &b), kj) in dy_row.iter().zip(dz_row.iter()).zip(kr.chunks_exact(m)) {
                let ab = a * b;
                for c in 0..m {
                    dyk_i[c] += a * kj[c];
                    jk_i[c] += ab * kj[c];
                }
            }
        }
        let qy = column_dots(&self.kr, &dy_k);
        let q_joint = column_dots(&self.kr, &joint_k);
        let q_cross = column_dots(&self.kr, &(&dy_k * &self.dz_k));

        let mut e1 = 0.0;
        let mut e2 = 0.0;
        let mut e3 = 0.0;
        for c in 0..m {
            let m = self.mult[c];
            let s = self.sums[c];
            e1 += m * s * s * q_joint[c];
            e2 += m * qy[c] * self.qz[c];
            e3 += m * s * q_cross[c];
        }
        self.scale() * (e1 + e2 - 2.0 * e3)
    }

    /// Row `k` of `G + G^T` where `G = dS_n / dD^Y` treats the `(k, l)` and
    /// `(l, k)` entries as independent variables. Returns a closure filling
    /// one row at a time, so the `n x n` matrix is never stored.
    ///
    /// `G = c (D^Z . K diag(s^2) K^T) + c L K^T` with
    /// `L = K diag(q^Z) - 2 (K . D^Z K) diag(s)`; the first term is symmetric.
    pub(crate) fn symmetric_gradient_rows(&self) -> impl Fn(usize, &mut [f64]) + '_ {
        let m = self.kr.ncols();
        let s2 = &self.mult * &self.sums * &self.sums;
        let wq = &self.mult * &self.qz;
        let ws = &self.mult * &self.sums;
        let mut left = &self.kr * &wq.view().insert_axis(Axis(0));
        Zip::from(&mut left)
            .and(&self.kr)
            .and(&self.dz_k)
            .and(&ws.view().insert_axis(Axis(0)).broadcast(self.kr.dim()).expect("m columns"))
            .for_each(|l, &k, &dzk, &s| *l -= 2.0 * k * dzk * s);
        let scale = self.scale();
        move |k: usize, out: &mut [f64]| {
            let kr = self.kr.as_slice().expect("standard layout");
            let lt = left.as_slice().expect("standard layout");
            let (kk, lk) = (&kr[k * m..(k + 1) * m], &lt[k * m..(k + 1) * m]);
            let weighted: Vec<f64> = kk.iter().zip(s2.iter()).map(|(a, b)| a * b).collect();
            let rows = kr.chunks_exact(m).zip(lt.chunks_exact(m));
            for ((o, &dz), (kl, ll)) in out.iter_mut().zip(self.dz.row(k).iter()).zip(rows) {
                let mut p = 0.0;
                let mut cross = 0.0;
                for c in 0..m {
                    p += weighted[c] * kl[c];
                    cross += lk[c] * kl[c] + kk[c] * ll[c];
                }
                *o = scale * (2.0 * dz * p + cross);
            }
        }
    }

    /// Full `dS_n / dD^Y` as an `n x n` matrix.
    #[cfg(test)]
    pub(crate) fn distance_gradient(&self) -> Array2<f64> {
        let kr_t = self.kr.t();
        let s2 = &self.mult * &self.sums * &self.sums;
        let scaled = &self.kr * &s2.view().insert_axis(Axis(0));
        let mut g = scaled.dot(&kr_t);
        g *= &self.dz;
        let wq = &self.mult * &self.qz;
        let ws = &self.mult * &self.sums;
        let mut left = &self.kr * &wq.view().insert_axis(Axis(0));
        Zip::from(&mut left)
            .and(&self.kr)
            .and(&self.dz_k)
            .and(&ws.view().insert_axis(Axis(0)).broadcast(self.kr.dim()).expect("m columns"))
            .for_each(|l, &k, &dzk, &s| *l -= 2.0 * k * dzk * s);
        g += &left.dot(&kr_t);
        g *= self.scale();
        g
    }
}
