//! Analytic gradients of the distance statistics with respect to the first
//! sample argument.
//!
//! Both statistics are linear in the pairwise distances of `Y`, so each
//! gradient is a weight matrix `G = dS/dD^Y` pushed through
//! `d||Y_k - Y_l|| / dY_k = (Y_k - Y_l) / ||Y_k - Y_l||`. Coincident rows
//! take the zero subgradient.

use ndarray::{Array2, Axis};

use crate::stats::{
    ensure_same_n, pairwise_distance_matrix, CdcPlan, CenteredDistancePair,
    Result, SampleBatch,
};

/// `dS/dY` together with the statistic `S` at the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub grad: Array2<f64>,
    pub value: f64,
}

/// `grad_k = sum_l w_kl (Y_k - Y_l) / d_kl`, skipping `d_kl == 0`, where
/// `w_kl = G_kl + G_lk` is supplied by `weight(k, row_k)`.
fn distance_chain<W>(y: &SampleBatch, dist: &Array2<f64>, mut weight: W) -> Array2<f64>
where
    W: FnMut(usize, &mut [f64]),
{
    let (n, p) = (y.n(), y.dim());
    let data = y.view().as_standard_layout().into_owned();
    let data = data.as_slice().expect("standard layout");
    let mut grad = Array2::<f64>::zeros((n, p));
    let mut w = vec![0.0; n];
    for ((k, out), d_row) in grad.outer_iter_mut().enumerate().zip(dist.outer_iter()) {
        weight(k, &mut w);
        let out = out.into_slice().expect("fresh array is contiguous");
        let d_row = d_row.to_slice().expect("row-major");
        let yk = &data[k * p..(k + 1) * p];
        for (l, ((&d, &wkl), yl)) in d_row.iter().zip(&w).zip(data.chunks_exact(p)).enumerate() {
            if l == k || d == 0.0 {
                continue;
            }
            let coef = wkl / d;
            for ((o, a), b) in out.iter_mut().zip(yk).zip(yl) {
                *o += coef * (a - b);
            }
        }
    }
    grad
}

/// Gradient of `dcov(Y, Z)` with respect to `Y`.
///
/// Double centering is a self-adjoint projection and `B` is already
/// centered, so `<A, B> = <a, B>` and `dV/da_kl = B_kl / n^2`.
pub fn dcov_grad(y: &SampleBatch, z: &SampleBatch) -> Result<GradientResult> {
    let pair = CenteredDistancePair::new(y, z)?;
    let value = crate::stats::dcov_from_centered(&pair).value;
    let nf = y.n() as f64;
    let n2 = nf * nf;
    // B is symmetric (up to rounding), so G_kl + G_lk = 2 B_kl / n^2
    let grad = distance_chain(y, pair.raw_a.values(), |k, w| {
        for (wl, &b) in w.iter_mut().zip(pair.b.row(k)) {
            let g = b / n2;
            *wl = g + g;
        }
    });
    Ok(GradientResult { grad, value })
}

/// Gradient of `cdc_stat(Y, Z, U, h)` with respect to `Y`. The kernel only
/// depends on `U`, so nothing flows through it.
pub fn cdc_grad(y: &SampleBatch, z: &SampleBatch, u: &SampleBatch, h: f64) -> Result<GradientResult> {
    ensure_same_n("conditional distance covariance (Y vs Z)", y, z)?;
    ensure_same_n("conditional distance covariance (Y vs U)", y, u)?;
    let dy = pairwise_distance_matrix(y);
    let plan = CdcPlan::new(pairwise_distance_matrix(z).into_values(), u, h)?;
    let value = plan.value(dy.values());
    let grad = distance_chain(y, dy.values(), plan.symmetric_gradient_rows());
    Ok(GradientResult { grad, value })
}

/// Central differences `(f(Y + step e) - f(Y - step e)) / (2 step)` for every
/// coordinate of `Y`.
pub fn numeric_grad<F>(f: F, y: &SampleBatch, step: f64) -> Array2<f64>
where
    F: Fn(&SampleBatch) -> f64,
{
    let (n, p) = (y.n(), y.dim());
    let mut out = Array2::<f64>::zeros((n, p));
    let mut probe = y.data().clone();
    for k in 0..n {
        for c in 0..p {
            let orig = probe[[k, c]];
            probe[[k, c]] = orig + step;
            let plus = f(&SampleBatch::new(probe.clone()).expect("finite perturbation"));
            probe[[k, c]] = orig - step;
            let minus = f(&SampleBatch::new(probe.clone()).expect("finite perturbation"));
            probe[[k, c]] = orig;
            out[[k, c]] = (plus - minus) / (2.0 * step);
        }
    }
    out
}

/// Largest discrepancy between an analytic and a finite-difference gradient:
/// relative error where `|fd| > floor`, absolute error elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative: f64,
    pub max_absolute_small: f64,
}

impl GradientCheck {
    pub fn compare(analytic: &Array2<f64>, numeric: &Array2<f64>, floor: f64) -> Self {
        let mut max_relative = 0.0f64;
        let mut max_absolute_small = 0.0f64;
        for (a, fd) in analytic.iter().zip(numeric.iter()) {
            let err = (a - fd).abs();
            if fd.abs() > floor {
                max_relative = max_relative.max(err / fd.abs());
            } else {
                max_absolute_small = max_absolute_small.max(err);
            }
        }
        Self {
            max_relative,
            max_absolute_small,
        }
    }

    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_relative < rel_tol && self.max_absolute_small < abs_tol
    }
}

/// Row sums of `grad`; zero for any translation-invariant statistic.
pub fn net_force(grad: &Array2<f64>) -> ndarray::Array1<f64> {
    grad.sum_axis(Axis(0))
}


#[cfg(test)]
mod step_sweep {
    use super::*;
    use crate::stats::{cdc_stat, dcov};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    fn is_u_shaped(errs: &[f64]) -> bool {
        let best = errs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        best > 0 && best + 1 < errs.len()
    }

    #[test]
    fn finite_difference_error_is_u_shaped_in_step() {
        for seed in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |d: usize| {
                SampleBatch::new(Array2::from_shape_fn((16, d), |_| rng.random_range(-2.0..2.0))).unwrap()
            };
            let (y, z, u) = (draw(3), draw(2), draw(1));

            let analytic = dcov_grad(&y, &z).unwrap().grad;
            let errs: Vec<f64> = [1e-4, 1e-5, 1e-6]
                .iter()
                .map(|&s| max_abs(&analytic, &numeric_grad(|b| dcov(b, &z).unwrap().value, &y, s)))
                .collect();
            assert!(is_u_shaped(&errs), "dcov seed {seed}: {errs:?}");

            // The conditional statistic is two orders of magnitude smaller, which
            // moves the rounding/truncation crossover up to about 1e-4.
            let analytic = cdc_grad(&y, &z, &u, 0.5).unwrap().grad;
            let errs: Vec<f64> = [1e-3, 1e-4, 1e-5, 1e-6]
                .iter()
                .map(|&s| max_abs(&analytic, &numeric_grad(|b| cdc_stat(b, &z, &u, 0.5).unwrap().value, &y, s)))
                .collect();
            assert!(is_u_shaped(&errs), "cdc seed {seed}: {errs:?}");
        }
    }
}
