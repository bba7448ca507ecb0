use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{Result, StatsError};

/// An `n x d` block of observations, one sample per row.
///
/// Every statistic in this crate takes its inputs as `SampleBatch`es, so
/// the shape and finiteness checks happen once, at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    data: Array2<f64>,
}

impl SampleBatch {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(StatsError::EmptyBatch { rows: n, cols: d });
        }
        for (row, values) in data.axis_iter(Axis(0)).enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite {
                    row,
                    col,
                    value: values[col],
                });
            }
        }
        Ok(Self { data })
    }

    pub fn from_view(data: ArrayView2<'_, f64>) -> Result<Self> {
        Self::new(data.to_owned())
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut flat = Vec::with_capacity(rows.len() * d);
        for (row, values) in rows.iter().enumerate() {
            let values = values.as_ref();
            if values.len() != d {
                return Err(StatsError::RaggedRows {
                    row,
                    expected: d,
                    found: values.len(),
                });
            }
            flat.extend_from_slice(values);
        }
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .expect("row lengths were checked");
        Self::new(data)
    }

    /// One-dimensional samples.
    pub fn from_column(values: &[f64]) -> Result<Self> {
        let data = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .expect("a column always has a valid shape");
        Self::new(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.data.row(k)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Applies `f` to every entry, revalidating the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.data.mapv(f))
    }

    /// Reorders rows so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self {
            data: self.data.select(Axis(0), perm),
        }
    }
}

pub(crate) fn ensure_same_n(what: &'static str, left: &SampleBatch, right: &SampleBatch) -> Result<()> {
    if left.n() != right.n() {
        return Err(StatsError::CountMismatch {
            what,
            left: left.n(),
            right: right.n(),
        });
    }
    Ok(())
}
