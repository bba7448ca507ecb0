use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::DatasetSchema;
use super::table::{RawColumn, RawTable};
use super::{DataError, Result};

/// Encoded, model-ready samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
    pub num_classes: usize,
    pub num_groups: usize,
    pub positive_class: usize,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub group_names: Vec<String>,
}

pub fn one_hot(indices: &[usize], width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((indices.len(), width));
    for (row, &i) in indices.iter().enumerate() {
        out[[row, i]] = 1.0;
    }
    out
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn label_one_hot(&self) -> Array2<f64> {
        one_hot(&self.labels, self.num_classes)
    }

    pub fn group_one_hot(&self) -> Array2<f64> {
        one_hot(&self.groups, self.num_groups)
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            features: Array2::zeros((0, self.dim())),
            labels: vec![],
            groups: vec![],
            num_classes: self.num_classes,
            num_groups: self.num_groups,
            positive_class: self.positive_class,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.features.nrows() != n || self.groups.len() != n {
            return Err(DataError::InvalidArgument(format!(
                "inconsistent lengths: {} feature rows, {} labels, {} groups",
                self.features.nrows(),
                n,
                self.groups.len()
            )));
        }
        if self.labels.iter().any(|&y| y >= self.num_classes) || self.groups.iter().any(|&g| g >= self.num_groups) {
            return Err(DataError::InvalidArgument("label or group index out of range".into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidArgument("non-finite feature value".into()));
        }
        Ok(())
    }
}

/// Per-column `(x - mean) / std` with population std; a zero-variance
/// column keeps divisor 1, so it standardizes to all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Array1<f64> = x.sum_axis(Axis(0)) / n;
        let var = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, m)| col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n);
        let std = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn apply(&self, x: &mut Array2<f64>) {
        for (mut col, (m, s)) in x.axis_iter_mut(Axis(1)).zip(self.mean.iter().zip(&self.std)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ColumnEncoder {
    Numeric {
        mean: f64,
        std: f64,
    },
    /// `slots[code]` is the one-hot position for a vocabulary code seen at
    /// fit time.
    Categorical {
        slots: Vec<Option<usize>>,
        names: Vec<String>,
        mode: usize,
    },
}

/// Encoding fitted on training rows only: standardization for numeric
/// columns, one-hot for categorical ones, and training mean/mode for gaps
/// under the impute policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    encoders: Vec<ColumnEncoder>,
    feature_names: Vec<String>,
    group_mode: usize,
    positive_class: usize,
}

/// Output of [`Preprocessor::transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub dataset: Dataset,
    /// Categorical cells whose value never occurred in the training rows;
    /// they encode as all-zero blocks.
    pub unseen_categories: usize,
}

impl Preprocessor {
    pub fn fit(table: &RawTable, schema: &DatasetSchema, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(DataError::InvalidArgument("cannot fit preprocessing on zero rows".into()));
        }
        let mut encoders = Vec::with_capacity(table.columns.len());
        let mut feature_names = Vec::new();
        for (name, column) in table.feature_names.iter().zip(&table.columns) {
            match column {
                RawColumn::Numeric(values) => {
                    let present: Vec<f64> = rows.iter().filter_map(|&r| values[r]).collect();
                    let count = present.len().max(1) as f64;
                    let mean = present.iter().sum::<f64>() / count;
                    let var = present.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
                    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                    encoders.push(ColumnEncoder::Numeric { mean, std });
                    feature_names.push(name.clone());
                }
                RawColumn::Categorical(codes, vocab) => {
                    let mut counts = vec![0usize; vocab.len()];
                    for &r in rows {
                        if let Some(c) = codes[r] {
                            counts[c] += 1;
                        }
                    }
                    let mut slots = vec![None; vocab.len()];
                    let mut names = Vec::new();
                    for (code, &count) in counts.iter().enumerate() {
                        if count > 0 {
                            slots[code] = Some(names.len());
                            names.push(vocab.names()[code].clone());
                            feature_names.push(format!("{name}={}", vocab.names()[code]));
                        }
                    }
                    let mode = argmax_first(&counts);
                    encoders.push(ColumnEncoder::Categorical { slots, names, mode });
                }
            }
        }
        let mut group_counts = vec![0usize; table.group_vocab.len()];
        for &r in rows {
            if let Some(g) = table.groups[r] {
                group_counts[g] += 1;
            }
        }
        Ok(Self {
            encoders,
            feature_names,
            group_mode: argmax_first(&group_counts),
            positive_class: table.positive_class(schema)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn transform(&self, table: &RawTable, rows: &[usize]) -> Result<Encoded> {
        let mut features = Array2::<f64>::zeros((rows.len(), self.output_dim()));
        let mut unseen = 0;
        for (out_row, &r) in rows.iter().enumerate() {
            let mut offset = 0;
            for (enc, column) in self.encoders.iter().zip(&table.columns) {
                match (enc, column) {
                    (ColumnEncoder::Numeric { mean, std }, RawColumn::Numeric(values)) => {
                        features[[out_row, offset]] = (values[r].unwrap_or(*mean) - mean) / std;
                        offset += 1;
                    }
                    (ColumnEncoder::Categorical { slots, names, mode }, RawColumn::Categorical(codes, _)) => {
                        let code = codes[r].unwrap_or(*mode);
                        match slots.get(code).copied().flatten() {
                            Some(slot) => features[[out_row, offset + slot]] = 1.0,
                            None => unseen += 1,
                        }
                        offset += names.len();
                    }
                    _ => return Err(DataError::InvalidArgument("table does not match preprocessor".into())),
                }
            }
        }
        let dataset = Dataset {
            features,
            labels: rows.iter().map(|&r| table.labels[r]).collect(),
            groups: rows.iter().map(|&r| table.groups[r].unwrap_or(self.group_mode)).collect(),
            num_classes: table.label_vocab.len(),
            num_groups: table.group_vocab.len(),
            positive_class: self.positive_class,
            feature_names: self.feature_names.clone(),
            class_names: table.label_vocab.names().to_vec(),
            group_names: table.group_vocab.names().to_vec(),
        };
        Ok(Encoded {
            dataset,
            unseen_categories: unseen,
        })
    }
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidArgument(format!(
                "split fractions must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }
}

/// Seeded shuffle, then contiguous slices. Train and validation sizes are
/// rounded; the test split takes the remainder. Every part gets at least
/// one row.
pub fn split_indices(n: usize, fractions: SplitFractions, seed: u64) -> Result<[Vec<usize>; 3]> {
    fractions.validate()?;
    if n < 3 {
        return Err(DataError::TooFewSamples { n, min: 3 });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * fractions.train).round() as usize).clamp(1, n - 2);
    let n_val = ((n as f64 * fractions.val).round() as usize).clamp(1, n - n_train - 1);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub unseen_categories: usize,
}

/// Splits a raw table and encodes all three parts with a preprocessor fitted
/// on the training part.
pub fn prepare_table(table: &RawTable, schema: &DatasetSchema, fractions: SplitFractions, seed: u64) -> Result<Splits> {
    let [train_rows, val_rows, test_rows] = split_indices(table.n_rows(), fractions, seed)?;
    let pre = Preprocessor::fit(table, schema, &train_rows)?;
    let train = pre.transform(table, &train_rows)?;
    let val = pre.transform(table, &val_rows)?;
    let test = pre.transform(table, &test_rows)?;
    Ok(Splits {
        unseen_categories: train.unseen_categories + val.unseen_categories + test.unseen_categories,
        train: train.dataset,
        val: val.dataset,
        test: test.dataset,
    })
}

/// Splits an already-numeric dataset and standardizes every column with
/// training statistics.
pub fn prepare_dataset(data: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Splits> {
    data.validate()?;
    let [train_rows, val_rows, test_rows] = split_indices(data.n(), fractions, seed)?;
    let mut train = data.subset(&train_rows);
    let mut val = data.subset(&val_rows);
    let mut test = data.subset(&test_rows);
    let scaler = Standardizer::fit(&train.features);
    for part in [&mut train, &mut val, &mut test] {
        scaler.apply(&mut part.features);
    }
    Ok(Splits {
        train,
        val,
        test,
        unseen_categories: 0,
    })
}
