//! Accuracy and group-fairness gaps over hard predictions.
//!
//! `delta_dp` averages `|P(Yhat = pos | Z = i) - P(Yhat = pos | Z = j)|`
//! over all pairs of groups. `delta_eo` averages the per-class recall gap
//! `|P(Yhat = y | Z = i, Y = y) - P(Yhat = y | Z = j, Y = y)|` over pairs of
//! groups and over classes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,

    #[error("{what} has {found} entries, predictions have {expected}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },

    #[error("{what} {value} at position {index} is outside 0..{limit}")]
    OutOfRange { what: &'static str, index: usize, value: usize, limit: usize },

    #[error("need at least 2 groups and 2 classes, got {groups} groups and {classes} classes")]
    TooFewCategories { groups: usize, classes: usize },

    #[error("group {group} has no samples")]
    EmptyGroup { group: usize },

    #[error("group {group} has no samples with label {label}")]
    EmptyStratum { group: usize, label: usize },

    #[error("binary equalized-odds formula needs exactly 2 classes, got {0}")]
    NotBinary(usize),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Which classes the equalized-odds gap sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EoMode {
    /// The two-class formula; rejects any other class count.
    #[default]
    Binary,
    /// Extension to `C` classes with prefactor `1 / (C * C(S, 2))`.
    AllClasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedPredictions {
    predicted: Vec<usize>,
    labels: Vec<usize>,
    groups: Vec<usize>,
    num_groups: usize,
    num_classes: usize,
}

impl GroupedPredictions {
    pub fn new(
        predicted: Vec<usize>,
        labels: Vec<usize>,
        groups: Vec<usize>,
        num_groups: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if predicted.is_empty() {
            return Err(MetricsError::Empty);
        }
        if num_groups < 2 || num_classes < 2 {
            return Err(MetricsError::TooFewCategories {
                groups: num_groups,
                classes: num_classes,
            });
        }
        for (what, v) in [("labels", &labels), ("groups", &groups)] {
            if v.len() != predicted.len() {
                return Err(MetricsError::LengthMismatch {
                    what,
                    expected: predicted.len(),
                    found: v.len(),
                });
            }
        }
        for (what, v, limit) in [
            ("prediction", &predicted, num_classes),
            ("label", &labels, num_classes),
            ("group", &groups, num_groups),
        ] {
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| x >= limit) {
                return Err(MetricsError::OutOfRange { what, index, value, limit });
            }
        }
        Ok(Self {
            predicted,
            labels,
            groups,
            num_groups,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn accuracy(&self) -> f64 {
        let hits = self.predicted.iter().zip(&self.labels).filter(|(p, y)| p == y).count();
        hits as f64 / self.len() as f64
    }

    /// `P(Yhat = positive_class | Z = g)` for every group.
    pub fn positive_rates(&self, positive_class: usize) -> Result<Vec<f64>> {
        if positive_class >= self.num_classes {
            return Err(MetricsError::OutOfRange {
                what: "positive class",
                index: 0,
                value: positive_class,
                limit: self.num_classes,
            });
        }
        let mut hits = vec![0usize; self.num_groups];
        let mut sizes = vec![0usize; self.num_groups];
        for (&p, &g) in self.predicted.iter().zip(&self.groups) {
            sizes[g] += 1;
            hits[g] += usize::from(p == positive_class);
        }
        (0..self.num_groups)
            .map(|g| match sizes[g] {
                0 => Err(MetricsError::EmptyGroup { group: g }),
                s => Ok(hits[g] as f64 / s as f64),
            })
            .collect()
    }

    /// `rates[g][y] = P(Yhat = y | Z = g, Y = y)`, or `None` for an empty stratum.
    pub fn recall_table(&self) -> Vec<Vec<Option<f64>>> {
        let (s, c) = (self.num_groups, self.num_classes);
        let mut hits = vec![vec![0usize; c]; s];
        let mut sizes = vec![vec![0usize; c]; s];
        for ((&p, &y), &g) in self.predicted.iter().zip(&self.labels).zip(&self.groups) {
            sizes[g][y] += 1;
            hits[g][y] += usize::from(p == y);
        }
        (0..s)
            .map(|g| {
                (0..c)
                    .map(|y| (sizes[g][y] > 0).then(|| hits[g][y] as f64 / sizes[g][y] as f64))
                    .collect()
            })
            .collect()
    }
}

fn mean_pairwise_gap(rates: &[f64]) -> f64 {
    let s = rates.len();
    let mut total = 0.0;
    for i in 0..s {
        for j in (i + 1)..s {
            total += (rates[i] - rates[j]).abs();
        }
    }
    total / (s * (s - 1) / 2) as f64
}

pub fn accuracy(g: &GroupedPredictions) -> f64 {
    g.accuracy()
}

pub fn delta_dp(g: &GroupedPredictions, positive_class: usize) -> Result<f64> {
    Ok(mean_pairwise_gap(&g.positive_rates(positive_class)?))
}

pub fn delta_eo(g: &GroupedPredictions, mode: EoMode) -> Result<f64> {
    if mode == EoMode::Binary && g.num_classes != 2 {
        return Err(MetricsError::NotBinary(g.num_classes));
    }
    let table = g.recall_table();
    let mut total = 0.0;
    for y in 0..g.num_classes {
        let rates = table
            .iter()
            .enumerate()
            .map(|(group, row)| row[y].ok_or(MetricsError::EmptyStratum { group, label: y }))
            .collect::<Result<Vec<f64>>>()?;
        total += mean_pairwise_gap(&rates);
    }
    Ok(total / g.num_classes as f64)
}

/// Summary written next to every trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub delta_dp: f64,
    pub delta_eo: f64,
    /// Positive-prediction rate of each group.
    pub per_group_rates: Vec<f64>,
    /// `[group][label]` recall; `null` where the stratum is empty.
    pub per_group_label_rates: Vec<Vec<Option<f64>>>,
    pub n: usize,
}

impl FairnessReport {
    pub fn compute(g: &GroupedPredictions, positive_class: usize, mode: EoMode) -> Result<Self> {
        let per_group_rates = g.positive_rates(positive_class)?;
        Ok(Self {
            accuracy: g.accuracy(),
            delta_dp: mean_pairwise_gap(&per_group_rates),
            delta_eo: delta_eo(g, mode)?,
            per_group_rates,
            per_group_label_rates: g.recall_table(),
            n: g.len(),
        })
    }
}
