//! Tabular ingestion: schema files, CSV parsing, encoding fitted on the
//! training split, seeded splits, a synthetic biased generator and a
//! binary cache of prepared splits.

mod cache;
mod dataset;
mod schema;
mod synth;
mod table;

use thiserror::Error;

pub use cache::{cache_key, load_prepared, read_bundle, write_bundle};
pub use dataset::{
    one_hot, prepare_dataset, prepare_table, split_indices, Dataset, Encoded, Preprocessor, SplitFractions, Splits,
    Standardizer,
};
pub use schema::{DatasetSchema, FeatureKind, FeatureSpec, MissingPolicy};
pub use synth::synth_biased;
pub use table::{load_csv, read_numeric_columns, read_table, RawColumn, RawTable, Vocabulary};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("unknown column {name:?}; header has {available:?}")]
    UnknownColumn { name: String, available: Vec<String> },

    #[error("line {line}, column {column:?}: cannot parse {value:?} as a finite number")]
    Parse { line: usize, column: String, value: String },

    #[error("file has no data rows")]
    EmptyFile,

    #[error("schema: {0}")]
    Schema(String),

    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
