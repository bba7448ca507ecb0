use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use super::schema::{DatasetSchema, FeatureKind, MissingPolicy};
use super::{DataError, Result};

/// Interns strings to codes in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn intern(&mut self, value: &str) -> usize {
        if let Some(&code) = self.index.get(value) {
            return code;
        }
        let code = self.names.len();
        self.names.push(value.to_string());
        self.index.insert(value.to_string(), code);
        code
    }

    pub fn code(&self, value: &str) -> Option<usize> {
        self.index.get(value).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<Option<f64>>),
    /// Codes into the vocabulary.
    Categorical(Vec<Option<usize>>, Vocabulary),
}

impl RawColumn {
    fn is_missing(&self, row: usize) -> bool {
        match self {
            RawColumn::Numeric(v) => v[row].is_none(),
            RawColumn::Categorical(v, _) => v[row].is_none(),
        }
    }
}

/// Typed contents of a CSV file, in schema column order. Label and group
/// vocabularies cover the whole file so that every split shares them.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub columns: Vec<RawColumn>,
    pub labels: Vec<usize>,
    pub label_vocab: Vocabulary,
    /// Crossed sensitive attribute; `None` where any part is missing.
    pub groups: Vec<Option<usize>>,
    pub group_vocab: Vocabulary,
    /// Rows removed because of missing values.
    pub dropped_rows: usize,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    /// Index of the positive label per the schema; class 1 when unspecified.
    pub fn positive_class(&self, schema: &DatasetSchema) -> Result<usize> {
        match &schema.positive_class {
            Some(name) => self.label_vocab.code(name).ok_or_else(|| {
                DataError::Schema(format!(
                    "positive class {name:?} not among labels {:?}",
                    self.label_vocab.names()
                ))
            }),
            None => Ok(1),
        }
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| DataError::UnknownColumn {
            name: name.to_string(),
            available: headers.iter().map(str::to_string).collect(),
        })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(input)
}

pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<RawTable> {
    let file = std::fs::File::open(path)?;
    read_table(file, schema)
}

/// Parses CSV text according to `schema`. Cell errors report the 1-based
/// line number of the file and the column name.
pub fn read_table<R: Read>(input: R, schema: &DatasetSchema) -> Result<RawTable> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let feature_idx = schema
        .features
        .iter()
        .map(|f| column_index(&headers, &f.name))
        .collect::<Result<Vec<_>>>()?;
    let label_idx = column_index(&headers, &schema.label)?;
    let sensitive_idx = schema
        .sensitive
        .iter()
        .map(|s| column_index(&headers, s))
        .collect::<Result<Vec<_>>>()?;

    let mut columns: Vec<RawColumn> = schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Numeric => RawColumn::Numeric(Vec::new()),
            FeatureKind::Categorical => RawColumn::Categorical(Vec::new(), Vocabulary::default()),
        })
        .collect();
    let mut labels = Vec::new();
    let mut label_vocab = Vocabulary::default();
    let mut groups = Vec::new();
    let mut group_vocab = Vocabulary::default();
    let mut dropped_rows = 0;
    let mut seen_rows = 0usize;

    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        seen_rows += 1;
        let line = record.position().map_or(seen_rows + 1, |p| p.line() as usize);
        let label_cell = &record[label_idx];
        if schema.is_missing(label_cell) {
            dropped_rows += 1;
            continue;
        }

        let sensitive_cells: Vec<&str> = sensitive_idx.iter().map(|&i| &record[i]).collect();
        let group_missing = sensitive_cells.iter().any(|c| schema.is_missing(c));
        let mut parsed: Vec<Option<f64>> = Vec::with_capacity(feature_idx.len());
        let mut any_missing = group_missing;
        for (spec, &col) in schema.features.iter().zip(&feature_idx) {
            let cell = &record[col];
            if schema.is_missing(cell) {
                any_missing = true;
                parsed.push(None);
            } else if spec.kind == FeatureKind::Numeric {
                let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                    line,
                    column: spec.name.clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse {
                        line,
                        column: spec.name.clone(),
                        value: cell.to_string(),
                    });
                }
                parsed.push(Some(v));
            } else {
                parsed.push(Some(0.0));
            }
        }
        if any_missing && schema.missing_policy == MissingPolicy::Drop {
            dropped_rows += 1;
            continue;
        }

        for ((column, &col), value) in columns.iter_mut().zip(&feature_idx).zip(parsed) {
            match column {
                RawColumn::Numeric(v) => v.push(value),
                RawColumn::Categorical(v, vocab) => v.push(value.map(|_| vocab.intern(&record[col]))),
            }
        }
        labels.push(label_vocab.intern(label_cell));
        groups.push((!group_missing).then(|| group_vocab.intern(&sensitive_cells.join("|"))));
    }

    if seen_rows == 0 {
        return Err(DataError::EmptyFile);
    }
    Ok(RawTable {
        feature_names: schema.features.iter().map(|f| f.name.clone()).collect(),
        columns,
        labels,
        label_vocab,
        groups,
        group_vocab,
        dropped_rows,
    })
}

impl RawTable {
    /// Whether any feature or sensitive value of `row` is missing (only
    /// possible under the impute policy).
    pub fn row_has_missing(&self, row: usize) -> bool {
        self.groups[row].is_none() || self.columns.iter().any(|c| c.is_missing(row))
    }
}

/// Reads the named numeric columns into an `n x columns.len()` matrix.
/// Every cell must parse as a finite number.
pub fn read_numeric_columns(path: &Path, columns: &[String]) -> Result<Array2<f64>> {
    let mut rdr = reader(std::fs::File::open(path)?);
    let headers = rdr.headers()?.clone();
    let idx = columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        rows += 1;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        for (name, &i) in columns.iter().zip(&idx) {
            let cell = &record[i];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(DataError::Parse {
                        line,
                        column: name.clone(),
                        value: cell.to_string(),
                    })
                }
            }
        }
    }
    if rows == 0 {
        return Err(DataError::EmptyFile);
    }
    Ok(Array2::from_shape_vec((rows, columns.len()), values).expect("rows x columns values"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::schema::FeatureSpec;

    fn schema(policy: MissingPolicy) -> DatasetSchema {
        DatasetSchema {
            features: vec![
                FeatureSpec {
                    name: "age".into(),
                    kind: FeatureKind::Numeric,
                },
                FeatureSpec {
                    name: "job".into(),
                    kind: FeatureKind::Categorical,
                },
            ],
            label: "y".into(),
            sensitive: vec!["sex".into()],
            positive_class: Some("yes".into()),
            missing_policy: policy,
            missing_tokens: vec!["".into(), "?".into()],
            allow_sensitive_features: false,
        }
    }

    #[test]
    fn categories_in_first_appearance_order() {
        let csv = "age,job,sex,y\n30, tech ,F,no\n40,arts,M,yes\n50,tech,F,yes\n";
        let t = read_table(csv.as_bytes(), &schema(MissingPolicy::Drop)).unwrap();
        assert_eq!(t.n_rows(), 3);
        match &t.columns[1] {
            RawColumn::Categorical(codes, vocab) => {
                assert_eq!(vocab.names(), ["tech", "arts"]);
                assert_eq!(codes, &vec![Some(0), Some(1), Some(0)]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(t.labels, vec![0, 1, 1]);
        assert_eq!(t.group_vocab.names(), ["F", "M"]);
        assert_eq!(t.positive_class(&schema(MissingPolicy::Drop)).unwrap(), 1);
    }

    #[test]
    fn drop_policy_removes_incomplete_rows() {
        let csv = "age,job,sex,y\n30,tech,F,no\n,arts,M,yes\n50,tech,F,yes\n20,x,M,?\n";
        let t = read_table(csv.as_bytes(), &schema(MissingPolicy::Drop)).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.dropped_rows, 2);
    }

    #[test]
    fn impute_policy_keeps_rows_but_not_missing_labels() {
        let csv = "age,job,sex,y\n30,?,F,no\n,arts,?,yes\n20,x,M,\n";
        let t = read_table(csv.as_bytes(), &schema(MissingPolicy::Impute)).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.dropped_rows, 1);
        assert!(t.row_has_missing(0) && t.row_has_missing(1));
        assert_eq!(t.groups, vec![Some(0), None]);
    }

    #[test]
    fn parse_errors_name_line_and_column() {
        let csv = "age,job,sex,y\n30,tech,F,no\nold,arts,M,yes\n";
        let err = read_table(csv.as_bytes(), &schema(MissingPolicy::Drop)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("age") && msg.contains("old"), "{msg}");
    }

    #[test]
    fn unknown_column_and_empty_file() {
        let err = read_table("age,sex,y\n1,F,no\n".as_bytes(), &schema(MissingPolicy::Drop)).unwrap_err();
        assert!(matches!(err, DataError::UnknownColumn { ref name, .. } if name == "job"));
        let err = read_table("age,job,sex,y\n".as_bytes(), &schema(MissingPolicy::Drop)).unwrap_err();
        assert!(matches!(err, DataError::EmptyFile));
        assert!(matches!(read_table("".as_bytes(), &schema(MissingPolicy::Drop)), Err(DataError::EmptyFile)));
    }

    #[test]
    fn crossed_sensitive_columns() {
        let mut s = schema(MissingPolicy::Drop);
        s.features.truncate(1);
        s.sensitive = vec!["sex".into(), "job".into()];
        let csv = "age,job,sex,y\n1,a,F,no\n2,b,F,yes\n3,a,F,no\n4,a,M,yes\n";
        let t = read_table(csv.as_bytes(), &s).unwrap();
        assert_eq!(t.group_vocab.names(), ["F|a", "F|b", "M|a"]);
        assert_eq!(t.groups, vec![Some(0), Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn numeric_columns_for_statistics() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n4,5,6\n").unwrap();
        let m = read_numeric_columns(&path, &["c".into(), "a".into()]).unwrap();
        assert_eq!(m, ndarray::array![[3.0, 1.0], [6.0, 4.0]]);
        std::fs::write(&path, "a,b\n1,2\nx,3\n").unwrap();
        assert!(matches!(
            read_numeric_columns(&path, &["a".into()]),
            Err(DataError::Parse { line: 3, .. })
        ));
    }
}
