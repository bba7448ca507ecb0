use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Drop any row with a missing feature or sensitive value.
    #[default]
    Drop,
    /// Fill numeric gaps with the training mean and categorical gaps with
    /// the training mode.
    Impute,
}

fn default_missing_tokens() -> Vec<String> {
    ["", "?", "NA", "NaN", "nan"].iter().map(|s| s.to_string()).collect()
}

/// Declarative description of a CSV file. Read from TOML or JSON:
///
/// ```toml
/// label = "income"
/// sensitive = ["sex"]
/// positive_class = ">50K"
/// missing_policy = "drop"          # or "impute"
/// missing_tokens = ["", "?"]       # optional
///
/// [[features]]
/// name = "age"
/// kind = "numeric"
///
/// [[features]]
/// name = "workclass"
/// kind = "categorical"
/// ```
///
/// Multiple sensitive columns are crossed into one group per observed
/// combination. A sensitive column may also be listed as a feature only
/// when `allow_sensitive_features = true`. Rows with a missing label are
/// always dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub features: Vec<FeatureSpec>,
    pub label: String,
    pub sensitive: Vec<String>,
    /// Label value treated as the positive class; defaults to the second
    /// label in order of first appearance.
    #[serde(default)]
    pub positive_class: Option<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    #[serde(default)]
    pub allow_sensitive_features: bool,
}

impl DatasetSchema {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Parses by extension: `.json` as JSON, anything else as TOML.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.features.is_empty() {
            problems.push("no feature columns".to_string());
        }
        if self.sensitive.is_empty() {
            problems.push("no sensitive column".to_string());
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                problems.push(format!("feature {:?} listed twice", f.name));
            }
        }
        if seen.contains(self.label.as_str()) {
            problems.push(format!("label {:?} is also a feature", self.label));
        }
        for s in &self.sensitive {
            if s == &self.label {
                problems.push(format!("{s:?} is both label and sensitive"));
            }
            if seen.contains(s.as_str()) && !self.allow_sensitive_features {
                problems.push(format!(
                    "sensitive column {s:?} is also a feature (set allow_sensitive_features to permit)"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DataError::Schema(problems.join("; ")))
        }
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        self.missing_tokens.iter().any(|t| t == cell)
    }
}
