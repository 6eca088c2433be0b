//! Declarative feature schemas and the two categorical encodings: one-hot
//! and entity embedding.
//!
//! A [`FeatureSchema`] is an ordered list of columns. Categorical columns
//! carry a deduplicated vocabulary and an unseen-category policy; continuous
//! columns carry standardization statistics frozen from the training split.
//! Rows encode to a dense [`FeatureVector`] whose provenance map records
//! which index range each column produced.
//!
//! Embedding tables learned inside a neural network can be copied out with
//! [`transfer_embeddings`] and used as a fixed encoder for other models.

use serde::{Deserialize, Serialize};
use std::ops::Range;
use thiserror::Error;

/// Embedding width for a categorical column of cardinality `n`.
///
/// The rule is half the cardinality plus a half, rounded up, so the paper's
/// 7-value weekday example encodes in 4 dimensions.
pub fn embedding_dim(n: usize) -> usize {
    (n + 1).div_ceil(2)
}

/// A raw cell value before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Cat(String),
    Num(f64),
}

impl Value {
    pub fn cat(s: impl Into<String>) -> Self {
        Self::Cat(s.into())
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Self::Num(x) => Some(*x),
            Self::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Self::Cat(s) => Some(s),
            Self::Num(_) => None,
        }
    }
}

/// One row of raw values, aligned with a schema's column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow(pub Vec<Value>);

/// What to do with a categorical value missing from the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnseenPolicy {
    /// Map to a reserved trailing UNK slot (adds one row/column).
    UnkSlot,
    /// Fail with [`EncodingError::UnseenCategory`].
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    Categorical { vocab: Vec<String>, unseen: UnseenPolicy },
    /// Standardized as `(x - mean) / std` with training-split statistics.
    Continuous { mean: f64, std: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

impl FeatureColumn {
    pub fn categorical(name: impl Into<String>, vocab: Vec<String>, unseen: UnseenPolicy) -> Self {
        Self { name: name.into(), kind: ColumnKind::Categorical { vocab, unseen } }
    }

    pub fn continuous(name: impl Into<String>, mean: f64, std: f64, min: f64, max: f64) -> Self {
        Self { name: name.into(), kind: ColumnKind::Continuous { mean, std, min, max } }
    }

    /// Effective cardinality: vocabulary size plus the UNK slot if any.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            ColumnKind::Categorical { vocab, unseen } => {
                Some(vocab.len() + usize::from(*unseen == UnseenPolicy::UnkSlot))
            }
            ColumnKind::Continuous { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodingError {
    #[error("column {column:?}: category {value:?} not in vocabulary")]
    UnseenCategory { column: String, value: String },
    #[error("column {column:?}: missing value")]
    MissingValue { column: String },
    #[error("column {column:?}: expected {expected} value")]
    ValueKindMismatch { column: String, expected: &'static str },
    #[error("row has {got} values, schema has {want} columns")]
    RowWidthMismatch { got: usize, want: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// Ordered column declarations plus frozen statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<FeatureColumn>) -> Self {
        Self { columns }
    }

    pub fn categorical_columns(&self) -> impl Iterator<Item = &FeatureColumn> {
        self.columns.iter().filter(|c| matches!(c.kind, ColumnKind::Categorical { .. }))
    }

    /// Width of an encoded row under the given mode.
    pub fn encoded_width(&self, mode: &EncoderMode) -> usize {
        self.columns
            .iter()
            .map(|c| match c.cardinality() {
                Some(n) => match mode {
                    EncoderMode::OneHot => n,
                    EncoderMode::Embedding(_) => embedding_dim(n),
                },
                None => 1,
            })
            .sum()
    }

    /// Vocabulary index of a categorical value, honoring the column's
    /// unseen-category policy.
    pub fn category_index(&self, column: &FeatureColumn, value: &str) -> Result<usize, EncodingError> {
        let ColumnKind::Categorical { vocab, unseen } = &column.kind else {
            return Err(EncodingError::ValueKindMismatch { column: column.name.clone(), expected: "categorical" });
        };
        match vocab.iter().position(|v| v == value) {
            Some(i) => Ok(i),
            None => match unseen {
                UnseenPolicy::UnkSlot => Ok(vocab.len()),
                UnseenPolicy::Reject => Err(EncodingError::UnseenCategory {
                    column: column.name.clone(),
                    value: value.to_string(),
                }),
            },
        }
    }

    /// Writes the schema (vocabularies and statistics included) as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Canonical indexed form of a row: one vocabulary index per categorical
/// column plus the standardized continuous values, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedRow {
    pub cats: Vec<usize>,
    pub nums: Vec<f64>,
}

/// Maps a raw row to vocabulary indices and standardized continuous values.
pub fn index_row(row: &RawRow, schema: &FeatureSchema) -> Result<IndexedRow, EncodingError> {
    if row.0.len() != schema.columns.len() {
        return Err(EncodingError::RowWidthMismatch { got: row.0.len(), want: schema.columns.len() });
    }
    let mut cats = Vec::new();
    let mut nums = Vec::new();
    for (col, value) in schema.columns.iter().zip(&row.0) {
        match (&col.kind, value) {
            (ColumnKind::Categorical { .. }, Value::Cat(s)) => {
                cats.push(schema.category_index(col, s)?);
            }
            (ColumnKind::Continuous { mean, std, .. }, Value::Num(x)) => {
                if !x.is_finite() {
                    return Err(EncodingError::MissingValue { column: col.name.clone() });
                }
                nums.push(if *std > 0.0 { (x - mean) / std } else { 0.0 });
            }
            (ColumnKind::Categorical { .. }, Value::Num(_)) => {
                return Err(EncodingError::ValueKindMismatch { column: col.name.clone(), expected: "categorical" });
            }
            (ColumnKind::Continuous { .. }, Value::Cat(_)) => {
                return Err(EncodingError::ValueKindMismatch { column: col.name.clone(), expected: "continuous" });
            }
        }
    }
    Ok(IndexedRow { cats, nums })
}

/// One-hot vector for `value` over `vocab`: a single one at the vocabulary
/// index. Values outside the vocabulary are rejected.
pub fn one_hot(value: &str, vocab: &[String]) -> Result<Vec<f64>, EncodingError> {
    let idx = vocab.iter().position(|v| v == value).ok_or_else(|| {
        EncodingError::UnseenCategory { column: String::new(), value: value.to_string() }
    })?;
    let mut out = vec![0.0; vocab.len()];
    out[idx] = 1.0;
    Ok(out)
}

/// Learned dense representation for one categorical column. Row-major,
/// `rows` x `dim`, one row per category (UNK slot last when present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self { rows, dim, weights: vec![0.0; rows * dim] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.weights[i * self.dim..(i + 1) * self.dim]
    }
}

/// Embedding tables for every categorical column of a schema, in schema
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTables {
    pub by_column: Vec<(String, EmbeddingTable)>,
}

impl EmbeddingTables {
    /// Checks the tables line up with the schema's categorical columns.
    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<(), EncodingError> {
        let cats: Vec<&FeatureColumn> = schema.categorical_columns().collect();
        if cats.len() != self.by_column.len() {
            return Err(EncodingError::SchemaMismatch(format!(
                "{} embedding tables for {} categorical columns",
                self.by_column.len(),
                cats.len()
            )));
        }
        for (col, (name, table)) in cats.iter().zip(&self.by_column) {
            let n = col.cardinality().expect("categorical");
            if col.name != *name {
                return Err(EncodingError::SchemaMismatch(format!(
                    "embedding table {name:?} does not match column {:?}",
                    col.name
                )));
            }
            if table.rows != n || table.dim != embedding_dim(n) {
                return Err(EncodingError::SchemaMismatch(format!(
                    "table {name:?} is {}x{}, expected {}x{}",
                    table.rows,
                    table.dim,
                    n,
                    embedding_dim(n)
                )));
            }
        }
        Ok(())
    }
}

/// How categorical columns are turned into reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderMode {
    OneHot,
    Embedding(EmbeddingTables),
}

/// A dense encoded row plus the index range each schema column occupies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub spans: Vec<(String, Range<usize>)>,
}

/// Encodes a raw row: categorical columns expand to one-hot or embedding
/// vectors, continuous columns standardize, and everything concatenates in
/// schema column order.
pub fn encode_row(
    row: &RawRow,
    schema: &FeatureSchema,
    mode: &EncoderMode,
) -> Result<FeatureVector, EncodingError> {
    let indexed = index_row(row, schema)?;
    Ok(encode_indexed(&indexed, schema, mode))
}

/// Encodes an already-indexed row (no vocabulary lookups).
pub fn encode_indexed(row: &IndexedRow, schema: &FeatureSchema, mode: &EncoderMode) -> FeatureVector {
    let mut values = Vec::with_capacity(schema.encoded_width(mode));
    let mut spans = Vec::with_capacity(schema.columns.len());
    let mut cat_i = 0;
    let mut num_i = 0;
    for col in &schema.columns {
        let from = values.len();
        match col.cardinality() {
            Some(n) => {
                let idx = row.cats[cat_i];
                match mode {
                    EncoderMode::OneHot => {
                        values.extend(std::iter::repeat_n(0.0, n));
                        values[from + idx] = 1.0;
                    }
                    EncoderMode::Embedding(tables) => {
                        values.extend_from_slice(tables.by_column[cat_i].1.row(idx));
                    }
                }
                cat_i += 1;
            }
            None => {
                values.push(row.nums[num_i]);
                num_i += 1;
            }
        }
        spans.push((col.name.clone(), from..values.len()));
    }
    FeatureVector { values, spans }
}

/// Copies the embedding tables out of a trained network into a standalone
/// [`EncoderMode::Embedding`]. The copy is by value: later training of the
/// network does not change the returned tables.
pub fn transfer_embeddings(
    net: &crate::nn::NeuralNet,
    schema: &FeatureSchema,
) -> Result<EncoderMode, EncodingError> {
    let tables = EmbeddingTables {
        by_column: net
            .embeddings
            .iter()
            .map(|e| (e.column.clone(), e.table.clone()))
            .collect(),
    };
    tables.check_schema(schema)?;
    Ok(EncoderMode::Embedding(tables))
}

#[cfg(test)]
mod tests {
    use super::*;

    const WEEKDAYS: [&str; 7] =
        ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"];

    fn weekday_vocab() -> Vec<String> {
        WEEKDAYS.iter().map(|s| s.to_string()).collect()
    }

    fn weekday_age_schema(unseen: UnseenPolicy) -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureColumn::categorical("weekday", weekday_vocab(), unseen),
            FeatureColumn::continuous("age", 40.0, 10.0, 0.0, 116.0),
        ])
    }

    #[test]
    fn embedding_dim_examples() {
        assert_eq!(embedding_dim(7), 4);
        assert_eq!(embedding_dim(1), 1);
        assert_eq!(embedding_dim(245), 123);
    }

    #[test]
    fn embedding_never_wider_than_one_hot() {
        for n in 2..=400 {
            assert!(embedding_dim(n) <= n);
            if n >= 3 {
                assert!(embedding_dim(n) < n);
            }
        }
        assert_eq!(embedding_dim(2), 2);
    }

    #[test]
    fn one_hot_examples() {
        let vocab = weekday_vocab();
        assert_eq!(one_hot("Monday", &vocab).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot("Sunday", &vocab).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            one_hot("Someday", &vocab),
            Err(EncodingError::UnseenCategory { .. })
        ));
    }

    #[test]
    fn encode_row_widths() {
        let schema = weekday_age_schema(UnseenPolicy::Reject);
        let row = RawRow(vec![Value::cat("Wednesday"), Value::Num(50.0)]);

        let oh = encode_row(&row, &schema, &EncoderMode::OneHot).unwrap();
        assert_eq!(oh.values.len(), 7 + 1);
        assert_eq!(oh.spans[0], ("weekday".to_string(), 0..7));
        assert_eq!(oh.spans[1], ("age".to_string(), 7..8));
        assert_eq!(oh.values[7], 1.0); // (50 - 40) / 10

        let tables = EmbeddingTables {
            by_column: vec![("weekday".into(), EmbeddingTable::zeros(7, 4))],
        };
        let emb = encode_row(&row, &schema, &EncoderMode::Embedding(tables)).unwrap();
        assert_eq!(emb.values.len(), 4 + 1);
    }

    #[test]
    fn continuous_at_training_mean_encodes_zero() {
        let schema = weekday_age_schema(UnseenPolicy::Reject);
        let row = RawRow(vec![Value::cat("Monday"), Value::Num(40.0)]);
        let v = encode_row(&row, &schema, &EncoderMode::OneHot).unwrap();
        assert_eq!(v.values[7], 0.0);
    }

    #[test]
    fn unk_slot_policy_maps_unseen_to_reserved_column() {
        let schema = weekday_age_schema(UnseenPolicy::UnkSlot);
        let row = RawRow(vec![Value::cat("Someday"), Value::Num(40.0)]);
        let v = encode_row(&row, &schema, &EncoderMode::OneHot).unwrap();
        assert_eq!(v.values.len(), 8 + 1);
        assert_eq!(v.values[7], 1.0);
    }

    #[test]
    fn reject_policy_errors_on_unseen() {
        let schema = weekday_age_schema(UnseenPolicy::Reject);
        let row = RawRow(vec![Value::cat("Someday"), Value::Num(40.0)]);
        assert!(matches!(
            encode_row(&row, &schema, &EncoderMode::OneHot),
            Err(EncodingError::UnseenCategory { .. })
        ));
    }

    #[test]
    fn one_hot_is_injective_over_vocab() {
        let vocab = weekday_vocab();
        for (i, a) in WEEKDAYS.iter().enumerate() {
            for b in WEEKDAYS.iter().skip(i + 1) {
                assert_ne!(one_hot(a, &vocab).unwrap(), one_hot(b, &vocab).unwrap());
            }
        }
    }

    #[test]
    fn schema_json_round_trip() {
        let schema = weekday_age_schema(UnseenPolicy::UnkSlot);
        let js = schema.to_json();
        assert_eq!(FeatureSchema::from_json(&js).unwrap(), schema);
    }

    #[test]
    fn mismatched_tables_are_rejected() {
        let schema = weekday_age_schema(UnseenPolicy::Reject);
        let tables = EmbeddingTables {
            by_column: vec![("weekday".into(), EmbeddingTable::zeros(7, 3))],
        };
        assert!(matches!(
            tables.check_schema(&schema),
            Err(EncodingError::SchemaMismatch(_))
        ));
    }
}
