//! Dataset ingestion (IDX images, CSV tabular), synthetic tabular generation,
//! and Bernoulli membership splitting for the shadow-model game.

mod cache;
mod csv_tabular;
mod idx;
mod mask;
mod synth;

pub use csv_tabular::load_csv_tabular;
pub use idx::load_idx;
pub use mask::{bernoulli_split, MembershipMask};
pub use synth::synth_tabular;

use thiserror::Error;

use crate::model::{Label, Record};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad file format: {0}")]
    FormatError(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {index} has {got} features, dataset has {expected}")]
    InconsistentRecord {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// An immutable, indexed collection of records with a common feature
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub num_classes: usize,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_dim: usize,
        num_classes: usize,
        records: Vec<Record>,
    ) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        for (index, r) in records.iter().enumerate() {
            if r.features.len() != feature_dim {
                return Err(DataError::InconsistentRecord {
                    index,
                    expected: feature_dim,
                    got: r.features.len(),
                });
            }
            if let Label::Class(k) = r.label {
                if k >= num_classes {
                    return Err(DataError::FormatError(format!(
                        "record {index} has class {k}, dataset has {num_classes} classes"
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            feature_dim,
            num_classes,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, i: usize) -> &Record {
        &self.records[i]
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Map class labels to regression targets 0.0 (even) / 1.0 (odd).
    /// Used to turn a digit-classification set into an odd-vs-even
    /// regression task for the squared-loss linear model.
    pub fn to_odd_even_targets(&self) -> Self {
        let records = self
            .records
            .iter()
            .map(|r| {
                let label = match r.label {
                    Label::Class(k) => Label::Target((k % 2) as f64),
                    Label::Target(t) => Label::Target(t),
                };
                Record::new(r.features.clone(), label)
            })
            .collect();
        Self {
            name: format!("{}-odd", self.name),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
            records,
        }
    }

    pub fn save_cache(&self, path: &std::path::Path) -> Result<(), DataError> {
        cache::save(self, path)
    }

    pub fn load_cache(path: &std::path::Path) -> Result<Self, DataError> {
        cache::load(path)
    }

    pub fn cache_bytes(&self) -> Vec<u8> {
        cache::to_bytes(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_rejects_inconsistent_records() {
        let records = vec![
            Record::new(vec![1.0, 2.0], Label::Class(0)),
            Record::new(vec![1.0], Label::Class(1)),
        ];
        assert!(matches!(
            Dataset::new("t", 2, 2, records),
            Err(DataError::InconsistentRecord { index: 1, .. })
        ));
    }

    #[test]
    fn constructor_rejects_out_of_range_class() {
        let records = vec![Record::new(vec![1.0], Label::Class(5))];
        assert!(Dataset::new("t", 1, 2, records).is_err());
    }

    #[test]
    fn odd_even_mapping() {
        let records = vec![
            Record::new(vec![0.0], Label::Class(4)),
            Record::new(vec![0.0], Label::Class(7)),
        ];
        let d = Dataset::new("digits", 1, 10, records).unwrap();
        let odd = d.to_odd_even_targets();
        assert_eq!(odd.record(0).label, Label::Target(0.0));
        assert_eq!(odd.record(1).label, Label::Target(1.0));
    }
}
