//! CSV tabular datasets: a header row, numeric feature columns, and one
//! class-label column selected by name.

use std::path::Path;

use super::{DataError, Dataset};
use crate::model::{Label, Record};

/// Load a CSV with a header row. Every column except `label_column` becomes a
/// feature, in header order; the label column is parsed as a class index.
pub fn load_csv_tabular(path: &Path, label_column: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| DataError::FormatError(e.to_string()))?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::FormatError(e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            DataError::FormatError(format!("label column '{label_column}' not found"))
        })?;
    let feature_dim = headers.len() - 1;
    if feature_dim == 0 {
        return Err(DataError::FormatError("no feature columns".into()));
    }

    let mut records = Vec::new();
    let mut max_class = 0usize;
    for (row_idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| DataError::FormatError(format!("row {row_idx}: {e}")))?;
        let mut features = Vec::with_capacity(feature_dim);
        let mut label = None;
        for (col, field) in row.iter().enumerate() {
            if col == label_idx {
                let k: usize = field.trim().parse().map_err(|_| {
                    DataError::FormatError(format!(
                        "row {row_idx}: label '{field}' is not a class index"
                    ))
                })?;
                max_class = max_class.max(k);
                label = Some(Label::Class(k));
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    DataError::FormatError(format!(
                        "row {row_idx}, column '{}': '{field}' is not numeric",
                        &headers[col]
                    ))
                })?;
                if !v.is_finite() {
                    return Err(DataError::FormatError(format!(
                        "row {row_idx}: non-finite feature"
                    )));
                }
                features.push(v);
            }
        }
        records.push(Record::new(features, label.expect("label column present")));
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, feature_dim, max_class + 1, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn loads_features_in_header_order() {
        let f = write_csv("a,label,b\n1.0,2,3.0\n4.0,0,6.0\n");
        let d = load_csv_tabular(f.path(), "label").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.feature_dim, 2);
        assert_eq!(d.num_classes, 3);
        assert_eq!(d.record(0).features, vec![1.0, 3.0]);
        assert_eq!(d.record(0).label, Label::Class(2));
    }

    #[test]
    fn missing_label_column_is_an_error() {
        let f = write_csv("a,b\n1,2\n");
        assert!(matches!(
            load_csv_tabular(f.path(), "label"),
            Err(DataError::FormatError(_))
        ));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let f = write_csv("a,b,label\n1,2,0\n1,0\n");
        assert!(matches!(
            load_csv_tabular(f.path(), "label"),
            Err(DataError::FormatError(_))
        ));
    }

    #[test]
    fn non_numeric_feature_is_rejected() {
        let f = write_csv("a,label\nx,0\n");
        assert!(matches!(
            load_csv_tabular(f.path(), "label"),
            Err(DataError::FormatError(_))
        ));
    }
}
