//! IDX image/label file parsing (the MNIST container format).
//!
//! Magic numbers and dimensions are big-endian u32 per the format spec:
//! 0x00000803 for u8 image tensors, 0x00000801 for u8 label vectors.
//! Pixels are scaled to [0, 1].

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use super::{DataError, Dataset};
use crate::model::{Label, Record};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(r: &mut impl Read) -> Result<u32, DataError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| DataError::FormatError("truncated IDX header".into()))?;
    Ok(u32::from_be_bytes(b))
}

/// Load an image/label IDX pair into a dataset of flattened [0,1] pixels.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let mut img = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut img)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::FormatError(format!(
            "image file magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut img)? as usize;
    let rows = read_u32_be(&mut img)? as usize;
    let cols = read_u32_be(&mut img)? as usize;
    let feature_dim = rows * cols;
    let mut pixels = vec![0u8; count * feature_dim];
    img.read_exact(&mut pixels)
        .map_err(|_| DataError::FormatError("truncated IDX image payload".into()))?;

    let mut lab = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut lab)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::FormatError(format!(
            "label file magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = read_u32_be(&mut lab)? as usize;
    if label_count != count {
        return Err(DataError::FormatError(format!(
            "{count} images but {label_count} labels"
        )));
    }
    let mut labels = vec![0u8; count];
    lab.read_exact(&mut labels)
        .map_err(|_| DataError::FormatError("truncated IDX label payload".into()))?;

    let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let records = (0..count)
        .map(|i| {
            let raw = &pixels[i * feature_dim..(i + 1) * feature_dim];
            let features = raw.iter().map(|&p| p as f64 / 255.0).collect();
            Record::new(features, Label::Class(labels[i] as usize))
        })
        .collect();
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(name, feature_dim, num_classes, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(path: &Path, magic: u32, count: u32, rows: u32, cols: u32, pixels: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&count.to_be_bytes()).unwrap();
        f.write_all(&rows.to_be_bytes()).unwrap();
        f.write_all(&cols.to_be_bytes()).unwrap();
        f.write_all(pixels).unwrap();
    }

    fn write_labels(path: &Path, magic: u32, labels: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(&magic.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn loads_a_tiny_pair() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        write_images(
            &images,
            IMAGES_MAGIC,
            3,
            2,
            2,
            &[0, 255, 128, 64, 0, 0, 0, 0, 255, 255, 255, 255],
        );
        write_labels(&labels, LABELS_MAGIC, &[1, 0, 2]);
        let d = load_idx(&images, &labels).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.feature_dim, 4);
        assert_eq!(d.num_classes, 3);
        assert_eq!(d.record(0).features[1], 1.0);
        assert_eq!(d.record(0).features[2], 128.0 / 255.0);
        assert_eq!(d.record(2).label, Label::Class(2));
    }

    #[test]
    fn rejects_swapped_magic() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        write_images(&images, IMAGES_MAGIC, 1, 1, 1, &[0]);
        // a labels file carrying the images magic must be refused
        write_labels(&labels, IMAGES_MAGIC, &[0]);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(DataError::FormatError(_))
        ));
    }

    #[test]
    fn rejects_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        write_images(&images, IMAGES_MAGIC, 2, 1, 1, &[0, 1]);
        write_labels(&labels, LABELS_MAGIC, &[0]);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(DataError::FormatError(_))
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("img.idx");
        let labels = dir.path().join("lab.idx");
        write_images(&images, IMAGES_MAGIC, 2, 2, 2, &[0, 1, 2]); // needs 8 bytes
        write_labels(&labels, LABELS_MAGIC, &[0, 1]);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(DataError::FormatError(_))
        ));
    }
}
