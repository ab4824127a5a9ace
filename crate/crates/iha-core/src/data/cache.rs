//! Internal binary dataset cache. Round trips are byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use super::{DataError, Dataset};
use crate::model::{Label, Record};

const CACHE_MAGIC: &[u8; 7] = b"IHADST1";

pub fn to_bytes(dataset: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    let name = dataset.name.as_bytes();
    out.extend_from_slice(&(name.len() as u64).to_le_bytes());
    out.extend_from_slice(name);
    out.extend_from_slice(&(dataset.feature_dim as u64).to_le_bytes());
    out.extend_from_slice(&(dataset.num_classes as u64).to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for r in dataset.records() {
        match r.label {
            Label::Class(k) => {
                out.push(0);
                out.extend_from_slice(&(k as u64).to_le_bytes());
            }
            Label::Target(t) => {
                out.push(1);
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        for f in &r.features {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    out
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&to_bytes(dataset))?;
    f.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset, DataError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 7];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(DataError::FormatError(format!("bad cache magic {magic:?}")));
    }
    let mut b8 = [0u8; 8];
    let mut read_u64 = |f: &mut dyn Read| -> Result<u64, DataError> {
        f.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let name_len = read_u64(&mut f)? as usize;
    let mut name_bytes = vec![0u8; name_len];
    f.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| DataError::FormatError("cache name is not utf-8".into()))?;
    let feature_dim = read_u64(&mut f)? as usize;
    let num_classes = read_u64(&mut f)? as usize;
    let n = read_u64(&mut f)? as usize;

    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let mut tag = [0u8; 1];
        f.read_exact(&mut tag)?;
        let mut p8 = [0u8; 8];
        f.read_exact(&mut p8)?;
        let label = match tag[0] {
            0 => Label::Class(u64::from_le_bytes(p8) as usize),
            1 => Label::Target(f64::from_le_bytes(p8)),
            other => return Err(DataError::FormatError(format!("bad label tag {other}"))),
        };
        let mut features = Vec::with_capacity(feature_dim);
        for _ in 0..feature_dim {
            let mut v8 = [0u8; 8];
            f.read_exact(&mut v8)?;
            features.push(f64::from_le_bytes(v8));
        }
        records.push(Record::new(features, label));
    }
    Dataset::new(name, feature_dim, num_classes, records)
}
