//! Bernoulli membership masks for the shadow-model game.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{DataError, Dataset};
use crate::seeds::{derive, unit_f64, Stream};

/// Per-record membership bits, reproducible from `(seed, gamma)`. Bit `i`
/// depends only on `(seed, i)`, so appending records never flips earlier
/// bits.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMask {
    pub bits: Vec<bool>,
    pub gamma: f64,
    pub seed: u64,
}

/// Draw each membership bit independently with probability `gamma`.
pub fn bernoulli_split(dataset: &Dataset, gamma: f64, seed: u64) -> MembershipMask {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
    let bits = (0..dataset.len())
        .map(|i| unit_f64(derive(seed, Stream::MembershipMask, i as u64)) < gamma)
        .collect();
    MembershipMask { bits, gamma, seed }
}

impl MembershipMask {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn member_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn member_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn non_member_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
            .collect()
    }

    /// Copy of the mask with one index forced out of the member set.
    pub fn without(&self, index: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[index] = false;
        Self {
            bits,
            gamma: self.gamma,
            seed: self.seed,
        }
    }

    /// Text format: one line `seed=...,gamma=...`, then the bits as a line of
    /// `0`/`1` characters.
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "seed={},gamma={}", self.seed, self.gamma)?;
        let line: String = self
            .bits
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        writeln!(f, "{line}")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| DataError::FormatError("empty mask file".into()))??;
        let mut seed = None;
        let mut gamma = None;
        for part in header.split(',') {
            match part.split_once('=') {
                Some(("seed", v)) => {
                    seed = Some(
                        v.parse()
                            .map_err(|_| DataError::FormatError(format!("bad seed '{v}'")))?,
                    )
                }
                Some(("gamma", v)) => {
                    gamma = Some(
                        v.parse()
                            .map_err(|_| DataError::FormatError(format!("bad gamma '{v}'")))?,
                    )
                }
                _ => return Err(DataError::FormatError(format!("bad header field '{part}'"))),
            }
        }
        let bits_line = lines
            .next()
            .ok_or_else(|| DataError::FormatError("mask file missing bits".into()))??;
        let bits = bits_line
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(DataError::FormatError(format!("bad bit char '{other}'"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            bits,
            gamma: gamma.ok_or_else(|| DataError::FormatError("missing gamma".into()))?,
            seed: seed.ok_or_else(|| DataError::FormatError("missing seed".into()))?,
        })
    }
}
