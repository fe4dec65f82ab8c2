//! Deterministic train/valid/test splitting and the manifest file.
//!
//! Split sizes follow a floor rule: `valid = floor(f_valid * N)`,
//! `test = floor(f_test * N)`, and every remaining record goes to train.
//! Records are assigned by a seeded uniform shuffle (ChaCha8), so the same
//! seed always yields the same assignment.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnnotationError, ImageRecord};
use crate::geometry::ImageSize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "val" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const EIGHTY_TEN_TEN: Self = Self {
        train: 0.8,
        valid: 0.1,
        test: 0.1,
    };

    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, AnnotationError> {
        let f = Self { train, valid, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        let all = [self.train, self.valid, self.test];
        let positive = all.iter().all(|v| v.is_finite() && *v > 0.0);
        if !positive || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(AnnotationError::InvalidFractions(all));
        }
        Ok(())
    }

    /// `(train, valid, test)` sizes for `n` records.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs products like 0.29 * 100 = 28.999999999999996.
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let valid = floor(self.valid).min(n);
        let test = floor(self.test).min(n - valid);
        (n - valid - test, valid, test)
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self::EIGHTY_TEN_TEN
    }
}

/// Split label for each of `n` positions.
pub fn split_assignment(
    n: usize,
    fractions: SplitFractions,
    seed: u64,
) -> Result<Vec<Split>, AnnotationError> {
    fractions.validate()?;
    let (train, valid, _) = fractions.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut splits = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < train {
            Split::Train
        } else if rank < train + valid {
            Split::Valid
        } else {
            Split::Test
        };
    }
    Ok(splits)
}

/// Images plus their split assignment. `records[i]` belongs to `splits[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: Option<u64>,
    pub records: Vec<ImageRecord>,
    pub splits: Vec<Split>,
}

impl DatasetManifest {
    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records
            .iter()
            .zip(&self.splits)
            .filter(move |(_, s)| **s == split)
            .map(|(r, _)| r)
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|s| **s == split).count()
    }

    /// Every record labeled `split`; used when a manifest is built from
    /// a folder that is already one split.
    pub fn single_split(records: Vec<ImageRecord>, split: Split) -> Self {
        let splits = vec![split; records.len()];
        Self {
            seed: None,
            records,
            splits,
        }
    }
}

pub fn split_dataset(
    records: Vec<ImageRecord>,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetManifest, AnnotationError> {
    let splits = split_assignment(records.len(), fractions, seed)?;
    Ok(DatasetManifest {
        seed: Some(seed),
        records,
        splits,
    })
}

/// One line of a manifest file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image_id: String,
    pub size: ImageSize,
    pub split: Option<Split>,
}

#[derive(Serialize, Deserialize)]
struct RawRow {
    image_id: String,
    width: u32,
    height: u32,
    #[serde(default)]
    split: String,
}

/// Writes `image_id,width,height,split` rows with a header; the seed, when
/// known, goes in a leading `# seed=<n>` comment.
pub fn write_manifest(manifest: &DatasetManifest) -> Result<String, AnnotationError> {
    let rows: Vec<ManifestRow> = manifest
        .records
        .iter()
        .zip(&manifest.splits)
        .map(|(r, s)| ManifestRow {
            image_id: r.image_id.clone(),
            size: r.size,
            split: Some(*s),
        })
        .collect();
    write_manifest_rows(manifest.seed, &rows)
}

/// Like [`write_manifest`] for rows that may have no split yet; those get an
/// empty split column.
pub fn write_manifest_rows(
    seed: Option<u64>,
    rows: &[ManifestRow],
) -> Result<String, AnnotationError> {
    let mut out = Vec::new();
    if let Some(seed) = seed {
        out.extend_from_slice(format!("# seed={seed}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for row in rows {
            w.serialize(RawRow {
                image_id: row.image_id.clone(),
                width: row.size.width,
                height: row.size.height,
                split: row.split.map(|s| s.to_string()).unwrap_or_default(),
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

/// Reads a manifest file. Returns the seed comment (if any) and the rows; an
/// empty split column means "unassigned".
pub fn read_manifest(text: &str) -> Result<(Option<u64>, Vec<ManifestRow>), AnnotationError> {
    let seed = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("seed="))
        .and_then(|s| s.trim().parse().ok());

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, raw) in reader.deserialize::<RawRow>().enumerate() {
        let raw = raw?;
        let line = i + 2;
        let size = ImageSize::new(raw.width, raw.height).map_err(|e| AnnotationError::Parse {
            line,
            message: e.to_string(),
        })?;
        let split = if raw.split.is_empty() {
            None
        } else {
            Some(
                raw.split
                    .parse()
                    .map_err(|message| AnnotationError::Parse { line, message })?,
            )
        };
        rows.push(ManifestRow {
            image_id: raw.image_id,
            size,
            split,
        });
    }
    Ok((seed, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_rule_sizes() {
        let f = SplitFractions::EIGHTY_TEN_TEN;
        assert_eq!(f.sizes(9058), (7248, 905, 905));
        assert_eq!(f.sizes(10), (8, 1, 1));
        assert_eq!(f.sizes(0), (0, 0, 0));
        assert_eq!(f.sizes(1), (1, 0, 0));
        let unassigned = ManifestRow {
            image_id: "a.jpg".into(),
            size: ImageSize::new(4, 3).unwrap(),
            split: None,
        };
        let text = write_manifest_rows(None, std::slice::from_ref(&unassigned)).unwrap();
        assert_eq!(read_manifest(&text).unwrap(), (None, vec![unassigned]));
        let g = SplitFractions::new(0.42, 0.29, 0.29).unwrap();
        assert_eq!(g.sizes(100), (42, 29, 29));
    }

    #[test]
    fn bad_fractions() {
        assert!(SplitFractions::new(0.8, 0.1, 0.2).is_err());
        assert!(SplitFractions::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitFractions::new(1.1, -0.05, -0.05).is_err());
    }

    #[test]
    fn assignment_matches_sizes_and_seed() {
        let a = split_assignment(9058, SplitFractions::EIGHTY_TEN_TEN, 7).unwrap();
        let b = split_assignment(9058, SplitFractions::EIGHTY_TEN_TEN, 7).unwrap();
        let c = split_assignment(9058, SplitFractions::EIGHTY_TEN_TEN, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let count = |s| a.iter().filter(|x| **x == s).count();
        assert_eq!(
            (count(Split::Train), count(Split::Valid), count(Split::Test)),
            (7248, 905, 905)
        );
    }

    #[test]
    fn manifest_file_roundtrip() {
        let size = ImageSize::new(640, 480).unwrap();
        let records: Vec<_> = (0..10)
            .map(|i| ImageRecord::new(format!("img_{i}"), size))
            .collect();
        let manifest = split_dataset(records, SplitFractions::default(), 3).unwrap();
        let text = write_manifest(&manifest).unwrap();
        assert!(text.starts_with("# seed=3\nimage_id,width,height,split\n"));
        let (seed, rows) = read_manifest(&text).unwrap();
        assert_eq!(seed, Some(3));
        assert_eq!(rows.len(), 10);
        for ((row, rec), split) in rows.iter().zip(&manifest.records).zip(&manifest.splits) {
            assert_eq!(row.image_id, rec.image_id);
            assert_eq!(row.size, size);
            assert_eq!(row.split, Some(*split));
        }
    }

    #[test]
    fn manifest_unassigned_and_bad_rows() {
        let (seed, rows) =
            read_manifest("image_id,width,height,split\na,10,10,\nb,5,5,val\n").unwrap();
        assert_eq!(seed, None);
        assert_eq!(rows[0].split, None);
        assert_eq!(rows[1].split, Some(Split::Valid));
        assert!(read_manifest("image_id,width,height,split\na,0,10,test\n").is_err());
        assert!(read_manifest("image_id,width,height,split\na,10,10,holdout\n").is_err());
    }
}
