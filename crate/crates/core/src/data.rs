//! Dataset loading, equal-width binning, train/test split and the vertical
//! column split between the two parties.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{DataError, SetupError};

/// The Wisconsin breast-cancer table shipped with the crate.
pub const BREAST_CANCER_CSV: &str = include_str!("../data/breast_cancer.csv");

pub const DEFAULT_LABEL: &str = "label";

/// Numeric samples with binary labels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn column(&self, z: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[z]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps only the listed feature columns, in order.
    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            rows: self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn head(&self, n: usize) -> Dataset {
        self.subset(&(0..n.min(self.len())).collect::<Vec<_>>())
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_col: &str) -> Result<Dataset, DataError> {
    parse_csv(std::fs::File::open(path)?, label_col)
}

pub fn breast_cancer() -> Dataset {
    parse_csv(BREAST_CANCER_CSV.as_bytes(), DEFAULT_LABEL).expect("bundled dataset parses")
}

/// Parses a headed CSV. Rows are numbered from 1 after the header.
pub fn parse_csv(input: impl Read, label_col: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = header.iter().position(|h| h == label_col).ok_or_else(|| DataError::NoLabelColumn(label_col.to_string()))?;
    let feature_names: Vec<String> = header.iter().enumerate().filter(|(i, _)| *i != label_idx).map(|(_, h)| h.clone()).collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let label = record.get(label_idx).filter(|v| !v.is_empty()).ok_or(DataError::MissingLabel { row })?;
        labels.push(match label.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => return Err(DataError::BadLabel { row, value: label.to_string() }),
        });
        let mut values = Vec::with_capacity(feature_names.len());
        for (c, name) in header.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            let cell = record.get(c).unwrap_or("");
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::NotNumeric { row, column: name.clone(), value: cell.to_string() })?;
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(Dataset { feature_names, rows, labels })
}

/// Seeded shuffle, then the first round(ratio * N) rows train.
/// The shuffle seed folds the high half of `seed` into the low half.
pub fn split_train_test(ds: &Dataset, ratio: f64, seed: u128) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed as u64 ^ (seed >> 64) as u64));
    let cut = ((ratio * ds.len() as f64).round() as usize).min(ds.len());
    (ds.subset(&idx[..cut]), ds.subset(&idx[cut..]))
}

/// B - 1 equal-width thresholds per feature. A sample goes left at candidate
/// (z, u) when x[z] < thresholds[z][u].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Buckets {
    pub thresholds: Vec<Vec<f64>>,
}

impl Buckets {
    pub fn per_feature(&self) -> usize {
        self.thresholds.first().map_or(0, Vec::len)
    }

    /// 1{x < threshold} for every sample, one vector per candidate in
    /// feature-major, bucket-minor order.
    pub fn left_indicators(&self, rows: &[Vec<f64>]) -> Vec<Vec<u64>> {
        self.thresholds
            .iter()
            .enumerate()
            .flat_map(|(z, ts)| ts.iter().map(move |&t| rows.iter().map(|r| (r[z] < t) as u64).collect()))
            .collect()
    }
}

/// Thresholds min + u (max - min) / B for u = 1..B-1. A constant column gets
/// B - 1 copies of its value, which send every sample right.
pub fn bin_features(ds: &Dataset, buckets: usize) -> Result<Buckets, SetupError> {
    if buckets < 2 {
        return Err(SetupError::Buckets(buckets));
    }
    let thresholds = (0..ds.n_features())
        .map(|z| {
            let col = ds.column(z);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (1..buckets).map(|u| lo + u as f64 * (hi - lo) / buckets as f64).collect()
        })
        .collect();
    Ok(Buckets { thresholds })
}

/// Which global feature columns each party holds. P0's features come first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerticalSplit {
    pub features: usize,
    pub p0_features: usize,
}

impl VerticalSplit {
    /// `split` is the number of leading columns P0 holds; the default is
    /// ceil(F / 2).
    pub fn new(features: usize, split: Option<usize>) -> Result<Self, DataError> {
        let p0 = split.unwrap_or(features.div_ceil(2));
        if p0 == 0 || p0 >= features {
            return Err(DataError::SplitCols { split: p0, features });
        }
        Ok(VerticalSplit { features, p0_features: p0 })
    }

    pub fn columns(&self, party: usize) -> std::ops::Range<usize> {
        if party == 0 {
            0..self.p0_features
        } else {
            self.p0_features..self.features
        }
    }

    pub fn owner_of(&self, z: usize) -> usize {
        (z >= self.p0_features) as usize
    }

    /// The party's view: its columns; labels are kept for P1 only.
    pub fn view(&self, ds: &Dataset, party: usize) -> Dataset {
        let cols: Vec<usize> = self.columns(party).collect();
        let mut v = ds.select_features(&cols);
        if party == 0 {
            v.labels.clear();
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_dataset_shape() {
        let ds = breast_cancer();
        assert_eq!((ds.len(), ds.n_features()), (699, 9));
        assert_eq!(ds.labels.iter().filter(|&&y| y == 1).count(), 241);
        let (train, test) = split_train_test(&ds, 0.8, 1);
        assert_eq!((train.len(), test.len()), (559, 140));
    }

    #[test]
    fn small_fixture_and_errors() {
        let ds = parse_csv("a,b,label\n1,2,0\n3,4,1\n5,6,1\n".as_bytes(), "label").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.rows[1], vec![3.0, 4.0]);
        assert!(matches!(parse_csv("a,b\n1,2\n".as_bytes(), "label"), Err(DataError::NoLabelColumn(_))));
        match parse_csv("a,label\n1,0\nx,1\n".as_bytes(), "label") {
            Err(DataError::NotNumeric { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "a")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_csv("a,label\n1,\n".as_bytes(), "label"), Err(DataError::MissingLabel { row: 1 })));
        assert!(matches!(parse_csv("a,label\n1,2\n".as_bytes(), "label"), Err(DataError::BadLabel { .. })));
        assert!(matches!(parse_csv("a,label\n".as_bytes(), "label"), Err(DataError::Empty)));
    }

    #[test]
    fn binning_examples() {
        let ds = parse_csv("x,age,c,label\n0,0,3,0\n8,100,3,1\n".as_bytes(), "label").unwrap();
        let b8 = bin_features(&ds, 8).unwrap();
        assert_eq!(b8.thresholds[0], (1..8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(b8.thresholds[2], vec![3.0; 7]);
        assert_eq!(bin_features(&ds, 4).unwrap().thresholds[1], vec![25.0, 50.0, 75.0]);
        assert!(bin_features(&ds, 1).is_err());
        let left = b8.left_indicators(&ds.rows);
        assert_eq!(left.len(), 21);
        assert_eq!(left[0], vec![1, 0]);
        assert_eq!(left[14], vec![0, 0]);
    }

    #[test]
    fn split_is_seeded() {
        let ds = parse_csv("a,label\n1,0\n2,0\n3,1\n4,1\n5,0\n6,1\n7,0\n8,1\n9,0\n10,1\n".as_bytes(), "label").unwrap();
        let (a, b) = split_train_test(&ds, 0.8, 9);
        assert_eq!((a.len(), b.len()), (8, 2));
        assert_eq!(split_train_test(&ds, 0.8, 9).0, a);
        assert_ne!(split_train_test(&ds, 0.8, 10).0, a);
    }

    #[test]
    fn vertical_split() {
        let v = VerticalSplit::new(9, None).unwrap();
        assert_eq!((v.columns(0), v.columns(1)), (0..5, 5..9));
        assert_eq!((v.owner_of(4), v.owner_of(5)), (0, 1));
        assert!(VerticalSplit::new(9, Some(9)).is_err());
        let ds = breast_cancer();
        assert!(v.view(&ds, 0).labels.is_empty());
        assert_eq!(v.view(&ds, 1).n_features(), 4);
    }
}
