//! Tabular regression data: CSV ingestion, target transforms and
//! cross-validation split plans.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do with rows that contain a missing or unparseable cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    DropRow,
    Error,
}

/// A feature matrix (row-major) paired with a regression target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    target: Vec<f64>,
    feature_names: Vec<String>,
    n_features: usize,
}

fn is_missing(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell == "NA" || cell == "NaN"
}

impl Dataset {
    /// Builds a dataset from row vectors, checking that every value is
    /// finite, that rows are rectangular and that `n >= 2`, `p >= 1`.
    pub fn new(rows: Vec<Vec<f64>>, target: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if rows.len() != target.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: target.len(),
            });
        }
        let p = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * p);
        for row in &rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, target, feature_names)
    }

    pub fn from_flat(features: Vec<f64>, target: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let p = feature_names.len();
        if p == 0 {
            return Err(Error::InvalidData("at least one feature column is required".into()));
        }
        if features.len() != target.len() * p {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: target.len() * p,
            });
        }
        if target.len() < 2 {
            return Err(Error::TooFewRows(target.len()));
        }
        if features.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        Ok(Dataset {
            features,
            target,
            feature_names,
            n_features: p,
        })
    }

    /// Loads a comma-separated file with a header row. The target column is
    /// extracted and every other column becomes a numeric feature.
    pub fn load_csv(path: impl AsRef<Path>, target_column: &str, policy: MissingPolicy) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, target_column, policy)
    }

    pub fn from_csv_reader<R: Read>(reader: R, target_column: &str, policy: MissingPolicy) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let target_idx = header
            .iter()
            .position(|h| h == target_column)
            .ok_or_else(|| Error::UnknownColumn(target_column.to_string()))?;
        let feature_names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target_idx)
            .map(|(_, h)| h.clone())
            .collect();

        let mut features = Vec::new();
        let mut target = Vec::new();
        let mut row_buf = Vec::with_capacity(header.len());
        'rows: for (row_no, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, header has {}",
                    row_no + 1,
                    record.len(),
                    header.len()
                )));
            }
            row_buf.clear();
            for (col, cell) in record.iter().enumerate() {
                let parsed = if is_missing(cell) {
                    None
                } else {
                    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
                };
                match (parsed, policy) {
                    (Some(v), _) => row_buf.push(v),
                    (None, MissingPolicy::DropRow) => continue 'rows,
                    (None, MissingPolicy::Error) => {
                        return Err(Error::NonNumeric {
                            row: row_no + 1,
                            column: header[col].clone(),
                            value: cell.to_string(),
                        })
                    }
                }
            }
            for (col, &v) in row_buf.iter().enumerate() {
                if col == target_idx {
                    target.push(v);
                } else {
                    features.push(v);
                }
            }
        }
        if target.len() < 2 {
            return Err(Error::TooFewRows(target.len()));
        }
        Self::from_flat(features, target, feature_names)
    }

    /// Reads only the named columns of a CSV file, in `names` order. Every
    /// selected cell must be a finite number; other columns are ignored.
    pub fn read_feature_rows(path: impl AsRef<Path>, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let cols: Vec<usize> = names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::UnknownColumn(n.clone()))
            })
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (row_no, record) in rdr.records().enumerate() {
            let record = record?;
            let row = cols
                .iter()
                .map(|&c| {
                    let cell = record.get(c).unwrap_or("");
                    cell.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite() && !is_missing(cell))
                        .ok_or_else(|| Error::NonNumeric {
                            row: row_no + 1,
                            column: header[c].clone(),
                            value: cell.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        Ok(rows)
    }

    /// Column names of a CSV file.
    pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        Ok(rdr.headers()?.iter().map(|h| h.trim().to_string()).collect())
    }

    /// The first `m` rows.
    pub fn head(&self, m: usize) -> Result<Self> {
        if m > self.n_rows() {
            return Err(Error::InvalidParam(format!(
                "cannot take {m} of {} rows",
                self.n_rows()
            )));
        }
        self.select(&(0..m).collect::<Vec<_>>())
    }

    /// Writes the dataset as CSV with the target as the last column. Values
    /// are written in shortest round-trip form, so reloading is lossless.
    pub fn write_csv<W: Write>(&self, writer: W, target_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(target_name);
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.n_features + feature]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Replaces the target by its natural logarithm.
    pub fn log_transform_target(&self) -> Result<Self> {
        if let Some(bad) = self.target.iter().find(|&&y| y <= 0.0) {
            return Err(Error::InvalidData(format!(
                "log transform needs positive targets, found {bad}"
            )));
        }
        let mut out = self.clone();
        out.target.iter_mut().for_each(|y| *y = y.ln());
        Ok(out)
    }

    /// Pairs the features of row `t` with the target of row `t + horizon`
    /// and drops the last `horizon` rows.
    pub fn shift_target(&self, horizon: usize) -> Result<Self> {
        let n = self.n_rows();
        if horizon == 0 {
            return Err(Error::InvalidParam("shift horizon must be positive".into()));
        }
        if horizon >= n {
            return Err(Error::InvalidParam(format!(
                "shift horizon {horizon} leaves no rows out of {n}"
            )));
        }
        let kept = n - horizon;
        let features = self.features[..kept * self.n_features].to_vec();
        let target = self.target[horizon..].to_vec();
        Self::from_flat(features, target, self.feature_names.clone())
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut target = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::InvalidParam(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            target.push(self.target[i]);
        }
        Self::from_flat(features, target, self.feature_names.clone())
    }

    /// A seeded random subsample of `m` rows without replacement, keeping
    /// the original row order.
    pub fn subsample(&self, m: usize, seed: u64) -> Result<Self> {
        let n = self.n_rows();
        if m < 2 || m > n {
            return Err(Error::InvalidParam(format!("cannot subsample {m} of {n} rows")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Extracts columns by name from another table, in `names` order.
    pub fn project(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<usize> = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| Error::UnknownColumn(name.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(self.rows().map(|row| cols.iter().map(|&c| row[c]).collect()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    KFold,
    SlidingWindow,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A list of train/test index folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub folds: Vec<Fold>,
}

/// Shuffled k-fold split. Test sets partition `0..n` and their sizes
/// differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidParam(format!(
            "k-fold needs 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut test = order[start..start + len].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += len;
    }
    Ok(SplitPlan {
        scheme: SplitScheme::KFold,
        folds,
    })
}

/// Fixed-width sliding window over temporally ordered rows.
///
/// The test block has length `n / (k + 1)` and the train window takes the
/// remainder of the first fold, so the last test block ends at `n`. Each
/// fold advances both windows by one test block.
pub fn sliding_window_split(n: usize, k: usize) -> Result<SplitPlan> {
    if k == 0 || n < 2 * (k + 1) {
        return Err(Error::InvalidParam(format!(
            "sliding window with k={k} needs n >= {}, got {n}",
            2 * (k + 1)
        )));
    }
    let test_len = n / (k + 1);
    let train_len = n - k * test_len;
    sliding_window_split_with(n, k, train_len, test_len)
}

/// Sliding window with explicit train window and test block lengths.
pub fn sliding_window_split_with(n: usize, k: usize, train_len: usize, test_len: usize) -> Result<SplitPlan> {
    if k == 0 || train_len < 2 || test_len == 0 {
        return Err(Error::InvalidParam(
            "sliding window needs k >= 1, train_len >= 2, test_len >= 1".into(),
        ));
    }
    if train_len + k * test_len > n {
        return Err(Error::InvalidParam(format!(
            "sliding window needs {} rows, have {n}",
            train_len + k * test_len
        )));
    }
    let folds = (0..k)
        .map(|f| {
            let start = f * test_len;
            let cut = start + train_len;
            Fold {
                train: (start..cut).collect(),
                test: (cut..cut + test_len).collect(),
            }
        })
        .collect();
    Ok(SplitPlan {
        scheme: SplitScheme::SlidingWindow,
        folds,
    })
}

/// Single shuffled train/test split with `test_fraction` of rows held out.
pub fn holdout_split(n: usize, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test + 2 > n {
        return Err(Error::InvalidParam(format!(
            "holdout of {n_test} rows out of {n} is degenerate"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitPlan {
        scheme: SplitScheme::Holdout,
        folds: vec![Fold { train, test }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(text: &str, target: &str, policy: MissingPolicy) -> Result<Dataset> {
        Dataset::from_csv_reader(text.as_bytes(), target, policy)
    }

    #[test]
    fn loads_three_rows() {
        let d = load("a,b,y\n1,2,3\n4,5,6\n7,8,9\n", "y", MissingPolicy::Error).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.row(1), &[4.0, 5.0]);
        assert_eq!(d.target(), &[3.0, 6.0, 9.0]);
        assert_eq!(d.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn target_in_middle_column() {
        let d = load("a,y,b\n1,2,3\n4,5,6\n", "y", MissingPolicy::Error).unwrap();
        assert_eq!(d.row(0), &[1.0, 3.0]);
        assert_eq!(d.target(), &[2.0, 5.0]);
    }

    #[test]
    fn drop_row_policy() {
        let text = "a,b,y\n1,2,3\nNaN,5,6\n7,8,9\n1,,2\n3,NA,4\n";
        let d = load(text, "y", MissingPolicy::DropRow).unwrap();
        assert_eq!(d.n_rows(), 2);
        let err = load(text, "y", MissingPolicy::Error).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 2, .. }));
    }

    #[test]
    fn unknown_target() {
        let err = load("a,b,y\n1,2,3\n4,5,6\n", "z", MissingPolicy::Error).unwrap_err();
        assert!(matches!(err, Error::UnknownColumn(ref c) if c == "z"));
    }

    #[test]
    fn too_few_rows() {
        let err = load("a,y\n1,2\nx,3\n", "y", MissingPolicy::DropRow).unwrap_err();
        assert!(matches!(err, Error::TooFewRows(1)));
    }

    #[test]
    fn missing_file() {
        let err = Dataset::load_csv("/nonexistent/file.csv", "y", MissingPolicy::Error).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    fn three_row(target: Vec<f64>) -> Dataset {
        Dataset::new(
            vec![vec![0.5, -1.0], vec![1.5, 2.0], vec![2.5, 3.25]],
            target,
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn log_transform() {
        let e = std::f64::consts::E;
        let d = three_row(vec![1.0, e, e * e]);
        let t = d.log_transform_target().unwrap();
        assert_eq!(t.target()[0], 0.0);
        assert!((t.target()[1] - 1.0).abs() < 1e-15);
        assert!((t.target()[2] - 2.0).abs() < 1e-15);
        assert_eq!(t.features, d.features);
        assert!(three_row(vec![1.0, 0.0, 2.0]).log_transform_target().is_err());
    }

    #[test]
    fn shift() {
        let d = three_row(vec![1.0, 2.0, 3.0]);
        let s = d.shift_target(1).unwrap();
        assert_eq!(s.n_rows(), 2);
        assert_eq!(s.target(), &[2.0, 3.0]);
        assert_eq!(s.row(0), d.row(0));
        assert_eq!(s.row(1), d.row(1));
        assert!(d.shift_target(3).is_err());
        assert!(d.shift_target(0).is_err());
    }

    #[test]
    fn shift_exhaustive_small() {
        for n in 3..12 {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
            let target: Vec<f64> = (0..n).map(|i| 100.0 + i as f64).collect();
            let d = Dataset::new(rows, target, vec!["x".into()]).unwrap();
            for h in 1..n - 1 {
                let s = d.shift_target(h).unwrap();
                assert_eq!(s.n_rows(), n - h);
                for t in 0..n - h {
                    assert_eq!(s.row(t)[0], t as f64);
                    assert_eq!(s.target()[t], d.target()[t + h]);
                }
            }
        }
    }

    #[test]
    fn kfold_examples() {
        let plan = kfold_split(10, 5, 7).unwrap();
        assert_eq!(plan.folds.len(), 5);
        let mut all: Vec<usize> = plan.folds.iter().flat_map(|f| f.test.clone()).collect();
        assert!(plan.folds.iter().all(|f| f.test.len() == 2));
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(plan, kfold_split(10, 5, 7).unwrap());
        assert!(kfold_split(3, 5, 0).is_err());
        assert!(kfold_split(10, 1, 0).is_err());
    }

    #[test]
    fn sliding_examples() {
        let plan = sliding_window_split(12, 2).unwrap();
        assert_eq!(plan.folds.len(), 2);
        assert_eq!(
            plan.folds[0].test,
            [8, 9, 10, 11].iter().map(|&i| i - 4).collect::<Vec<_>>()
        );
        assert_eq!(plan.folds[1].test, vec![8, 9, 10, 11]);
        assert_eq!(plan.folds[0].train, (0..4).collect::<Vec<_>>());
        assert_eq!(plan.folds[1].train, (4..8).collect::<Vec<_>>());

        let single = sliding_window_split(10, 1).unwrap();
        assert_eq!(single.folds.len(), 1);
        assert_eq!(single.folds[0].train, (0..5).collect::<Vec<_>>());
        assert_eq!(single.folds[0].test, (5..10).collect::<Vec<_>>());

        assert!(sliding_window_split(5, 2).is_err());
    }

    #[test]
    fn holdout() {
        let plan = holdout_split(20, 0.25, 3).unwrap();
        assert_eq!(plan.folds[0].test.len(), 5);
        assert_eq!(plan.folds[0].train.len(), 15);
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec![
                vec![0.1, 1e-300],
                vec![std::f64::consts::PI, -2.5e17],
                vec![1.0 / 3.0, 0.0],
            ],
            vec![0.7, f64::MIN_POSITIVE, 12345.678901234567],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, "y").unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice(), "y", MissingPolicy::Error).unwrap();
        assert_eq!(back, d);
    }

    fn disjoint(f: &Fold) -> bool {
        f.train.iter().all(|i| !f.test.contains(i))
    }

    proptest! {
        #[test]
        fn kfold_partitions(n in 2usize..80, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let plan = kfold_split(n, k, seed).unwrap();
            let mut seen = vec![0usize; n];
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in &plan.folds {
                prop_assert!(disjoint(f));
                prop_assert_eq!(f.train.len() + f.test.len(), n);
                for &i in &f.test { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
        }

        #[test]
        fn sliding_respects_time(n in 4usize..200, k in 1usize..8) {
            prop_assume!(n >= 2 * (k + 1));
            let plan = sliding_window_split(n, k).unwrap();
            prop_assert_eq!(plan.folds.len(), k);
            let mut prev_start = None;
            for f in &plan.folds {
                prop_assert!(disjoint(f));
                prop_assert!(f.test.iter().min().unwrap() > f.train.iter().max().unwrap());
                prop_assert_eq!(*f.test.first().unwrap(), f.train.last().unwrap() + 1);
                if let Some(p) = prev_start { prop_assert!(f.train[0] > p); }
                prev_start = Some(f.train[0]);
            }
            prop_assert_eq!(*plan.folds.last().unwrap().test.last().unwrap(), n - 1);
        }
    }
}
