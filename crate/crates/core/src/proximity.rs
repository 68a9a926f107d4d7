//! Forest-derived training weights for a query point.
//!
//! Four schemes turn a trained [`Forest`] into a query-by-training weight
//! matrix:
//!
//! * `qrf`: Meinshausen's leaf weights. Every training point sharing the
//!   query's leaf gets `1 / leaf size`, averaged over all trees.
//! * `gap`: RF-GAP. Over the trees where the query is out-of-bag, each
//!   in-bag point of the query's leaf gets its bootstrap multiplicity over the
//!   leaf's total multiplicity. A new point is treated as out-of-bag in every
//!   tree.
//! * `original`: fraction of trees in which the query and the training point
//!   share a leaf.
//! * `oob`: like `original`, but counted only over trees where both points
//!   are out-of-bag.
//!
//! `qrf` and `gap` rows sum to one by construction; `original` and `oob`
//! rows are divided by their sum. Rows that cannot be defined (a training
//! point that is never out-of-bag, or an all-zero `oob` row) are reported as
//! `None`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, LeafId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Qrf,
    Gap,
    Oob,
    Original,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Qrf, Scheme::Gap, Scheme::Oob, Scheme::Original];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Qrf => "qrf",
            Scheme::Gap => "gap",
            Scheme::Oob => "oob",
            Scheme::Original => "original",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qrf" => Ok(Scheme::Qrf),
            "gap" | "rf-gap" => Ok(Scheme::Gap),
            "oob" => Ok(Scheme::Oob),
            "original" => Ok(Scheme::Original),
            other => Err(Error::InvalidParam(format!("unknown weighting scheme `{other}`"))),
        }
    }
}

/// Whether the queries are the training points themselves (out-of-bag
/// bookkeeping applies) or new points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Test,
}

/// Query-by-training weights. `None` rows are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub scheme: Scheme,
    pub mode: Mode,
    pub n_train: usize,
    pub rows: Vec<Option<Vec<f64>>>,
}

impl WeightMatrix {
    pub fn n_queries(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, q: usize) -> Option<&[f64]> {
        self.rows[q].as_deref()
    }

    pub fn n_undefined(&self) -> usize {
        self.rows.iter().filter(|r| r.is_none()).count()
    }

    /// One line per query, one column per training index. Undefined rows
    /// are written as `NA`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["query".to_string()];
        header.extend((0..self.n_train).map(|j| j.to_string()));
        w.write_record(&header)?;
        for (q, row) in self.rows.iter().enumerate() {
            let mut rec = vec![q.to_string()];
            match row {
                Some(r) => rec.extend(r.iter().map(|v| v.to_string())),
                None => rec.extend(std::iter::repeat_n("NA".to_string(), self.n_train)),
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

struct TreeIndex {
    /// Leaf of every training point.
    leaf_of: Vec<LeafId>,
    /// All training points routed to each leaf.
    members: Vec<Vec<usize>>,
    /// Out-of-bag training points routed to each leaf.
    oob_members: Vec<Vec<usize>>,
    /// Total in-bag multiplicity of each leaf.
    mass: Vec<f64>,
}

/// Routing tables of a forest over its training set, shared by all schemes.
pub struct Proximity<'a> {
    forest: &'a Forest,
    trees: Vec<TreeIndex>,
    /// Number of trees in which each training point is out-of-bag.
    oob_count: Vec<u32>,
}

impl<'a> Proximity<'a> {
    pub fn new(forest: &'a Forest, data: &Dataset) -> Result<Self> {
        forest.check_training(data)?;
        let n = data.n_rows();
        let trees = forest
            .trees()
            .par_iter()
            .zip(forest.bootstraps())
            .map(|(tree, boot)| {
                let leaf_of: Vec<LeafId> = data.rows().map(|x| tree.leaf_of(x)).collect();
                let mut members = vec![Vec::new(); tree.n_leaves()];
                let mut oob_members = vec![Vec::new(); tree.n_leaves()];
                for (j, &l) in leaf_of.iter().enumerate() {
                    members[l].push(j);
                    if boot.is_oob(j) {
                        oob_members[l].push(j);
                    }
                }
                let mass = tree.leaves().iter().map(|l| l.total_multiplicity() as f64).collect();
                TreeIndex {
                    leaf_of,
                    members,
                    oob_members,
                    mass,
                }
            })
            .collect();
        let mut oob_count = vec![0u32; n];
        for boot in forest.bootstraps() {
            for &j in boot.oob_indices() {
                oob_count[j] += 1;
            }
        }
        Ok(Proximity {
            forest,
            trees,
            oob_count,
        })
    }

    pub fn n_train(&self) -> usize {
        self.oob_count.len()
    }

    fn leaves_of(&self, x: &[f64]) -> Result<Vec<LeafId>> {
        self.forest.leaf_assign(x)
    }

    /// QRF weights: per tree `1 / #{j : X_j in leaf(x)}` for co-leaf
    /// training points, averaged over trees.
    pub fn qrf_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let leaves = self.leaves_of(x)?;
        let mut w = vec![0.0; self.n_train()];
        for (idx, &l) in self.trees.iter().zip(&leaves) {
            let members = &idx.members[l];
            let share = 1.0 / members.len() as f64;
            for &j in members {
                w[j] += share;
            }
        }
        let k = self.trees.len() as f64;
        w.iter_mut().for_each(|v| *v /= k);
        Ok(w)
    }

    fn gap_accumulate(&self, w: &mut [f64], t: usize, leaf: LeafId) {
        let leaf_data = &self.forest.trees()[t].leaves()[leaf];
        let mass = self.trees[t].mass[leaf];
        for &(j, c) in &leaf_data.samples {
            w[j] += f64::from(c) / mass;
        }
    }

    /// RF-GAP row of training point `i`, over the trees where `i` is
    /// out-of-bag. `None` when `i` is in-bag everywhere.
    pub fn gap_train_row(&self, i: usize) -> Option<Vec<f64>> {
        let mut w = vec![0.0; self.n_train()];
        let mut used = 0usize;
        for (t, boot) in self.forest.bootstraps().iter().enumerate() {
            if boot.is_oob(i) {
                self.gap_accumulate(&mut w, t, self.trees[t].leaf_of[i]);
                used += 1;
            }
        }
        if used == 0 {
            return None;
        }
        let s = used as f64;
        w.iter_mut().for_each(|v| *v /= s);
        Some(w)
    }

    /// RF-GAP row of a new point, treated as out-of-bag in every tree.
    pub fn gap_test_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let leaves = self.leaves_of(x)?;
        let mut w = vec![0.0; self.n_train()];
        for (t, &l) in leaves.iter().enumerate() {
            self.gap_accumulate(&mut w, t, l);
        }
        let k = leaves.len() as f64;
        w.iter_mut().for_each(|v| *v /= k);
        Ok(w)
    }

    /// Unnormalized original proximity: fraction of trees where `x` and
    /// each training point share a leaf.
    pub fn original_raw_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let leaves = self.leaves_of(x)?;
        let mut counts = vec![0u32; self.n_train()];
        for (idx, &l) in self.trees.iter().zip(&leaves) {
            for &j in &idx.members[l] {
                counts[j] += 1;
            }
        }
        let k = self.trees.len() as f64;
        Ok(counts.into_iter().map(|c| f64::from(c) / k).collect())
    }

    /// Unnormalized OOB proximity of training point `i`: over trees where
    /// `i` is out-of-bag, the share of trees with `j` also out-of-bag in
    /// which the two share a leaf.
    pub fn oob_train_raw_row(&self, i: usize) -> Vec<f64> {
        let n = self.n_train();
        let mut num = vec![0u32; n];
        let mut den = vec![0u32; n];
        for (t, boot) in self.forest.bootstraps().iter().enumerate() {
            if !boot.is_oob(i) {
                continue;
            }
            for &j in boot.oob_indices() {
                den[j] += 1;
            }
            let idx = &self.trees[t];
            for &j in &idx.oob_members[idx.leaf_of[i]] {
                num[j] += 1;
            }
        }
        ratio(&num, &den)
    }

    /// Unnormalized OOB proximity of a new point, treated as out-of-bag in
    /// every tree.
    pub fn oob_test_raw_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let leaves = self.leaves_of(x)?;
        let mut num = vec![0u32; self.n_train()];
        for (idx, &l) in self.trees.iter().zip(&leaves) {
            for &j in &idx.oob_members[l] {
                num[j] += 1;
            }
        }
        Ok(ratio(&num, &self.oob_count))
    }

    /// Normalized weight row of training point `i` under train-mode rules.
    pub fn train_row(&self, scheme: Scheme, i: usize, data: &Dataset) -> Option<Vec<f64>> {
        match scheme {
            Scheme::Qrf => self.qrf_row(data.row(i)).ok(),
            Scheme::Gap => self.gap_train_row(i),
            Scheme::Original => self.original_raw_row(data.row(i)).ok().and_then(normalize),
            Scheme::Oob => normalize(self.oob_train_raw_row(i)),
        }
    }

    /// Normalized weight row of a new point.
    pub fn test_row(&self, scheme: Scheme, x: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(match scheme {
            Scheme::Qrf => Some(self.qrf_row(x)?),
            Scheme::Gap => Some(self.gap_test_row(x)?),
            Scheme::Original => normalize(self.original_raw_row(x)?),
            Scheme::Oob => normalize(self.oob_test_raw_row(x)?),
        })
    }

    /// Dense weights for all training points as queries.
    pub fn train_matrix(&self, scheme: Scheme, data: &Dataset) -> WeightMatrix {
        let rows = (0..self.n_train())
            .into_par_iter()
            .map(|i| self.train_row(scheme, i, data))
            .collect();
        WeightMatrix {
            scheme,
            mode: Mode::Train,
            n_train: self.n_train(),
            rows,
        }
    }

    /// Dense weights for new query points.
    pub fn test_matrix(&self, scheme: Scheme, queries: &[&[f64]]) -> Result<WeightMatrix> {
        let rows = queries
            .par_iter()
            .map(|x| self.test_row(scheme, x))
            .collect::<Result<_>>()?;
        Ok(WeightMatrix {
            scheme,
            mode: Mode::Test,
            n_train: self.n_train(),
            rows,
        })
    }
}

fn ratio(num: &[u32], den: &[u32]) -> Vec<f64> {
    num.iter()
        .zip(den)
        .map(|(&a, &b)| if b == 0 { 0.0 } else { f64::from(a) / f64::from(b) })
        .collect()
}

/// Scales a nonnegative row to sum one; `None` if it is all zero.
pub fn normalize(mut row: Vec<f64>) -> Option<Vec<f64>> {
    let s: f64 = row.iter().sum();
    if s <= 0.0 {
        return None;
    }
    row.iter_mut().for_each(|v| *v /= s);
    Some(row)
}

/// QRF weight row of a single point.
pub fn qrf_weights(forest: &Forest, data: &Dataset, x: &[f64]) -> Result<Vec<f64>> {
    Proximity::new(forest, data)?.qrf_row(x)
}

/// RF-GAP proximities among training points.
pub fn gap_train(forest: &Forest, data: &Dataset) -> Result<WeightMatrix> {
    Ok(Proximity::new(forest, data)?.train_matrix(Scheme::Gap, data))
}

/// RF-GAP weights for new points.
pub fn gap_test(forest: &Forest, data: &Dataset, queries: &[&[f64]]) -> Result<WeightMatrix> {
    Proximity::new(forest, data)?.test_matrix(Scheme::Gap, queries)
}

/// Original proximity weights for arbitrary query points, normalized per row.
pub fn original_proximity(forest: &Forest, data: &Dataset, queries: &[&[f64]]) -> Result<WeightMatrix> {
    Proximity::new(forest, data)?.test_matrix(Scheme::Original, queries)
}

/// OOB proximity weights. In train mode the queries are the training rows
/// and `queries` is ignored.
pub fn oob_proximity(forest: &Forest, data: &Dataset, queries: &[&[f64]], mode: Mode) -> Result<WeightMatrix> {
    let prox = Proximity::new(forest, data)?;
    match mode {
        Mode::Train => Ok(prox.train_matrix(Scheme::Oob, data)),
        Mode::Test => prox.test_matrix(Scheme::Oob, queries),
    }
}
