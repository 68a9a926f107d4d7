//! Regression random forest grown on bootstrap samples.
//!
//! Besides the trees themselves, a [`Forest`] keeps every tree's bootstrap
//! multiplicities and every leaf's in-bag membership, which the proximity
//! weights need.

mod bootstrap;
mod split;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_sample, BootstrapRecord};
pub use split::{best_split, leaf_value, node_impurity, Criterion, Sample, Split};
pub use tree::{fit_tree, Leaf, LeafId, Node, Tree};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(p))`.
    pub max_features: Option<usize>,
    pub criterion: Criterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            criterion: Criterion::Mse,
        }
    }
}

impl TreeParams {
    pub fn resolved_max_features(&self, p: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1))
            .clamp(1, p.max(1))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidParam("max_depth must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParam("min_samples_leaf must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParam("min_samples_split must be at least 2".into()));
        }
        if let Some(m) = self.max_features {
            if m == 0 || m > p {
                return Err(Error::InvalidParam(format!("max_features {m} outside 1..={p}")));
            }
        }
        self.criterion.validate()
    }
}

/// Random stream for tree `t`: ChaCha8 keyed by the master seed, with the
/// tree index as the stream id. Tree `t` therefore sees the same random
/// numbers regardless of how trees are scheduled across threads.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    bootstraps: Vec<BootstrapRecord>,
    params: TreeParams,
    seed: u64,
    n_train: usize,
    n_features: usize,
}

impl Forest {
    /// Fits `n_trees` (bootstrap, tree) pairs. Trees are grown in parallel;
    /// the result depends only on the data, the parameters and the seed.
    pub fn fit(data: &Dataset, params: &TreeParams, n_trees: usize, seed: u64) -> Result<Forest> {
        if n_trees == 0 {
            return Err(Error::InvalidParam("n_trees must be at least 1".into()));
        }
        params.validate(data.n_features())?;
        let n = data.n_rows();
        if n < params.min_samples_leaf {
            return Err(Error::InvalidData(format!(
                "{n} rows cannot satisfy min_samples_leaf={}",
                params.min_samples_leaf
            )));
        }
        let pairs: Vec<(Tree, BootstrapRecord)> = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let record = bootstrap_sample(n, &mut rng)?;
                let tree = fit_tree(data, &record, params, &mut rng);
                Ok((tree, record))
            })
            .collect::<Result<_>>()?;
        let (trees, bootstraps) = pairs.into_iter().unzip();
        Ok(Forest {
            trees,
            bootstraps,
            params: *params,
            seed,
            n_train: n,
            n_features: data.n_features(),
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn bootstraps(&self) -> &[BootstrapRecord] {
        &self.bootstraps
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Checks that `data` has the shape this forest was trained on.
    pub(crate) fn check_training(&self, data: &Dataset) -> Result<()> {
        if data.n_rows() != self.n_train {
            return Err(Error::LengthMismatch {
                left: data.n_rows(),
                right: self.n_train,
            });
        }
        if data.n_features() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: data.n_features(),
            });
        }
        Ok(())
    }

    /// The leaf reached by `x` in every tree.
    pub fn leaf_assign(&self, x: &[f64]) -> Result<Vec<LeafId>> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| t.leaf_of(x)).collect())
    }

    /// Average of the trees' leaf predictions.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Out-of-bag prediction for every training row: the average leaf
    /// prediction over trees where the row was not drawn. `None` for rows
    /// that are in-bag in every tree.
    pub fn predict_oob(&self, data: &Dataset) -> Result<Vec<Option<f64>>> {
        self.check_training(data)?;
        Ok((0..data.n_rows())
            .map(|i| {
                let x = data.row(i);
                let (sum, count) = self
                    .trees
                    .iter()
                    .zip(&self.bootstraps)
                    .filter(|(_, b)| b.is_oob(i))
                    .fold((0.0, 0usize), |(s, c), (t, _)| (s + t.predict(x), c + 1));
                (count > 0).then(|| sum / count as f64)
            })
            .collect())
    }

    /// Validates a forest read from disk.
    pub(crate) fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.trees.len() != self.bootstraps.len() {
            return Err(Error::Model("tree and bootstrap counts disagree".into()));
        }
        self.params
            .validate(self.n_features)
            .map_err(|e| Error::Model(e.to_string()))?;
        for (t, (tree, boot)) in self.trees.iter().zip(&self.bootstraps).enumerate() {
            if boot.len() != self.n_train {
                return Err(Error::Model(format!("bootstrap {t} has wrong length")));
            }
            let drawn: u64 = boot.multiplicity().iter().map(|&c| u64::from(c)).sum();
            if drawn != self.n_train as u64 {
                return Err(Error::Model(format!("bootstrap {t} does not sum to n")));
            }
            tree.validate(self.n_features, self.n_train)
                .map_err(|e| Error::Model(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }
}
