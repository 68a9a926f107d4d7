use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_benchmark, BenchConfig};
use crate::dataset::{kfold_split, Dataset};
use crate::error::{Error, Result};
use crate::forest::{Criterion, TreeParams};
use crate::proximity::Scheme;

/// Candidate hyperparameters. Every combination is evaluated, enumerated
/// with `n_trees` outermost and `min_samples_split` innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub criterion: Criterion,
    /// Accept candidates outside the default ranges.
    pub allow_out_of_range: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_trees: vec![50, 100, 200, 500, 1000],
            max_depth: vec![2, 4, 8, 12, 16, 20],
            min_samples_leaf: vec![2, 4, 8],
            min_samples_split: vec![2, 5, 10],
            criterion: Criterion::Mse,
            allow_out_of_range: false,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let lists: [(&str, &[usize], usize, usize); 4] = [
            ("n_trees", &self.n_trees, 50, 1000),
            ("max_depth", &self.max_depth, 2, 20),
            ("min_samples_leaf", &self.min_samples_leaf, 2, 8),
            ("min_samples_split", &self.min_samples_split, 2, 10),
        ];
        for (name, values, lo, hi) in lists {
            if values.is_empty() {
                return Err(Error::InvalidParam(format!("grid: {name} has no candidates")));
            }
            if !self.allow_out_of_range {
                if let Some(v) = values.iter().find(|&&v| v < lo || v > hi) {
                    return Err(Error::InvalidParam(format!(
                        "grid: {name} candidate {v} outside {lo}..={hi}"
                    )));
                }
            }
        }
        self.criterion.validate()
    }

    /// All configurations in enumeration order.
    pub fn configs(&self) -> Vec<(usize, TreeParams)> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &min_samples_leaf in &self.min_samples_leaf {
                    for &min_samples_split in &self.min_samples_split {
                        out.push((
                            n_trees,
                            TreeParams {
                                max_depth,
                                min_samples_split,
                                min_samples_leaf,
                                max_features: None,
                                criterion: self.criterion,
                            },
                        ));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Mean pinball loss over the configured levels.
    #[default]
    MeanPinball,
    /// MSE of the conditional median.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub n_trees: usize,
    pub params: TreeParams,
    /// `None` when the configuration could not be evaluated on this data.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: usize,
    pub objective: Objective,
    pub scheme: Scheme,
    pub n_folds: usize,
    pub seed: u64,
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }
}

/// Exhaustive k-fold search. The weighting scheme and levels come from
/// `base` (first scheme only). Ties go to the earliest configuration.
pub fn grid_search(
    data: &Dataset,
    grid: &GridSpec,
    k: usize,
    seed: u64,
    objective: Objective,
    base: &BenchConfig,
) -> Result<GridResult> {
    grid.validate()?;
    if k < 2 {
        return Err(Error::InvalidParam("grid search needs at least 2 folds".into()));
    }
    let scheme = *base.schemes.first().unwrap_or(&Scheme::Qrf);
    let plan = kfold_split(data.n_rows(), k, seed)?;
    let rows: Vec<GridRow> = grid
        .configs()
        .into_par_iter()
        .map(|(n_trees, params)| {
            let cfg = BenchConfig {
                params,
                n_trees,
                seed,
                schemes: vec![scheme],
                ..base.clone()
            };
            let score = run_benchmark(data, &plan, &cfg).ok().map(|r| match objective {
                Objective::MeanPinball => r[0].pinball.iter().sum::<f64>() / r[0].pinball.len() as f64,
                Objective::Mse => r[0].mse,
            });
            GridRow { n_trees, params, score }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(s) = row.score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    let (best, _) =
        best.ok_or_else(|| Error::InvalidData("no grid configuration could be evaluated on this dataset".into()))?;
    Ok(GridResult {
        best,
        objective,
        scheme,
        n_folds: k,
        seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let y = rows.iter().map(|r| r[0] * 2.0 + r[1]).collect();
        Dataset::new(rows, y, vec!["a".into(), "b".into()]).unwrap()
    }

    fn small(depths: Vec<usize>) -> GridSpec {
        GridSpec {
            n_trees: vec![50],
            max_depth: depths,
            min_samples_leaf: vec![2],
            min_samples_split: vec![2],
            ..GridSpec::default()
        }
    }

    #[test]
    fn enumeration_order() {
        let g = GridSpec::default();
        let c = g.configs();
        assert_eq!(c.len(), 5 * 6 * 3 * 3);
        assert_eq!(c[0].0, 50);
        assert_eq!(
            (c[0].1.max_depth, c[0].1.min_samples_leaf, c[0].1.min_samples_split),
            (2, 2, 2)
        );
        assert_eq!(c[1].1.min_samples_split, 5);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn range_checks() {
        assert!(small(vec![]).validate().is_err());
        assert!(small(vec![30]).validate().is_err());
        let g = GridSpec {
            allow_out_of_range: true,
            ..small(vec![30])
        };
        assert!(g.validate().is_ok());
    }

    #[test]
    fn picks_strictly_better_config() {
        // A depth-2 tree cannot follow a linear trend as well as depth 8.
        let r = grid_search(
            &data(),
            &small(vec![2, 8]),
            4,
            1,
            Objective::Mse,
            &BenchConfig::default(),
        )
        .unwrap();
        let (a, b) = (r.rows[0].score.unwrap(), r.rows[1].score.unwrap());
        assert!(b < a);
        assert_eq!(r.best, 1);
    }

    #[test]
    fn duplicate_configs_pick_first() {
        let r = grid_search(
            &data(),
            &small(vec![4, 4]),
            4,
            1,
            Objective::MeanPinball,
            &BenchConfig::default(),
        )
        .unwrap();
        assert_eq!(r.rows[0].score, r.rows[1].score);
        assert_eq!(r.best, 0);
    }

    #[test]
    fn rejects_single_fold() {
        assert!(grid_search(&data(), &small(vec![4]), 1, 1, Objective::Mse, &BenchConfig::default()).is_err());
    }
}
