//! Cross-validated evaluation of the weighting schemes: benchmark tables,
//! grid search, split-criterion study and interval reports.

mod grid;
mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{grid_search, GridResult, GridRow, GridSpec, Objective};
pub use report::{
    emit_report, render_criterion_table, render_grid_result, render_interval_report, render_reports, write_file,
    ReportFormat,
};

use crate::dataset::{kfold_split, Dataset, SplitPlan, SplitScheme};
use crate::error::{Error, Result};
use crate::forest::{Criterion, Forest, TreeParams};
use crate::metrics;
use crate::proximity::{Proximity, Scheme};
use crate::quantile::{check_alphas, WeightedEmpirical, ALPHA_GRID};

/// How per-fold metrics are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    Median,
}

impl Aggregation {
    /// Median for sliding-window plans, mean otherwise.
    pub fn for_plan(plan: &SplitPlan) -> Self {
        match plan.scheme {
            SplitScheme::SlidingWindow => Aggregation::Median,
            _ => Aggregation::Mean,
        }
    }

    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregation::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let m = v.len();
                if m % 2 == 1 {
                    v[m / 2]
                } else {
                    (v[m / 2 - 1] + v[m / 2]) / 2.0
                }
            }
        }
    }
}

/// Lower and upper quantile levels of a central interval, e.g. 0.95 gives
/// (0.025, 0.975).
pub fn interval_levels(level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParam(format!("interval level {level} outside (0, 1)")));
    }
    let round = |v: f64| (v * 1e12).round() / 1e12;
    Ok((round((1.0 - level) / 2.0), round((1.0 + level) / 2.0)))
}

/// Settings shared by every cross-validated evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dataset: String,
    pub params: TreeParams,
    pub n_trees: usize,
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    pub alphas: Vec<f64>,
    /// Central interval level used for coverage and width statistics.
    pub interval_level: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dataset: "data".into(),
            params: TreeParams::default(),
            n_trees: 100,
            seed: 42,
            schemes: Scheme::ALL.to_vec(),
            alphas: ALPHA_GRID.to_vec(),
            interval_level: 0.95,
        }
    }
}

impl BenchConfig {
    /// Requested levels plus the median and the interval bounds, sorted.
    fn eval_levels(&self) -> Result<(Vec<f64>, f64, f64)> {
        check_alphas(&self.alphas)?;
        if self.schemes.is_empty() {
            return Err(Error::InvalidParam("no weighting schemes selected".into()));
        }
        let (lo, hi) = interval_levels(self.interval_level)?;
        let mut levels = self.alphas.clone();
        levels.extend([0.5, lo, hi]);
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        Ok((levels, lo, hi))
    }
}

/// Held-out prediction for one test row under one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePrediction {
    /// Row index in the full dataset.
    pub index: usize,
    pub fold: usize,
    pub y: f64,
    /// Quantiles at the evaluation levels; `None` for undefined weight rows.
    pub quantiles: Option<Vec<f64>>,
}

/// Held-out predictions of every scheme, fold by fold.
#[derive(Debug, Clone)]
pub struct CvPredictions {
    pub levels: Vec<f64>,
    /// `[scheme][fold]` lists of predictions, schemes in config order.
    pub per_scheme: Vec<Vec<Vec<SamplePrediction>>>,
}

/// Fits one forest per fold and predicts every test row with every scheme.
/// Folds run in parallel; output order is fixed.
pub fn cross_validate(data: &Dataset, plan: &SplitPlan, cfg: &BenchConfig) -> Result<CvPredictions> {
    let (levels, _, _) = cfg.eval_levels()?;
    if plan.folds.is_empty() {
        return Err(Error::InvalidParam("split plan has no folds".into()));
    }
    let per_fold: Vec<Vec<Vec<SamplePrediction>>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let train = data.select(&fold.train)?;
            let forest = Forest::fit(&train, &cfg.params, cfg.n_trees, cfg.seed)?;
            let prox = Proximity::new(&forest, &train)?;
            cfg.schemes
                .iter()
                .map(|&scheme| {
                    fold.test
                        .par_iter()
                        .map(|&i| {
                            let quantiles = match prox.test_row(scheme, data.row(i))? {
                                Some(w) => Some(WeightedEmpirical::new(&w, train.target())?.quantiles(&levels)?.values),
                                None => None,
                            };
                            Ok(SamplePrediction {
                                index: i,
                                fold: f,
                                y: data.target()[i],
                                quantiles,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // Transpose [fold][scheme] into [scheme][fold].
    let mut per_scheme: Vec<Vec<Vec<SamplePrediction>>> = vec![Vec::with_capacity(per_fold.len()); cfg.schemes.len()];
    for fold in per_fold {
        for (s, preds) in fold.into_iter().enumerate() {
            per_scheme[s].push(preds);
        }
    }
    Ok(CvPredictions { levels, per_scheme })
}

/// Cross-validated evaluation of one weighting scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub scheme: Scheme,
    pub split: SplitScheme,
    pub n_folds: usize,
    pub seed: u64,
    pub n_trees: usize,
    pub params: TreeParams,
    pub aggregation: Aggregation,
    pub alphas: Vec<f64>,
    /// Aggregated mean pinball loss per level in `alphas`.
    pub pinball: Vec<f64>,
    /// MSE of the conditional median.
    pub mse: f64,
    /// MAPE (fraction) of the conditional median; absent when a true value
    /// is zero.
    pub mape: Option<f64>,
    pub interval: (f64, f64),
    /// Pooled share of held-out targets inside the interval.
    pub coverage: f64,
    pub mean_width: f64,
    pub median_width: f64,
    /// Held-out rows with a defined weight row.
    pub n_evaluated: usize,
    /// Held-out rows whose weight row was undefined and were skipped.
    pub n_undefined: usize,
}

fn level_index(levels: &[f64], alpha: f64) -> usize {
    levels.iter().position(|&l| l == alpha).expect("level present")
}

/// Runs every configured scheme over the folds of `plan`.
pub fn run_benchmark(data: &Dataset, plan: &SplitPlan, cfg: &BenchConfig) -> Result<Vec<EvalReport>> {
    let (_, lo, hi) = cfg.eval_levels()?;
    let cv = cross_validate(data, plan, cfg)?;
    let aggregation = Aggregation::for_plan(plan);
    let i_med = level_index(&cv.levels, 0.5);
    let i_lo = level_index(&cv.levels, lo);
    let i_hi = level_index(&cv.levels, hi);

    cfg.schemes
        .iter()
        .zip(&cv.per_scheme)
        .map(|(&scheme, folds)| {
            let mut fold_pinball: Vec<Vec<f64>> = vec![Vec::new(); cfg.alphas.len()];
            let mut fold_mse = Vec::new();
            let mut fold_mape = Vec::new();
            let mut mape_defined = true;
            let mut widths = Vec::new();
            let mut inside = 0usize;
            let mut n_undefined = 0usize;

            for preds in folds {
                let defined: Vec<(&SamplePrediction, &Vec<f64>)> = preds
                    .iter()
                    .filter_map(|p| p.quantiles.as_ref().map(|q| (p, q)))
                    .collect();
                n_undefined += preds.len() - defined.len();
                if defined.is_empty() {
                    continue;
                }
                let y: Vec<f64> = defined.iter().map(|(p, _)| p.y).collect();
                for (a, &alpha) in cfg.alphas.iter().enumerate() {
                    let ia = level_index(&cv.levels, alpha);
                    let q: Vec<f64> = defined.iter().map(|(_, q)| q[ia]).collect();
                    fold_pinball[a].push(metrics::pinball_loss(&y, &q, alpha)?);
                }
                let med: Vec<f64> = defined.iter().map(|(_, q)| q[i_med]).collect();
                fold_mse.push(metrics::mse(&y, &med)?);
                match metrics::mape(&y, &med) {
                    Ok(v) => fold_mape.push(v),
                    Err(_) => mape_defined = false,
                }
                for (p, q) in &defined {
                    widths.push(q[i_hi] - q[i_lo]);
                    if q[i_lo] <= p.y && p.y <= q[i_hi] {
                        inside += 1;
                    }
                }
            }
            if widths.is_empty() {
                return Err(Error::Numeric(format!(
                    "scheme {scheme}: no held-out row has defined weights"
                )));
            }
            Ok(EvalReport {
                dataset: cfg.dataset.clone(),
                scheme,
                split: plan.scheme,
                n_folds: plan.folds.len(),
                seed: cfg.seed,
                n_trees: cfg.n_trees,
                params: cfg.params,
                aggregation,
                alphas: cfg.alphas.clone(),
                pinball: fold_pinball.iter().map(|v| aggregation.apply(v)).collect(),
                mse: aggregation.apply(&fold_mse),
                mape: mape_defined.then(|| aggregation.apply(&fold_mape)),
                interval: (lo, hi),
                coverage: inside as f64 / widths.len() as f64,
                mean_width: Aggregation::Mean.apply(&widths),
                median_width: Aggregation::Median.apply(&widths),
                n_evaluated: widths.len(),
                n_undefined,
            })
        })
        .collect()
}

/// Mean pinball loss per (criterion, scheme, level), averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionTable {
    pub dataset: String,
    pub criteria: Vec<Criterion>,
    pub schemes: Vec<Scheme>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_folds: usize,
    /// `mean[c][s][a]`.
    pub mean: Vec<Vec<Vec<f64>>>,
    /// `per_seed[c][seed][s][a]`.
    pub per_seed: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Repeats a k-fold benchmark for every split criterion and seed. Each seed
/// drives both the fold shuffle and the forest.
pub fn criterion_study(
    data: &Dataset,
    base: &BenchConfig,
    criteria: &[Criterion],
    seeds: &[u64],
    k: usize,
) -> Result<CriterionTable> {
    if criteria.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParam("criterion study needs criteria and seeds".into()));
    }
    let mut per_seed = Vec::with_capacity(criteria.len());
    for &criterion in criteria {
        let runs = seeds
            .iter()
            .map(|&seed| {
                let plan = kfold_split(data.n_rows(), k, seed)?;
                let cfg = BenchConfig {
                    params: TreeParams {
                        criterion,
                        ..base.params
                    },
                    seed,
                    ..base.clone()
                };
                let reports = run_benchmark(data, &plan, &cfg)?;
                Ok(reports.into_iter().map(|r| r.pinball).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        per_seed.push(runs);
    }
    let n_s = base.schemes.len();
    let n_a = base.alphas.len();
    let mean = per_seed
        .iter()
        .map(|runs| {
            (0..n_s)
                .map(|s| {
                    (0..n_a)
                        .map(|a| runs.iter().map(|r| r[s][a]).sum::<f64>() / runs.len() as f64)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(CriterionTable {
        dataset: base.dataset.clone(),
        criteria: criteria.to_vec(),
        schemes: base.schemes.clone(),
        alphas: base.alphas.clone(),
        seeds: seeds.to_vec(),
        n_folds: k,
        mean,
        per_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub index: usize,
    pub fold: usize,
    pub y: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    pub inside: bool,
    /// Bounds and target minus the interval midpoint.
    pub lower_centered: f64,
    pub upper_centered: f64,
    pub y_centered: f64,
}

/// Held-out intervals of one scheme sorted by ascending width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub dataset: String,
    pub scheme: Scheme,
    pub level: f64,
    pub interval: (f64, f64),
    pub rows: Vec<IntervalRow>,
    pub coverage: f64,
    pub frac_below: f64,
    pub frac_above: f64,
    pub n_undefined: usize,
}

pub fn interval_report(data: &Dataset, plan: &SplitPlan, cfg: &BenchConfig, scheme: Scheme) -> Result<IntervalReport> {
    let cfg = BenchConfig {
        schemes: vec![scheme],
        ..cfg.clone()
    };
    let (_, lo, hi) = cfg.eval_levels()?;
    let cv = cross_validate(data, plan, &cfg)?;
    let (i_lo, i_hi, i_med) = (
        level_index(&cv.levels, lo),
        level_index(&cv.levels, hi),
        level_index(&cv.levels, 0.5),
    );
    let mut rows = Vec::new();
    let mut n_undefined = 0;
    for p in cv.per_scheme[0].iter().flatten() {
        let Some(q) = &p.quantiles else {
            n_undefined += 1;
            continue;
        };
        let (lower, upper) = (q[i_lo], q[i_hi]);
        let mid = lower + (upper - lower) / 2.0;
        rows.push(IntervalRow {
            index: p.index,
            fold: p.fold,
            y: p.y,
            median: q[i_med],
            lower,
            upper,
            width: upper - lower,
            inside: lower <= p.y && p.y <= upper,
            lower_centered: -(upper - lower) / 2.0,
            upper_centered: (upper - lower) / 2.0,
            y_centered: p.y - mid,
        });
    }
    if rows.is_empty() {
        return Err(Error::Numeric("no held-out row has defined weights".into()));
    }
    rows.sort_by(|a, b| a.width.total_cmp(&b.width).then(a.index.cmp(&b.index)));
    let m = rows.len() as f64;
    let below = rows.iter().filter(|r| r.y < r.lower).count() as f64;
    let above = rows.iter().filter(|r| r.y > r.upper).count() as f64;
    Ok(IntervalReport {
        dataset: cfg.dataset.clone(),
        scheme,
        level: cfg.interval_level,
        interval: (lo, hi),
        coverage: rows.iter().filter(|r| r.inside).count() as f64 / m,
        frac_below: below / m,
        frac_above: above / m,
        rows,
        n_undefined,
    })
}
