//! Split search for regression trees grown on bootstrap samples.
//!
//! Every in-bag point carries its bootstrap multiplicity as an integer
//! weight. Node impurity is the weighted *total* loss of the node around
//! its criterion-optimal constant (sum of squared deviations from the mean,
//! absolute deviations from the median, or pinball loss around the
//! α-quantile), so the cost of a split is simply left cost plus right cost.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Split quality criterion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Mse,
    Mae,
    Pinball {
        alpha: f64,
    },
}

impl Criterion {
    pub fn validate(self) -> Result<()> {
        match self {
            Criterion::Pinball { alpha } if !(alpha > 0.0 && alpha < 1.0) => Err(Error::AlphaOutOfRange(alpha)),
            _ => Ok(()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Mse => "mse",
            Criterion::Mae => "mae",
            Criterion::Pinball { .. } => "pinball",
        }
    }
}

/// An in-bag point and its bootstrap multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub index: usize,
    pub weight: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

fn total_weight(samples: &[Sample]) -> u64 {
    samples.iter().map(|s| u64::from(s.weight)).sum()
}

/// Smallest target value whose cumulative weight reaches `alpha` of the total.
pub(crate) fn weighted_quantile(samples: &[Sample], target: &[f64], alpha: f64) -> f64 {
    let mut pairs: Vec<(f64, u32)> = samples.iter().map(|s| (target[s.index], s.weight)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let goal = alpha * total_weight(samples) as f64;
    let mut cum = 0u64;
    for &(y, w) in &pairs {
        cum += u64::from(w);
        if cum as f64 >= goal {
            return y;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

/// The constant a leaf predicts under `criterion`.
pub fn leaf_value(samples: &[Sample], target: &[f64], criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Mse => {
            let w = total_weight(samples) as f64;
            samples
                .iter()
                .map(|s| f64::from(s.weight) * target[s.index])
                .sum::<f64>()
                / w
        }
        Criterion::Mae => weighted_quantile(samples, target, 0.5),
        Criterion::Pinball { alpha } => weighted_quantile(samples, target, alpha),
    }
}

/// Weighted total loss of a node around its optimal constant.
pub fn node_impurity(samples: &[Sample], target: &[f64], criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Mse => {
            let mean = leaf_value(samples, target, Criterion::Mse);
            samples
                .iter()
                .map(|s| f64::from(s.weight) * (target[s.index] - mean).powi(2))
                .sum()
        }
        Criterion::Mae => {
            let med = weighted_quantile(samples, target, 0.5);
            samples
                .iter()
                .map(|s| f64::from(s.weight) * (target[s.index] - med).abs())
                .sum()
        }
        Criterion::Pinball { alpha } => {
            let q = weighted_quantile(samples, target, alpha);
            samples
                .iter()
                .map(|s| {
                    let d = target[s.index] - q;
                    f64::from(s.weight) * if d > 0.0 { alpha * d } else { (alpha - 1.0) * d }
                })
                .sum()
        }
    }
}

/// Fenwick tree over target ranks holding integer weights and weighted sums.
struct RankTree {
    weight: Vec<u64>,
    sum: Vec<f64>,
    total_weight: u64,
    total_sum: f64,
}

impl RankTree {
    fn new(size: usize) -> Self {
        RankTree {
            weight: vec![0; size + 1],
            sum: vec![0.0; size + 1],
            total_weight: 0,
            total_sum: 0.0,
        }
    }

    fn add(&mut self, rank: usize, w: u64, ws: f64, sign: bool) {
        let mut i = rank + 1;
        while i < self.weight.len() {
            if sign {
                self.weight[i] += w;
                self.sum[i] += ws;
            } else {
                self.weight[i] -= w;
                self.sum[i] -= ws;
            }
            i += i & i.wrapping_neg();
        }
        if sign {
            self.total_weight += w;
            self.total_sum += ws;
        } else {
            self.total_weight -= w;
            self.total_sum -= ws;
        }
    }

    /// Smallest rank whose prefix weight is `>= goal`, with the prefix
    /// weight and weighted sum up to and including it.
    fn lower_bound(&self, goal: f64) -> (usize, u64, f64) {
        let size = self.weight.len() - 1;
        let mut pos = 0;
        let mut acc_w = 0u64;
        let mut acc_s = 0.0;
        let mut step = size.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= size && ((acc_w + self.weight[next]) as f64) < goal {
                pos = next;
                acc_w += self.weight[next];
                acc_s += self.sum[next];
            }
            step >>= 1;
        }
        // `pos` is now the count of ranks strictly below the answer.
        let mut w = acc_w;
        let mut s = acc_s;
        let (rw, rs) = self.point(pos);
        w += rw;
        s += rs;
        (pos, w, s)
    }

    fn point(&self, rank: usize) -> (u64, f64) {
        let (w_hi, s_hi) = self.prefix(rank + 1);
        let (w_lo, s_lo) = self.prefix(rank);
        (w_hi - w_lo, s_hi - s_lo)
    }

    fn prefix(&self, mut len: usize) -> (u64, f64) {
        let mut w = 0;
        let mut s = 0.0;
        while len > 0 {
            w += self.weight[len];
            s += self.sum[len];
            len &= len - 1;
        }
        (w, s)
    }

    /// Pinball loss (at `alpha`) of the contents around their α-quantile.
    fn pinball_cost(&self, values: &[f64], alpha: f64) -> f64 {
        if self.total_weight == 0 {
            return 0.0;
        }
        let (rank, w_le, s_le) = self.lower_bound(alpha * self.total_weight as f64);
        let q = values[rank];
        let w_gt = (self.total_weight - w_le) as f64;
        let s_gt = self.total_sum - s_le;
        let cost = alpha * (s_gt - q * w_gt) + (1.0 - alpha) * (q * w_le as f64 - s_le);
        cost.max(0.0)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    // Adjacent floats: the midpoint can round up to `hi`, which would send
    // `hi` left as well.
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Finds the split of `samples` that minimizes the summed child impurity
/// over `candidate_features`.
///
/// Thresholds are midpoints between consecutive distinct feature values and
/// points with `x <= threshold` go left. Both children must keep at least
/// `min_samples_leaf` distinct points. Ties resolve to the lowest feature
/// index, then the lowest threshold. Returns `None` when no admissible split
/// lowers the impurity.
pub fn best_split(
    samples: &[Sample],
    data: &Dataset,
    criterion: Criterion,
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    let m = samples.len();
    let min_leaf = min_samples_leaf.max(1);
    if m < 2 * min_leaf {
        return None;
    }
    let target = data.target();
    let parent = node_impurity(samples, target, criterion);
    if parent <= 0.0 {
        return None;
    }

    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut scanner = Scanner::new(samples, target, criterion);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<Sample> = samples.to_vec();
    for &feature in &features {
        order.sort_by(|a, b| {
            data.value(a.index, feature)
                .total_cmp(&data.value(b.index, feature))
                .then(a.index.cmp(&b.index))
        });
        scanner.reset();
        for pos in 0..m - 1 {
            scanner.move_left(order[pos]);
            let n_left = pos + 1;
            if n_left < min_leaf {
                continue;
            }
            if m - n_left < min_leaf {
                break;
            }
            let x_lo = data.value(order[pos].index, feature);
            let x_hi = data.value(order[pos + 1].index, feature);
            if x_lo == x_hi {
                continue;
            }
            let cost = scanner.cost();
            if best.is_none_or(|(c, _, _)| cost < c) {
                best = Some((cost, feature, midpoint(x_lo, x_hi)));
            }
        }
    }

    let (cost, feature, threshold) = best?;
    let decrease = parent - cost;
    if decrease > parent * 1e-12 && decrease > 0.0 {
        Some(Split {
            feature,
            threshold,
            impurity_decrease: decrease,
        })
    } else {
        None
    }
}

/// Incremental left/right cost evaluation while sweeping a sorted order.
enum Scanner<'a> {
    Squared {
        target: &'a [f64],
        center: f64,
        left: [f64; 3],
        total: [f64; 3],
    },
    Quantile {
        alpha: f64,
        scale: f64,
        values: Vec<f64>,
        target: &'a [f64],
        center: f64,
        samples: &'a [Sample],
        left: RankTree,
        right: RankTree,
    },
}

impl<'a> Scanner<'a> {
    fn new(samples: &'a [Sample], target: &'a [f64], criterion: Criterion) -> Self {
        match criterion {
            Criterion::Mse => {
                let center = leaf_value(samples, target, Criterion::Mse);
                let mut total = [0.0; 3];
                for s in samples {
                    let w = f64::from(s.weight);
                    let z = target[s.index] - center;
                    total[0] += w;
                    total[1] += w * z;
                    total[2] += w * z * z;
                }
                Scanner::Squared {
                    target,
                    center,
                    left: [0.0; 3],
                    total,
                }
            }
            Criterion::Mae | Criterion::Pinball { .. } => {
                let (alpha, scale) = match criterion {
                    Criterion::Pinball { alpha } => (alpha, 1.0),
                    _ => (0.5, 2.0),
                };
                let center = samples.iter().map(|s| target[s.index]).fold(f64::INFINITY, f64::min);
                let mut values: Vec<f64> = samples.iter().map(|s| target[s.index] - center).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                let k = values.len();
                Scanner::Quantile {
                    alpha,
                    scale,
                    values,
                    target,
                    center,
                    samples,
                    left: RankTree::new(k),
                    right: RankTree::new(k),
                }
            }
        }
    }

    fn reset(&mut self) {
        match self {
            Scanner::Squared { left, .. } => *left = [0.0; 3],
            Scanner::Quantile {
                values,
                target,
                center,
                samples,
                left,
                right,
                ..
            } => {
                *left = RankTree::new(values.len());
                *right = RankTree::new(values.len());
                for s in samples.iter() {
                    let z = target[s.index] - *center;
                    let r = values.partition_point(|&v| v < z);
                    right.add(r, u64::from(s.weight), f64::from(s.weight) * z, true);
                }
            }
        }
    }

    fn move_left(&mut self, s: Sample) {
        match self {
            Scanner::Squared {
                target, center, left, ..
            } => {
                let w = f64::from(s.weight);
                let z = target[s.index] - *center;
                left[0] += w;
                left[1] += w * z;
                left[2] += w * z * z;
            }
            Scanner::Quantile {
                values,
                target,
                center,
                left,
                right,
                ..
            } => {
                let z = target[s.index] - *center;
                let r = values.partition_point(|&v| v < z);
                let w = u64::from(s.weight);
                left.add(r, w, f64::from(s.weight) * z, true);
                right.add(r, w, f64::from(s.weight) * z, false);
            }
        }
    }

    fn cost(&self) -> f64 {
        match self {
            Scanner::Squared { left, total, .. } => {
                let sse = |w: f64, s1: f64, s2: f64| if w > 0.0 { (s2 - s1 * s1 / w).max(0.0) } else { 0.0 };
                sse(left[0], left[1], left[2]) + sse(total[0] - left[0], total[1] - left[1], total[2] - left[2])
            }
            Scanner::Quantile {
                alpha,
                scale,
                values,
                left,
                right,
                ..
            } => scale * (left.pinball_cost(values, *alpha) + right.pinball_cost(values, *alpha)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys.to_vec(), vec!["x".into()]).unwrap()
    }

    fn unit(n: usize) -> Vec<Sample> {
        (0..n).map(|index| Sample { index, weight: 1 }).collect()
    }

    /// Exhaustive oracle: evaluates every threshold with direct impurity sums.
    fn brute_force(
        samples: &[Sample],
        data: &Dataset,
        criterion: Criterion,
        min_leaf: usize,
    ) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..data.n_features() {
            let mut xs: Vec<f64> = samples.iter().map(|s| data.value(s.index, f)).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            for w in xs.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<Sample>, Vec<Sample>) = samples.iter().partition(|s| data.value(s.index, f) <= t);
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                let c = node_impurity(&l, data.target(), criterion) + node_impurity(&r, data.target(), criterion);
                if best.is_none_or(|b| c < b.2 - 1e-9) {
                    best = Some((f, t, c));
                }
            }
        }
        best
    }

    #[test]
    fn separable_mse() {
        let d = column(&[0.0, 1.0, 2.0, 3.0], &[0.0, 0.0, 10.0, 10.0]);
        let s = best_split(&unit(4), &d, Criterion::Mse, &[0], 1).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 1.5);
        assert_eq!(s.impurity_decrease, 100.0);
    }

    #[test]
    fn constant_target_has_no_split() {
        let d = column(&[0.0, 1.0, 2.0, 3.0], &[0.1, 0.1, 0.1, 0.1]);
        for c in [Criterion::Mse, Criterion::Mae, Criterion::Pinball { alpha: 0.9 }] {
            assert!(best_split(&unit(4), &d, c, &[0], 1).is_none());
        }
    }

    #[test]
    fn mae_isolates_outlier() {
        // Thresholds 0.5 and 1.5: {0}|{0,100} costs 0 + 100, {0,0}|{100}
        // costs 0 + 0.
        let d = column(&[0.0, 1.0, 2.0], &[0.0, 0.0, 100.0]);
        let s = best_split(&unit(3), &d, Criterion::Mae, &[0], 1).unwrap();
        assert_eq!(s.threshold, 1.5);
        assert_eq!(s.impurity_decrease, 100.0);
        let oracle = brute_force(&unit(3), &d, Criterion::Mae, 1).unwrap();
        assert_eq!(oracle.1, 1.5);
    }

    #[test]
    fn min_leaf_blocks_split() {
        let d = column(&[0.0, 1.0, 2.0], &[0.0, 0.0, 100.0]);
        let s = best_split(&unit(3), &d, Criterion::Mse, &[0], 2);
        assert!(s.is_none());
    }

    #[test]
    fn ties_pick_lowest_feature() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let d = Dataset::new(rows, vec![0.0, 0.0, 5.0, 5.0], vec!["a".into(), "b".into()]).unwrap();
        let s = best_split(&unit(4), &d, Criterion::Mse, &[1, 0], 1).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn weighted_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for trial in 0..200 {
            let n = rng.gen_range(4..25);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.gen_range(0..6) as f64, rng.gen::<f64>()])
                .collect();
            let ys: Vec<f64> = (0..n).map(|_| (rng.gen_range(-20..20) as f64) * 0.5).collect();
            let d = Dataset::new(rows, ys, vec!["a".into(), "b".into()]).unwrap();
            let samples: Vec<Sample> = (0..n)
                .map(|index| Sample {
                    index,
                    weight: rng.gen_range(1..4),
                })
                .collect();
            let criterion = match trial % 3 {
                0 => Criterion::Mse,
                1 => Criterion::Mae,
                _ => Criterion::Pinball { alpha: 0.8 },
            };
            let min_leaf = 1 + trial % 3;
            let fast = best_split(&samples, &d, criterion, &[0, 1], min_leaf);
            let slow = brute_force(&samples, &d, criterion, min_leaf);
            let parent = node_impurity(&samples, d.target(), criterion);
            match (fast, slow) {
                (Some(f), Some(s)) => {
                    assert!(
                        (parent - f.impurity_decrease - s.2).abs() < 1e-9,
                        "trial {trial}: fast cost {} vs oracle {}",
                        parent - f.impurity_decrease,
                        s.2
                    );
                }
                (None, Some(s)) => assert!(parent - s.2 <= 1e-9, "trial {trial}: missed split"),
                (Some(f), None) => panic!("trial {trial}: oracle found nothing, got {f:?}"),
                (None, None) => {}
            }
        }
    }

    #[test]
    fn quantile_leaf_values() {
        let ys = [1.0, 2.0, 3.0, 4.0];
        let samples = vec![
            Sample { index: 0, weight: 1 },
            Sample { index: 1, weight: 1 },
            Sample { index: 2, weight: 2 },
            Sample { index: 3, weight: 1 },
        ];
        assert_eq!(leaf_value(&samples, &ys, Criterion::Mse), 13.0 / 5.0);
        assert_eq!(leaf_value(&samples, &ys, Criterion::Mae), 3.0);
        assert_eq!(leaf_value(&samples, &ys, Criterion::Pinball { alpha: 0.2 }), 1.0);
        assert_eq!(leaf_value(&samples, &ys, Criterion::Pinball { alpha: 0.9 }), 4.0);
    }

    #[test]
    fn midpoint_of_adjacent_floats_stays_below() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo <= t && t < hi);
    }
}
