//! Weighted empirical distributions built from a weight row, and the
//! quantiles and prediction intervals read off them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::proximity::{Proximity, Scheme};

/// Quantile levels used for evaluation and reporting.
pub const ALPHA_GRID: [f64; 7] = [0.005, 0.025, 0.05, 0.5, 0.95, 0.975, 0.995];

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Step-function CDF over the distinct training targets that carry weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmpirical {
    support: Vec<f64>,
    cum_weight: Vec<f64>,
}

impl WeightedEmpirical {
    /// Builds the distribution of `targets` under `weights`. Weights of equal
    /// targets are merged; zero-weight targets are left out of the support.
    pub fn new(weights: &[f64], targets: &[f64]) -> Result<Self> {
        if weights.len() != targets.len() {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: targets.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Numeric("weights must be finite and nonnegative".into()));
        }
        if targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::Numeric("targets must be finite".into()));
        }
        let mut pairs: Vec<(f64, f64)> = targets
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&y, &w)| (y, w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut support: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut cum_weight: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut running = 0.0;
        for (y, w) in pairs {
            running += w;
            if support.last() == Some(&y) {
                *cum_weight.last_mut().unwrap() = running;
            } else {
                support.push(y);
                cum_weight.push(running);
            }
        }
        if support.is_empty() || (running - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Numeric(format!("weight row sums to {running}, expected 1")));
        }
        cum_weight.iter_mut().for_each(|c| *c /= running);
        Ok(WeightedEmpirical { support, cum_weight })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_weight(&self) -> &[f64] {
        &self.cum_weight
    }

    /// `P(Y <= y)`, right-continuous.
    pub fn cdf_at(&self, y: f64) -> f64 {
        match self.support.partition_point(|&s| s <= y) {
            0 => 0.0,
            k => self.cum_weight[k - 1],
        }
    }

    /// `inf { y : F(y) >= alpha }`, always a support value.
    pub fn quantile_at(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let k = self.cum_weight.partition_point(|&c| c < alpha);
        Ok(self.support[k.min(self.support.len() - 1)])
    }

    pub fn quantiles(&self, alphas: &[f64]) -> Result<QuantileEstimate> {
        check_alphas(alphas)?;
        let values = alphas.iter().map(|&a| self.quantile_at(a)).collect::<Result<_>>()?;
        Ok(QuantileEstimate {
            alphas: alphas.to_vec(),
            values,
        })
    }
}

/// See [`WeightedEmpirical::new`].
pub fn build_empirical(weights: &[f64], targets: &[f64]) -> Result<WeightedEmpirical> {
    WeightedEmpirical::new(weights, targets)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange(alpha))
    }
}

/// Levels must lie in (0, 1) and be strictly increasing.
pub fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::InvalidParam("no quantile levels given".into()));
    }
    alphas.iter().try_for_each(|&a| check_alpha(a))?;
    if alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam(
            "quantile levels must be strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileEstimate {
    pub fn get(&self, alpha: f64) -> Option<f64> {
        self.alphas.iter().position(|&a| a == alpha).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// The interval `(Q(alpha_lo), Q(alpha_hi))`; both levels must be present
/// in `qe`.
pub fn prediction_interval(qe: &QuantileEstimate, alpha_lo: f64, alpha_hi: f64) -> Result<PredictionInterval> {
    if alpha_lo >= alpha_hi {
        return Err(Error::InvalidParam(format!("interval levels {alpha_lo} >= {alpha_hi}")));
    }
    let lower = qe
        .get(alpha_lo)
        .ok_or_else(|| Error::InvalidParam(format!("level {alpha_lo} not estimated")))?;
    let upper = qe
        .get(alpha_hi)
        .ok_or_else(|| Error::InvalidParam(format!("level {alpha_hi} not estimated")))?;
    Ok(PredictionInterval {
        lower,
        upper,
        level: alpha_hi - alpha_lo,
    })
}

/// Fraction of `y_true` inside the matching interval (bounds inclusive).
pub fn coverage(intervals: &[PredictionInterval], y_true: &[f64]) -> Result<f64> {
    if intervals.len() != y_true.len() {
        return Err(Error::LengthMismatch {
            left: intervals.len(),
            right: y_true.len(),
        });
    }
    if intervals.is_empty() {
        return Err(Error::Empty);
    }
    let inside = intervals.iter().zip(y_true).filter(|(iv, &y)| iv.contains(y)).count();
    Ok(inside as f64 / intervals.len() as f64)
}

/// Quantiles of every query under one weighting scheme. Queries whose
/// weight row is undefined yield `None`.
pub fn predict_quantiles(
    forest: &Forest,
    data: &Dataset,
    queries: &[&[f64]],
    scheme: Scheme,
    alphas: &[f64],
) -> Result<Vec<Option<QuantileEstimate>>> {
    check_alphas(alphas)?;
    let prox = Proximity::new(forest, data)?;
    queries
        .par_iter()
        .map(|x| match prox.test_row(scheme, x)? {
            Some(w) => WeightedEmpirical::new(&w, data.target())?.quantiles(alphas).map(Some),
            None => Ok(None),
        })
        .collect()
}

/// CSV with one row per query: the quantiles, then the interval bounds and
/// width for `(alpha_lo, alpha_hi)`. Undefined queries are written as `NA`.
pub fn write_quantiles_csv<W: Write>(
    writer: W,
    alphas: &[f64],
    estimates: &[Option<QuantileEstimate>],
    interval: (f64, f64),
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["query".to_string()];
    header.extend(alphas.iter().map(|a| format!("q{a}")));
    header.extend(["lower", "upper", "width"].map(String::from));
    w.write_record(&header)?;
    for (q, est) in estimates.iter().enumerate() {
        let mut rec = vec![q.to_string()];
        match est {
            Some(e) => {
                rec.extend(e.values.iter().map(|v| v.to_string()));
                match prediction_interval(e, interval.0, interval.1) {
                    Ok(iv) => rec.extend([iv.lower, iv.upper, iv.width()].map(|v| v.to_string())),
                    Err(_) => rec.extend(["NA"; 3].map(String::from)),
                }
            }
            None => rec.extend(std::iter::repeat_n("NA".to_string(), alphas.len() + 3)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point() {
        let e = build_empirical(&[0.5, 0.5], &[1.0, 3.0]).unwrap();
        assert_eq!(e.support(), &[1.0, 3.0]);
        assert_eq!(e.cum_weight(), &[0.5, 1.0]);
        assert_eq!(e.cdf_at(2.0), 0.5);
        assert_eq!(e.cdf_at(0.0), 0.0);
        assert_eq!(e.cdf_at(1.0), 0.5);
        assert_eq!(e.cdf_at(3.0), 1.0);
    }

    #[test]
    fn merges_duplicates() {
        let e = build_empirical(&[0.25, 0.25, 0.5], &[2.0, 2.0, 5.0]).unwrap();
        assert_eq!(e.support(), &[2.0, 5.0]);
        assert_eq!(e.cum_weight(), &[0.5, 1.0]);
    }

    #[test]
    fn uniform_four() {
        let e = build_empirical(&[0.25; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.cum_weight(), &[0.25, 0.5, 0.75, 1.0]);
        assert_eq!(e.quantile_at(0.5).unwrap(), 2.0);
        assert_eq!(e.quantile_at(0.95).unwrap(), 4.0);
        assert_eq!(e.quantile_at(0.005).unwrap(), 1.0);
        assert!(e.quantile_at(0.0).is_err());
        assert!(e.quantile_at(1.0).is_err());
        assert!(e.quantile_at(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(build_empirical(&[0.5, 0.4], &[1.0, 2.0]).is_err());
        assert!(build_empirical(&[1.5, -0.5], &[1.0, 2.0]).is_err());
        assert!(build_empirical(&[1.0], &[1.0, 2.0]).is_err());
        assert!(build_empirical(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn intervals_and_coverage() {
        let e = build_empirical(&[0.25; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let qe = e.quantiles(&ALPHA_GRID).unwrap();
        let iv = prediction_interval(&qe, 0.025, 0.975).unwrap();
        assert_eq!((iv.lower, iv.upper), (1.0, 4.0));
        assert!((iv.level - 0.95).abs() < 1e-15);
        assert!(prediction_interval(&qe, 0.1, 0.9).is_err());
        assert!(prediction_interval(&qe, 0.975, 0.025).is_err());

        let ivs = vec![
            PredictionInterval {
                lower: 0.0,
                upper: 1.0,
                level: 0.95
            };
            20
        ];
        let mut y = vec![0.5; 20];
        y[3] = 2.0;
        assert_eq!(coverage(&ivs, &y).unwrap(), 0.95);
        assert_eq!(coverage(&ivs, &[1.0; 20]).unwrap(), 1.0);
        assert!(coverage(&[], &[]).is_err());
        assert!(coverage(&ivs, &[0.0]).is_err());
    }

    #[test]
    fn one_hot_row() {
        let mut w = vec![0.0; 5];
        w[3] = 1.0;
        let y = [5.0, 1.0, 9.0, 4.0, 2.0];
        let e = build_empirical(&w, &y).unwrap();
        for a in ALPHA_GRID {
            assert_eq!(e.quantile_at(a).unwrap(), 4.0);
        }
    }

    fn weights_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (prop::collection::vec(0u32..20, n), prop::collection::vec(-50i32..50, n)).prop_filter_map(
                "nonzero weights",
                |(w, y)| {
                    let total: u32 = w.iter().sum();
                    (total > 0).then(|| {
                        let w = w.iter().map(|&c| f64::from(c) / f64::from(total)).collect::<Vec<_>>();
                        let y = y.iter().map(|&v| f64::from(v) * 0.25).collect();
                        (w, y)
                    })
                },
            )
        })
    }

    proptest! {
        #[test]
        fn no_crossing((w, y) in weights_strategy(), a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let e = build_empirical(&w, &y).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(e.quantile_at(lo).unwrap() <= e.quantile_at(hi).unwrap());
        }

        #[test]
        fn galois((w, y) in weights_strategy(), a in 0.001f64..0.999) {
            let e = build_empirical(&w, &y).unwrap();
            let q = e.quantile_at(a).unwrap();
            prop_assert!(e.cdf_at(q) >= a);
            for &s in e.support().iter().filter(|&&s| s < q) {
                prop_assert!(e.cdf_at(s) < a);
            }
        }

        #[test]
        fn affine_equivariance((w, y) in weights_strategy(), scale in 1u32..8, shift in -10i32..10) {
            // Dyadic targets, small integer scale and shift: all exact.
            let a = f64::from(scale) * 0.5;
            let b = f64::from(shift);
            let y2: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            let e1 = build_empirical(&w, &y).unwrap();
            let e2 = build_empirical(&w, &y2).unwrap();
            for alpha in ALPHA_GRID {
                prop_assert_eq!(e2.quantile_at(alpha).unwrap(), a * e1.quantile_at(alpha).unwrap() + b);
            }
        }
    }
}
