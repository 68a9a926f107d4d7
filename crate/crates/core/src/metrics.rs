//! Point and quantile error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Pinball,
    Mse,
    Mape,
    Mae,
}

/// A computed metric. `alpha` is set only for pinball loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: MetricName,
    pub value: f64,
    pub alpha: Option<f64>,
}

fn check_pair(y: &[f64], pred: &[f64]) -> Result<()> {
    if y.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: pred.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Loss of a single prediction `q` of the `alpha` quantile.
#[inline]
pub fn pinball(y: f64, q: f64, alpha: f64) -> f64 {
    let d = (y - q).abs();
    if y > q {
        alpha * d
    } else {
        (1.0 - alpha) * d
    }
}

/// Mean pinball (quantile) loss.
pub fn pinball_loss(y: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    check_pair(y, q)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(y.iter().zip(q).map(|(&a, &b)| pinball(a, b, alpha)).sum::<f64>() / y.len() as f64)
}

pub fn mse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(y, pred)?;
    Ok(y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Mean absolute percentage error as a fraction (0.1 means 10%).
pub fn mape(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(y, pred)?;
    if y.contains(&0.0) {
        return Err(Error::Numeric("MAPE is undefined for a zero true value".into()));
    }
    Ok(y.iter().zip(pred).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_pair(y, pred)?;
    Ok(y.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pinball_examples() {
        assert!((pinball_loss(&[10.0], &[8.0], 0.9).unwrap() - 1.8).abs() < 1e-15);
        assert!((pinball_loss(&[8.0], &[10.0], 0.9).unwrap() - 0.2).abs() < 1e-15);
        for a in [0.005, 0.5, 0.995] {
            assert_eq!(pinball_loss(&[3.0, -1.0], &[3.0, -1.0], a).unwrap(), 0.0);
        }
        assert!(pinball_loss(&[1.0], &[1.0, 2.0], 0.5).is_err());
        assert!(pinball_loss(&[], &[], 0.5).is_err());
        assert!(pinball_loss(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0], &[3.0]).unwrap(), 9.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[]).is_err());
    }

    #[test]
    fn mape_examples() {
        assert!((mape(&[100.0], &[110.0]).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(mape(&[4.0, -2.0], &[4.0, -2.0]).unwrap(), 0.0);
        assert!(mape(&[0.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.5], &[1.5]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn median_pinball_is_half_mae(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (y, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert_eq!(pinball_loss(&y, &q, 0.5).unwrap(), 0.5 * mae(&y, &q).unwrap());
        }

        #[test]
        fn pinball_asymmetry(d in 0.0f64..100.0, a in 0.01f64..0.99) {
            // Over-prediction at alpha costs what under-prediction costs at 1 - alpha.
            prop_assert_eq!(pinball(0.0, d, a), pinball(d, 0.0, 1.0 - a));
        }

        #[test]
        fn mse_permutation_invariant(pairs in prop::collection::vec((-10i32..10, -10i32..10), 1..20)) {
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let q: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            let (yr, qr): (Vec<f64>, Vec<f64>) = y.iter().rev().zip(q.iter().rev()).map(|(a, b)| (*a, *b)).unzip();
            prop_assert_eq!(mse(&y, &q).unwrap(), mse(&yr, &qr).unwrap());
        }

        #[test]
        fn nonnegative(pairs in prop::collection::vec((1.0f64..100.0, -100.0f64..100.0), 1..20), a in 0.01f64..0.99) {
            let (y, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(pinball_loss(&y, &q, a).unwrap() >= 0.0);
            prop_assert!(mse(&y, &q).unwrap() >= 0.0);
            prop_assert!(mae(&y, &q).unwrap() >= 0.0);
            prop_assert!(mape(&y, &q).unwrap() >= 0.0);
        }
    }
}
