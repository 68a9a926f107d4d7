//! Quantile regression with random forest proximities.
//!
//! A regression forest is read as an adaptive nearest-neighbour model: each
//! query gets a weight over the training points, and the weighted empirical
//! distribution of the training targets estimates the conditional
//! distribution of the response. Four weightings are available (QRF leaf
//! weights, RF-GAP, out-of-bag proximity and the original proximity); see
//! [`proximity`].
//!
//! ```no_run
//! use rfprox::{Dataset, Forest, MissingPolicy, Scheme, TreeParams, ALPHA_GRID};
//!
//! let data = Dataset::load_csv("data/abalone.csv", "rings", MissingPolicy::DropRow)?;
//! let forest = Forest::fit(&data, &TreeParams::default(), 100, 42)?;
//! let queries: Vec<&[f64]> = data.rows().take(5).collect();
//! let q = rfprox::predict_quantiles(&forest, &data, &queries, Scheme::Gap, &ALPHA_GRID)?;
//! # Ok::<(), rfprox::Error>(())
//! ```

pub mod bench;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod metrics;
pub mod model;
pub mod proximity;
pub mod quantile;

pub use dataset::{kfold_split, sliding_window_split, Dataset, Fold, MissingPolicy, SplitPlan, SplitScheme};
pub use error::{Error, Result};
pub use forest::{Criterion, Forest, TreeParams};
pub use model::Model;
pub use proximity::{Proximity, Scheme, WeightMatrix};
pub use quantile::{predict_quantiles, QuantileEstimate, WeightedEmpirical, ALPHA_GRID};
