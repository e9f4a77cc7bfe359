//! Long-term time-series forecasting by double vector quantization.
//!
//! The method characterizes a series twice: a codebook of *regressors*
//! (delay windows) captures where the series can be, and a codebook of
//! *deformations* captures how it moves from one window to the next. A
//! row-stochastic transition matrix between the two codebooks drives a
//! stochastic simulator whose Monte-Carlo ensembles stay stable over long
//! horizons, which is what gap filling and long-term prediction need.
//!
//! The crate covers the full workflow:
//!
//! - [`series`]: series container, CSV I/O, delay windows;
//! - [`preprocess`]: identity / difference / returns transforms behind a
//!   name registry;
//! - [`embedding`]: correlation-dimension analysis to choose the window
//!   size;
//! - [`som`]: the 1-D self-organizing map both codebooks are trained with;
//! - [`model`]: the double-quantization model, simulation and ensembles;
//! - [`strategy`]: recursive / block / recursive-block horizon strategies;
//! - [`selection`]: gap-based cross-validation over a hyperparameter grid;
//! - [`gapfill`]: bidirectional gap filling with drift correction.
//!
//! Every stochastic step derives its RNG seed from a caller-supplied master
//! seed and a stable index path ([`seeding`]), so identical inputs produce
//! identical outputs regardless of thread count.
//!
//! ```
//! use dvq::{DvqModel, DvqParams, FitOptions, TimeSeries};
//!
//! let values: Vec<f64> = (0..300).map(|t| (t as f64 * 0.2).sin()).collect();
//! let series = TimeSeries::new("demo", values)?;
//! let params = DvqParams::new(3, 1, 8, 4, "none")?;
//! let model = DvqModel::fit(&series, &params, &FitOptions::default(), 42)?;
//! let forecast = model.forecast_span(&series, series.len(), 20, 100, 42, &[0.1, 0.9])?;
//! assert_eq!(forecast.mean.len(), 20);
//! # Ok::<(), dvq::DvqError>(())
//! ```

pub mod embedding;
pub mod error;
pub mod gapfill;
pub mod model;
pub mod preprocess;
pub mod seeding;
pub mod selection;
pub mod series;
pub mod som;
pub mod strategy;

pub use error::{DvqError, Result};
pub use model::{DvqModel, DvqParams, FitOptions, ForecastEnsemble};
pub use series::{Gap, TimeSeries};
