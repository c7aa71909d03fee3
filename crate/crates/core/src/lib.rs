//! Shoulder-season analytics for electricity load and temperature records.
//!
//! A shoulder season is the run of `window_len` (default 45) consecutive days
//! with the lowest mean demand, or lowest mean degree days, in each half of
//! the year. The crate covers the full chain:
//!
//! * [`ingest`]: load, fuel-mix and outage files into canonical daily series
//! * [`thermal`]: regional temperature, demand/temperature cubic, reference
//!   temperature and degree days
//! * [`windows`]: minimum-mean window search per year, half and metric
//! * [`trends`]: onset drift regression, shift probabilities, correlations
//! * [`projection`]: ensemble bias correction and merge-year detection
//! * [`adequacy`]: outage averages and unmet-demand fractions
//! * [`pipeline`]: config-driven orchestration and report output

pub mod adequacy;
pub mod calendar;
pub mod error;
pub mod fixture;
pub mod ingest;
pub mod output;
pub mod pipeline;
pub mod projection;
pub mod thermal;
pub mod trends;
pub mod windows;

pub use error::{Error, Result};
