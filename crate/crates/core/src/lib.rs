//! Heterogeneity of collections of probability measures under the quadratic
//! Wasserstein distance, estimated with an order-2 U-statistic.

pub mod error;
pub mod heterogeneity;
pub mod io;
pub mod measures;
pub mod models;
pub mod normal;
pub mod numeric;
pub mod plugin;
pub mod rng;
pub mod simulate;
pub mod transforms;
pub mod twosample;
pub mod wasserstein;

pub use error::{Error, Result};
