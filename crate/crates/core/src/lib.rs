pub mod cli;
pub mod covariance;
pub mod data;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod interpolate;
pub mod io;
pub mod likelihood;
pub mod margins;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod simulate;
pub mod svg;
pub mod tails;

pub use error::{Error, Result};
