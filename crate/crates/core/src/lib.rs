//! Company classification with exact t-SNE and spectral clustering, and a
//! decision engine that tunes the grouping by out-of-sample Sharpe ratio of
//! a grouped tangency portfolio.

pub mod data;
pub mod engine;
pub mod error;
pub mod export;
pub mod kmeans;
pub mod linalg;
pub mod portfolio;
pub mod seed;
pub mod spectral;
pub mod synthetic;
pub mod tsne;

pub use error::{Error, Result};
