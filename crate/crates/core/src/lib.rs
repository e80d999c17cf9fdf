//! Learning co-investment networks over a stock universe.
//!
//! Pairwise price/volume series are convolved with a shared kernel bank,
//! fed through an LSTM trained to predict the market index's rise-fall
//! direction, and the trained input-to-gate weights are summed per pair to
//! score how strongly two stocks are traded together. Pearson, DTW and
//! visibility-graph/WL baselines, graph metrics, and a planted synthetic
//! market are included for evaluation.

pub mod analysis;
pub mod baselines;
pub mod data;
pub mod error;
pub mod model;
pub mod network;
pub mod synthmarket;
pub mod tensorcore;

pub use error::{Error, Result};
