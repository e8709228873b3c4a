//! Unsupervised cyberbullying detection.
//!
//! Sessions (a post with its timestamped comments, like/share counts and
//! owner) are encoded by a hierarchical attention network over words and
//! comments, the owner is embedded by a graph auto-encoder over the follower
//! graph, and the concatenated representation is scored by a Gaussian-mixture
//! energy whose memberships come from a small network. A regressor on the
//! comment vectors fits inter-arrival times. All four parts are trained
//! jointly; sessions whose energy lies above a quantile threshold are flagged.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod energy;
pub mod eval;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod params;
pub mod synth;
pub mod temporal;
pub mod text;
pub mod trainer;

pub use error::{Result, UcdError};
