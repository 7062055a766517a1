//! Community attribute-trend prediction.
//!
//! Monthly community–attribute purchase counts become a series of weighted
//! bipartite graphs and their attribute hypergraphs. Attribute embeddings from
//! both views are fused with a sales embedding, rolled through a plain and a
//! skip-connected GRU, and scored per community together with a linear
//! autoregressive sales term. The target is whether an attribute newly enters
//! a community's top-K% sales list.

pub mod error;
pub mod numeric;
pub mod snapshots;
pub mod encoders;
pub mod temporal;
pub mod config;
pub mod model;
pub mod eval;
pub mod synthetic;

pub use error::{Error, Result};
