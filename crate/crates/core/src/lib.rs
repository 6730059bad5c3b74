//! Exact lifted inference for temporal first-order probabilistic models.

pub mod bench;
pub mod classifier;
pub mod dsl;
pub mod error;
pub mod fojt;
pub mod ground;
pub mod ground_interface;
pub mod histogram;
pub mod ldjt;
pub mod lve;
pub mod model;

pub use error::{Error, Result};
