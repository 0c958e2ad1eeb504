//! Data-driven design of periodic metamaterials: parametric unit cells,
//! periodic finite-element homogenization, neural energy surrogates and
//! gradient-based inverse design on top of them.

pub mod design;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod homogenize;
pub mod jet;
pub mod model;
pub mod nmn;
pub mod sampler;
pub mod tensor;

pub use error::{Error, Result};
