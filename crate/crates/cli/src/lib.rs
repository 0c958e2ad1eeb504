//! Command-line front end and HTTP service over `metanet-core`.

pub mod commands;
pub mod engine;
pub mod service;
