//! Command-line tools and the HTTP scoring service for propensity models.

pub mod args;
pub mod commands;
pub mod failure;
pub mod service;

pub use failure::Failure;
