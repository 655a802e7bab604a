//! Scenario runner, trace writer and verification suites for the RLS estimators.

pub mod catalog;
pub mod error;
pub mod plot;
pub mod runner;
pub mod scenario;
pub mod suites;
pub mod trace;

pub use error::{ExpError, Result};
