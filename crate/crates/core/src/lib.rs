//! Judge-question generation for multi-role court debates.
//!
//! A role-aware hierarchical encoder reads the debate context, an
//! intent-navigation layer turns annotated legal-knowledge elements and
//! speaker roles into an attended summary, and a pointer-generator decoder
//! writes the judge's next question, copying names, dates and amounts
//! straight from the context.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
mod error;
pub mod intent;
pub mod metrics;
pub mod model;
pub mod params;
pub mod search;
pub mod train;

pub use error::{Error, Result};
