//! Knowledge-graph completion from noisy multi-source claims.
//!
//! Pipeline: [`kgdata`] ingestion, [`encoder`] entity representations,
//! [`scoring`] fact plausibility, [`align`] value alignment, [`truth`]
//! semi-supervised truth inference, [`evalharness`] metrics and synthetic
//! benchmarks, [`cli`] the command-line driver.

mod error;

pub mod align;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod evalharness;
pub mod kgdata;
pub mod scoring;
pub mod textenc;
pub mod truth;

pub use error::{Error, Result};
