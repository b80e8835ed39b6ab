//! File formats, manifests, parallel trial orchestration, reports and the
//! verification and benchmark harnesses around `hgnn-core`.

pub mod bench;
pub mod convert;
mod error;
pub mod io;
pub mod manifest;
pub mod report;
pub mod trials;
pub mod verify;

pub use error::{Error, Result};
pub use hgnn_core as core;
