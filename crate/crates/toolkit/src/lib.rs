//! IO, configuration, HTTP backend, and orchestration around `weakrec-core`.
//!
//! Everything that touches the filesystem, the network, or the process
//! environment lives here; the core crate stays pure.

pub mod checkpoint;
pub mod config;
pub mod fixture;
pub mod io;
pub mod llm_http;
pub mod pipeline;
pub mod runerr;
