//! Core algorithms for hybrid recommender / language-model top-k ranking.
//!
//! This crate carries everything that is pure computation over in-memory
//! data: interaction corpora and their transforms, classical recommenders,
//! per-user ranking metrics and significance statistics, the weak-user
//! gate, prompt construction and response repair, backend traits with
//! deterministic mock implementations, the guarded merge of model and
//! recommender rankings, and report assembly.
//!
//! The crate is `no_std`-compatible (with `alloc`); IO, file formats,
//! HTTP, and the CLI live in the companion `weakrec` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(missing_docs)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod gate;
pub mod hybrid;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod recsys;
pub mod report;
pub mod stats;
