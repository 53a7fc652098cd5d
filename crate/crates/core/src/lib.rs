//! Paired-comparison models with cyclic (intransitive) structure.
//!
//! Profiles of pairwise preferences are split into a linear part, explained
//! by item merits, and a cyclic part spanned by triad cycles. The crate
//! provides estimation, hypothesis tests, triad-selection procedures,
//! ranking and transitivity diagnostics, a betting evaluation, and a
//! reproducible simulation study.

pub mod analysis;
pub mod betting;
pub mod config;
pub mod error;
pub mod estimate;
pub mod geometry;
pub mod inference;
pub mod ingest;
pub mod linalg;
pub mod rank;
pub mod select;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{build_bases, decompose, BasisPair, Pair, Profile, Triad};
