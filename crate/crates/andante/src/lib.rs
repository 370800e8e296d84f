//! The andante engine with threads, clocks, IO and the command line on top
//! of `andante-core`.

pub mod bench;
pub mod corpus;
pub mod engine;
pub mod run;
pub mod trace;

pub use andante_core as core;
