//! Core of the andante logic engine.
//!
//! Everything here is `no_std` with `alloc`: terms and binding cells, the
//! reader for the supported Prolog subset, the sequential resolution engine,
//! per-agent stack sets with goal segments and trapped-goal relocation, and
//! the answer memoization area. Threads, clocks and IO live in the `andante`
//! crate.

#![no_std]

extern crate alloc;

pub mod combine;
pub mod error;
pub mod memo;
pub mod reader;
pub mod seq;
pub mod stackset;
pub mod term;

pub use error::EngineError;
pub use reader::{parse_program, parse_query, Program, QuerySpec};
pub use term::{Sym, Term, TermStore, Trail, VarRef};
