//! Sample-complexity analysis of loop-free numerical programs and
//! complexity-guided allocation of training data for stratified neural
//! surrogates.
//!
//! The pipeline: [`syntax`] parses and desugars a program, [`paths`]
//! enumerates its branch-free traces, [`tilde`] bounds the complexity of each
//! trace, [`alloc`] splits a sample budget across paths, [`data`] draws
//! per-path datasets and [`surrogate`] trains one MLP per path.

pub mod alloc;
pub mod data;
pub mod experiment;
pub mod interp;
pub mod oracle;
pub mod paths;
pub mod rng;
pub mod surrogate;
pub mod syntax;
pub mod tilde;

pub use syntax::{parse, parse_core, PathId, Program};
