//! Algorithmic core of flowforge.
//!
//! Everything here is `no_std` with `alloc`: the catalogue model, the workflow
//! DSL, the builtin table operators, the configuration tuner (sampling,
//! surrogate classifier, recursive random search) and the query/chart
//! recommendation engine. IO, threads and the network live in the `flowforge`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod catalogue;
pub mod dsl;
pub mod frame;
pub mod operators;
pub mod optimizer;
pub mod viz;
pub mod value;

pub use frame::{Field, FrameError, TableFrame};
pub use value::{Dtype, Value};
