//! Oracles and generators shared by the property suites and the acceptance run.
#![allow(dead_code)]

pub mod dsl;
pub mod operators;
pub mod optimizer;
pub mod viz;
