//! flowforge: service catalogue, workflow execution over an in-process broker,
//! configuration tuning, smart visualization, HTTP gateway and CLI.

pub mod broker;
pub mod catalogue_store;
pub mod cli;
pub mod csv_source;
pub mod envelope;
pub mod executor;
pub mod fixture;
pub mod gateway;
pub mod optimizer_job;
pub mod platform;
pub mod runtime;
pub mod smartviz;
pub mod table_store;
pub mod workload;
