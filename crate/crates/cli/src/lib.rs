//! Experiment harness around the spiking-network library: configuration,
//! synthetic datasets, and the train / simulate / analyze / report
//! commands.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod pipeline;
