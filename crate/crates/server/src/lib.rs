//! HTTP service, sync client and operator CLI for terminology nodes and
//! the central aggregator.

pub mod api;
pub mod cli;
pub mod config;
pub mod instance;
pub mod logging;
pub mod sync;
