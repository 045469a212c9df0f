//! Core of a federated terminology node.

pub mod access;
pub mod central;
pub mod clock;
pub mod csv;
pub mod error;
pub mod federation;
pub mod journal;
pub mod model;
pub mod persist;
pub mod search;
pub mod store;
pub mod tbx;
pub mod validate;
