//! Operational shell around `combitrial`: the event store, the conduct
//! HTTP API and the command-line interface.

pub mod api;
pub mod cli;
pub mod error;
pub mod store;

pub use error::ServiceError;
