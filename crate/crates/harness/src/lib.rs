//! Campaign runner behind the `intrepid` CLI.

pub mod campaign;
pub mod config;
pub mod summary;
