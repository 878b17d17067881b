//! Drivers wiring extraction, the cache and synthesis together.

pub mod commands;
mod config;
pub mod mine;
pub mod solve;

pub use config::RunConfig;
pub use mine::{mine, MineSummary};
