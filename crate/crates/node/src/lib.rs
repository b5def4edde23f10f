//! ddnfs peer daemon and administration tool.

pub mod config;
pub mod control;
pub mod daemon;
pub mod files;
pub mod handshake;
pub mod visit;

pub use config::NodeConfig;
