pub mod autonomy;
pub mod bridge;
pub mod cli;
pub mod config;
pub mod harness;
pub mod sensors;
pub mod twin;
pub mod wire;
