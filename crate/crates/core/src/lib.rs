//! Runtime framework for software-heavy asset administration shells.
pub mod asset;
pub mod classify;
pub mod engine;
pub mod model;
pub mod packager;
pub mod passive;
pub mod server;
