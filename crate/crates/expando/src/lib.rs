//! Service, CLI and persistence around [`expando_core`].

pub use expando_core as core;

pub mod app;
pub mod config;
pub mod index_file;
pub mod providers;
pub mod store;
pub mod api;
pub mod service;
pub mod eval;
pub mod cli;
