pub mod config;
pub mod dataset;
pub mod generation;
pub mod metrics;
pub mod plot;
pub mod report;
pub mod screenplay;
pub mod service;
pub mod store;
pub mod text;
pub mod workbench;
