//! Core data model and analysis engines for the smart-insole platform.

pub mod balance;
pub mod decision;
pub mod gait;
pub mod ingest;
pub mod model;
pub mod report;
pub mod sim;
pub mod stats;
