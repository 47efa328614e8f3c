//! Synthetic insole pair and gateway. Generates walking, TUG and standing sessions with
//! ground truth and delivers them to the platform over HTTP batches or the binary
//! stream, with optional loss, jitter, pacing and offline buffering.

pub mod client;
pub mod generate;
pub mod stream;

pub use client::{ApiClient, ClientError, Reply};
pub use generate::{generate, Generated, Scenario};
pub use stream::{emit_file, stream_http, stream_tcp, StreamConfig, StreamError, TransmissionReport};
