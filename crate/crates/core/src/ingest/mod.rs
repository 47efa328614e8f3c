//! The sensor data handling engine: wire decoding, curation and integration.

pub mod curate;
pub mod integrate;
pub mod mapping;
pub mod wire;

pub use curate::{curate, curate_with, flatten, CuratedSegment, CurationConfig, CurationError};
pub use integrate::{integrate, integrate_with, IntegrationError};
pub use mapping::{map_external, Channel, ChannelMap, MappingError, MappingSpec};
pub use wire::{parse_packet, serialize, WireError, WireScales, PACKET_LEN};

use crate::model::SensorFrame;

/// Decodes an HTTP batch body: a JSON array of frames in physical units.
pub fn parse_batch(body: &[u8]) -> Result<Vec<SensorFrame>, serde_json::Error> {
    serde_json::from_slice(body)
}
