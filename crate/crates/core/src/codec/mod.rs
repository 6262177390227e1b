//! Wire formats for beacons, events and notifications.

mod bits;
mod messages;
mod position;

pub use bits::{BitReader, BitString};
pub use messages::*;
pub use position::{dequantize_position, quantize_position, GeoOrigin, MAX_OFFSET_DEG, QUANTUM_DEG};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("expected {expected} bits, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("reserved bits must be zero, got {0:#x}")]
    Reserved(u64),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("position offset {0:.6} deg is outside the encodable range")]
    OutOfRange(f64),
}
