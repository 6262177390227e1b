use super::CodecError;
use crate::geo::GeoPoint;

/// One quantization step, in degrees (about 1.1 m of latitude).
pub const QUANTUM_DEG: f64 = 1e-5;
/// Largest offset from the region origin accepted on the wire.
pub const MAX_OFFSET_DEG: f64 = 0.29;

/// Region origin that positions are encoded relative to. It is shared out
/// of band, never sent on the wire.
pub type GeoOrigin = GeoPoint;

pub fn quantize_position(lat: f64, lon: f64, origin: GeoOrigin) -> Result<(i16, i16), CodecError> {
    Ok((quantize_axis(lat - origin.lat)?, quantize_axis(lon - origin.lon)?))
}

pub fn dequantize_position(lat_q: i16, lon_q: i16, origin: GeoOrigin) -> (f64, f64) {
    (origin.lat + f64::from(lat_q) * QUANTUM_DEG, origin.lon + f64::from(lon_q) * QUANTUM_DEG)
}

fn quantize_axis(offset: f64) -> Result<i16, CodecError> {
    if !offset.is_finite() || offset.abs() > MAX_OFFSET_DEG + QUANTUM_DEG / 2.0 {
        return Err(CodecError::OutOfRange(offset));
    }
    Ok((offset / QUANTUM_DEG).round() as i16)
}
