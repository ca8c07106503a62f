//! Geographic primitives: points, the geohash codec, and great-circle distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IUGG mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Geohash alphabet: base 32, digits plus lowercase letters without a, i, l, o.
pub const GEOHASH_ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// Maximum geohash precision accepted anywhere in the pipeline.
pub const GEOHASH_MAX_PRECISION: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("geohash precision {0} outside [1, {GEOHASH_MAX_PRECISION}]")]
    PrecisionOutOfRange(usize),
    #[error("invalid geohash character {0:?}")]
    InvalidGeohashChar(char),
    #[error("empty geohash")]
    EmptyGeohash,
    #[error("geohash longer than {GEOHASH_MAX_PRECISION} characters")]
    GeohashTooLong,
}

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Builds a point, rejecting out-of-range or non-finite coordinates.
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::LongitudeOutOfRange(lon));
        }
        Ok(Self { lat, lon })
    }
}

/// The bounding box of a geohash cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeohashBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeohashBox {
    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: (self.lat_min + self.lat_max) / 2.0,
            lon: (self.lon_min + self.lon_max) / 2.0,
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }
}

/// Encodes a point as a geohash of the given precision.
///
/// Standard interleaved encoding: longitude takes the first bit, five bits per
/// output character.
pub fn geohash_encode(p: GeoPoint, precision: usize) -> Result<String, GeoError> {
    if precision == 0 || precision > GEOHASH_MAX_PRECISION {
        return Err(GeoError::PrecisionOutOfRange(precision));
    }
    GeoPoint::new(p.lat, p.lon)?;

    let mut out = String::with_capacity(precision);
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    let mut even = true; // longitude bit next
    let mut ch: usize = 0;
    let mut bits = 0;

    while out.len() < precision {
        if even {
            let mid = (lon_lo + lon_hi) / 2.0;
            if p.lon >= mid {
                ch = (ch << 1) | 1;
                lon_lo = mid;
            } else {
                ch <<= 1;
                lon_hi = mid;
            }
        } else {
            let mid = (lat_lo + lat_hi) / 2.0;
            if p.lat >= mid {
                ch = (ch << 1) | 1;
                lat_lo = mid;
            } else {
                ch <<= 1;
                lat_hi = mid;
            }
        }
        even = !even;
        bits += 1;
        if bits == 5 {
            out.push(GEOHASH_ALPHABET[ch] as char);
            bits = 0;
            ch = 0;
        }
    }
    Ok(out)
}

/// Decodes a geohash to its cell bounding box.
pub fn geohash_decode(hash: &str) -> Result<GeohashBox, GeoError> {
    if hash.is_empty() {
        return Err(GeoError::EmptyGeohash);
    }
    if hash.len() > GEOHASH_MAX_PRECISION {
        return Err(GeoError::GeohashTooLong);
    }
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    let mut even = true;

    for c in hash.chars() {
        let idx = GEOHASH_ALPHABET
            .iter()
            .position(|&b| b as char == c)
            .ok_or(GeoError::InvalidGeohashChar(c))? as u32;
        for shift in (0..5).rev() {
            let bit = (idx >> shift) & 1;
            if even {
                let mid = (lon_lo + lon_hi) / 2.0;
                if bit == 1 {
                    lon_lo = mid;
                } else {
                    lon_hi = mid;
                }
            } else {
                let mid = (lat_lo + lat_hi) / 2.0;
                if bit == 1 {
                    lat_lo = mid;
                } else {
                    lat_hi = mid;
                }
            }
            even = !even;
        }
    }
    Ok(GeohashBox {
        lat_min: lat_lo,
        lat_max: lat_hi,
        lon_min: lon_lo,
        lon_max: lon_hi,
    })
}

/// Great-circle distance between two points in kilometres (haversine formula,
/// mean Earth radius [`EARTH_RADIUS_KM`]).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let d_lat = (b.lat - a.lat).to_radians();
    let d_lon = (b.lon - a.lon).to_radians();

    let h = (d_lat / 2.0).sin().powi(2) + lat_a.cos() * lat_b.cos() * (d_lon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_canonical_vector() {
        // Public reference vector for the standard encoding.
        let p = GeoPoint { lat: 57.64911, lon: 10.40744 };
        assert_eq!(geohash_encode(p, 11).unwrap(), "u4pruydqqvj");
    }

    #[test]
    fn decode_canonical_vector() {
        let b = geohash_decode("u4pruydqqvj").unwrap();
        assert!(b.contains(GeoPoint { lat: 57.64911, lon: 10.40744 }));
        // Frozen from an independent reference decode.
        assert!((b.lat_min - 57.649_109_959_602_356).abs() < 1e-12);
        assert!((b.lon_max - 10.407_440_364_360_81).abs() < 1e-12);
    }

    #[test]
    fn encode_origin_single_char() {
        let h = geohash_encode(GeoPoint { lat: 0.0, lon: 0.0 }, 1).unwrap();
        assert_eq!(h, "s");
        assert!(geohash_decode(&h).unwrap().contains(GeoPoint { lat: 0.0, lon: 0.0 }));
    }

    #[test]
    fn encode_wellington_round_trip() {
        let p = GeoPoint { lat: -41.2889, lon: 174.7772 };
        let h = geohash_encode(p, 6).unwrap();
        assert_eq!(h.len(), 6);
        // Independent reference implementation gives "rbsm15" at precision 6.
        assert_eq!(h, "rbsm15");
        assert!(geohash_decode(&h).unwrap().contains(p));
    }

    #[test]
    fn decode_rejects_bad_alphabet() {
        assert_eq!(geohash_decode("a"), Err(GeoError::InvalidGeohashChar('a')));
        assert_eq!(geohash_decode(""), Err(GeoError::EmptyGeohash));
        assert!(geohash_decode("0123456789bcdefg").is_err()); // 16 chars
    }

    #[test]
    fn encode_rejects_bad_precision() {
        let p = GeoPoint { lat: 0.0, lon: 0.0 };
        assert_eq!(geohash_encode(p, 0), Err(GeoError::PrecisionOutOfRange(0)));
        assert_eq!(geohash_encode(p, 16), Err(GeoError::PrecisionOutOfRange(16)));
    }

    #[test]
    fn haversine_identity_and_antipodes() {
        let w = GeoPoint { lat: -41.2889, lon: 174.7772 };
        assert_eq!(haversine_km(w, w), 0.0);
        let a = GeoPoint { lat: 30.0, lon: 20.0 };
        let b = GeoPoint { lat: -30.0, lon: -160.0 };
        let half_circumference = std::f64::consts::PI * EARTH_RADIUS_KM; // 20015.114...
        assert!((haversine_km(a, b) - half_circumference).abs() < 0.1);
    }

    #[test]
    fn haversine_wellington_lower_hutt() {
        let wellington = GeoPoint { lat: -41.2889, lon: 174.7772 };
        let lower_hutt = GeoPoint { lat: -41.2167, lon: 174.9167 };
        let d = haversine_km(wellington, lower_hutt);
        assert!(d > 10.0 && d < 20.0, "got {d}");
        // Frozen from an independent haversine at R = 6371.0088.
        assert!((d - 14.158_086_282_432).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn round_trip_contains_point(lat in -90.0f64..=90.0, lon in -180.0f64..=180.0, k in 1usize..=12) {
            let p = GeoPoint { lat, lon };
            let h = geohash_encode(p, k).unwrap();
            prop_assert_eq!(h.len(), k);
            prop_assert!(geohash_decode(&h).unwrap().contains(p));
        }

        #[test]
        fn prefixes_nest(lat in -90.0f64..=90.0, lon in -180.0f64..=180.0, k in 2usize..=12) {
            let h = geohash_encode(GeoPoint { lat, lon }, k).unwrap();
            let outer = geohash_decode(&h[..k - 1]).unwrap();
            let inner = geohash_decode(&h).unwrap();
            prop_assert!(outer.lat_min <= inner.lat_min && inner.lat_max <= outer.lat_max);
            prop_assert!(outer.lon_min <= inner.lon_min && inner.lon_max <= outer.lon_max);
        }

        #[test]
        fn box_center_re_encodes_to_same_hash(lat in -90.0f64..=90.0, lon in -180.0f64..=180.0, k in 1usize..=10) {
            let h = geohash_encode(GeoPoint { lat, lon }, k).unwrap();
            let c = geohash_decode(&h).unwrap().center();
            prop_assert_eq!(geohash_encode(c, k).unwrap(), h);
        }

        #[test]
        fn haversine_symmetric_and_triangle(
            lat1 in -90.0f64..=90.0, lon1 in -180.0f64..=180.0,
            lat2 in -90.0f64..=90.0, lon2 in -180.0f64..=180.0,
            lat3 in -90.0f64..=90.0, lon3 in -180.0f64..=180.0,
        ) {
            let a = GeoPoint { lat: lat1, lon: lon1 };
            let b = GeoPoint { lat: lat2, lon: lon2 };
            let c = GeoPoint { lat: lat3, lon: lon3 };
            let ab = haversine_km(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - haversine_km(b, a)).abs() < 1e-9);
            prop_assert!(ab <= haversine_km(a, c) + haversine_km(c, b) + 1e-6);
        }
    }
}
