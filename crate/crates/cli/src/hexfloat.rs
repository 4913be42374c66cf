//! Bit-exact float encoding for persisted artifacts.
//!
//! Floating-point payloads are stored as the hexadecimal IEEE-754 bit
//! pattern ("0x3ff0000000000000" for 1.0), which round-trips every value
//! including signed zeros, subnormals, and infinities without any reliance
//! on decimal shortest-representation guarantees.

use serde::{Deserialize, Serialize};

/// Encode an `f64` as its bit pattern in hex.
pub fn encode(v: f64) -> String {
    format!("0x{:016x}", v.to_bits())
}

/// Decode a hex bit pattern produced by [`encode`].
pub fn decode(s: &str) -> Result<f64, String> {
    let body = s
        .strip_prefix("0x")
        .ok_or_else(|| format!("hex float {s:?} must start with 0x"))?;
    if body.len() != 16 {
        return Err(format!("hex float {s:?} must hold exactly 16 hex digits"));
    }
    u64::from_str_radix(body, 16)
        .map(f64::from_bits)
        .map_err(|e| format!("hex float {s:?}: {e}"))
}

pub fn encode_vec(v: &[f64]) -> Vec<String> {
    v.iter().copied().map(encode).collect()
}

pub fn decode_vec(v: &[String]) -> Result<Vec<f64>, String> {
    v.iter().map(|s| decode(s)).collect()
}

/// A float stored in hex form; serializes as the hex string.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HexF64(pub f64);

impl TryFrom<String> for HexF64 {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        decode(&s).map(HexF64)
    }
}

impl From<HexF64> for String {
    fn from(v: HexF64) -> String {
        encode(v.0)
    }
}
