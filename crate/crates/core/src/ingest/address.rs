use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::IngestError;

/// A 20-byte account identifier.
///
/// Ordering follows the byte representation, which coincides with the
/// ordering of the canonical lowercase rendering.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address([u8; 20]);

/// A 32-byte transaction identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxHash([u8; 32]);

fn decode_hex<const N: usize>(raw: &str) -> Option<[u8; N]> {
    let raw = raw.trim();
    let digits = raw
        .strip_prefix("0x")
        .or_else(|| raw.strip_prefix("0X"))
        .unwrap_or(raw);
    if digits.len() != 2 * N {
        return None;
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(digits, &mut out).ok()?;
    Some(out)
}

/// Parses a hex address with or without the `0x` prefix, in any letter case.
pub fn normalize_address(raw: &str) -> Result<Address, IngestError> {
    decode_hex::<20>(raw)
        .map(Address)
        .ok_or_else(|| IngestError::MalformedAddress(raw.to_string()))
}

impl Address {
    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    /// Deterministic address derived from a 64-bit tag; used by the generator
    /// and by tests that need many distinct addresses.
    pub fn from_tag(prefix: u32, tag: u64) -> Self {
        let mut bytes = [0u8; 20];
        bytes[..4].copy_from_slice(&prefix.to_be_bytes());
        bytes[12..].copy_from_slice(&tag.to_be_bytes());
        Address(bytes)
    }
}

impl TxHash {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        TxHash(bytes)
    }

    pub fn parse(raw: &str) -> Result<Self, IngestError> {
        decode_hex::<32>(raw)
            .map(TxHash)
            .ok_or_else(|| IngestError::MalformedTxHash(raw.to_string()))
    }

    pub fn from_tag(tag: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[24..].copy_from_slice(&tag.to_be_bytes());
        TxHash(bytes)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for TxHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_address(s)
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl Serialize for TxHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TxHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        TxHash::parse(&raw).map_err(serde::de::Error::custom)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        normalize_address(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_mixed_case() {
        let a = normalize_address("0x654Fae4aa229d104CAbead47e56703f58b174bE4").unwrap();
        assert_eq!(a.to_string(), "0x654fae4aa229d104cabead47e56703f58b174be4");
        let b = normalize_address("0X000000000035B5E5AD9019092C665357240F594E").unwrap();
        assert_eq!(b.to_string(), "0x000000000035b5e5ad9019092c665357240f594e");
    }

    #[test]
    fn accepts_missing_prefix_and_is_idempotent() {
        let a = normalize_address("654Fae4aa229d104CAbead47e56703f58b174bE4").unwrap();
        let again = normalize_address(&a.to_string()).unwrap();
        assert_eq!(a, again);
        assert_eq!(a.to_string().len(), 42);
    }

    #[test]
    fn rejects_bad_length_and_digits() {
        assert!(matches!(
            normalize_address("0x123"),
            Err(IngestError::MalformedAddress(_))
        ));
        assert!(normalize_address("0xzz4Fae4aa229d104CAbead47e56703f58b174bE4").is_err());
    }

    #[test]
    fn byte_order_matches_string_order() {
        let a = Address::from_tag(1, 5);
        let b = Address::from_tag(1, 300);
        assert!(a < b);
        assert!(a.to_string() < b.to_string());
    }
}
