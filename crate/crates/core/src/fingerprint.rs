//! Content fingerprints over canonical JSON.
//!
//! Values are serialized to a `serde_json::Value` first; its object maps are
//! ordered by key, so the byte stream does not depend on struct field order or
//! map insertion order. Floats go through the shortest round-trip formatter.

use alloc::string::String;
use alloc::vec::Vec;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("config values serialize to JSON");
    serde_json::to_vec(&v).expect("JSON values serialize")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON form of `value`, hex encoded.
pub fn fingerprint<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&canonical_json(value))
}
