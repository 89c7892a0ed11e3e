//! DocVault: privacy-preserving document custody.
//!
//! Documents are matched against registered templates and field-extracted,
//! reviewed by a notary, reduced to signed facts, obfuscated zone by zone,
//! stored by content hash and anchored in a hash-chained ledger. Owners hand
//! out selective views through expiring share links.

pub mod anchor;
pub mod clock;
pub mod extract;
pub mod facts;
pub mod obfuscate;
pub mod orchestrate;
pub mod raster;
pub mod schemas;
pub mod store;

use serde_json::Value;
use sha2::{Digest, Sha256};

/// SHA-256 of `bytes`.
pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(sha256(bytes))
}

/// Serializes `value` as JSON with object keys sorted and no whitespace.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(m) => {
                let mut keys: Vec<&String> = m.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&m[k], out);
                }
                out.push('}');
            }
            Value::Array(a) => {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(x, out);
                }
                out.push(']');
            }
            scalar => out.push_str(&scalar.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}
