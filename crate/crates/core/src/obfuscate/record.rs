//! Zone key records and the owner-held master key.
//!
//! The `obfuscationKey` token is base64 (standard alphabet, padded) of:
//!
//! ```text
//! version u8 (=1)
//! zone_id u32 BE
//! start_x, start_y, end_x, end_y u32 BE
//! layer_count u8
//! layer_count × (algorithm_id u8 ‖ layer key 16 bytes)
//! integrity_digest 32 bytes
//! ```
//!
//! A token is self-contained: a holder can restore its zone without any
//! other part of the master key.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::keys::{LayerKey, LAYER_KEY_LEN, SALT_LEN};
use super::layers::Algorithm;
use super::wire::{Coordinates, ResponseZone};
use super::{ObfuscateError, MAX_LAYERS};
use crate::raster::Rect;

const TOKEN_VERSION: u8 = 1;
const HEADER_LEN: usize = 1 + 4 + 16 + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneKeyRecord {
    pub zone_id: u32,
    pub rect: Rect,
    /// Layers in application order.
    pub layers: Vec<(Algorithm, LayerKey)>,
    /// SHA-256 of the original zone bytes.
    pub integrity_digest: [u8; 32],
}

impl ZoneKeyRecord {
    pub fn new(
        zone_id: u32,
        rect: Rect,
        layers: Vec<(Algorithm, LayerKey)>,
        integrity_digest: [u8; 32],
    ) -> Self {
        Self {
            zone_id,
            rect,
            layers,
            integrity_digest,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.layers.len() * 17 + 32);
        out.push(TOKEN_VERSION);
        out.extend_from_slice(&self.zone_id.to_be_bytes());
        for c in [
            self.rect.start_x,
            self.rect.start_y,
            self.rect.end_x,
            self.rect.end_y,
        ] {
            out.extend_from_slice(&c.to_be_bytes());
        }
        out.push(self.layers.len() as u8);
        for (alg, key) in &self.layers {
            out.push(alg.id());
            out.extend_from_slice(&key.0);
        }
        out.extend_from_slice(&self.integrity_digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ObfuscateError> {
        let bad = |m: &str| ObfuscateError::MalformedKey(m.to_string());
        if bytes.len() < HEADER_LEN + 32 {
            return Err(bad("token too short"));
        }
        if bytes[0] != TOKEN_VERSION {
            return Err(bad(&format!("unsupported token version {}", bytes[0])));
        }
        let u32_at = |o: usize| u32::from_be_bytes(bytes[o..o + 4].try_into().unwrap());
        let zone_id = u32_at(1);
        let rect = Rect::new(u32_at(5), u32_at(9), u32_at(13), u32_at(17));
        let count = bytes[21] as usize;
        if count == 0 || count > MAX_LAYERS {
            return Err(bad("layer count out of range"));
        }
        let expected = HEADER_LEN + count * (1 + LAYER_KEY_LEN) + 32;
        if bytes.len() != expected {
            return Err(bad("token length does not match layer count"));
        }
        let mut layers = Vec::with_capacity(count);
        let mut pos = HEADER_LEN;
        for _ in 0..count {
            let alg = Algorithm::try_from(bytes[pos])
                .map_err(|_| bad(&format!("unknown algorithm id {}", bytes[pos])))?;
            let mut key = [0u8; LAYER_KEY_LEN];
            key.copy_from_slice(&bytes[pos + 1..pos + 1 + LAYER_KEY_LEN]);
            layers.push((alg, LayerKey(key)));
            pos += 1 + LAYER_KEY_LEN;
        }
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&bytes[pos..]);
        Ok(Self::new(zone_id, rect, layers, digest))
    }

    /// Base64 `obfuscationKey` text.
    pub fn token(&self) -> String {
        B64.encode(self.to_bytes())
    }

    pub fn from_token(token: &str) -> Result<Self, ObfuscateError> {
        let raw = B64
            .decode(token.trim())
            .map_err(|e| ObfuscateError::MalformedKey(e.to_string()))?;
        Self::from_bytes(&raw)
    }

    pub fn to_response_zone(&self) -> ResponseZone {
        ResponseZone {
            id: self.zone_id,
            coordinates: Coordinates::from(self.rect),
            obfuscation_key: self.token(),
        }
    }
}

/// Owner-held container of every zone record of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterKey {
    pub document_id: String,
    pub salt: [u8; SALT_LEN],
    pub records: Vec<ZoneKeyRecord>,
}

impl MasterKey {
    pub fn new(document_id: &str, salt: [u8; SALT_LEN], records: Vec<ZoneKeyRecord>) -> Self {
        Self {
            document_id: document_id.to_string(),
            salt,
            records,
        }
    }

    pub fn record(&self, zone_id: u32) -> Option<&ZoneKeyRecord> {
        self.records.iter().find(|r| r.zone_id == zone_id)
    }

    pub fn zone_ids(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.zone_id).collect()
    }

    pub fn to_response(&self) -> super::wire::ObfuscationResponse {
        super::wire::ObfuscationResponse {
            document_id: self.document_id.clone(),
            zones: self.records.iter().map(ZoneKeyRecord::to_response_zone).collect(),
        }
    }
}

/// Serialized master key: salt in hex, records as tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MasterKeyDoc {
    document_id: String,
    salt: String,
    zones: Vec<String>,
}

impl Serialize for MasterKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MasterKeyDoc {
            document_id: self.document_id.clone(),
            salt: hex::encode(self.salt),
            zones: self.records.iter().map(ZoneKeyRecord::token).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MasterKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let doc = MasterKeyDoc::deserialize(d)?;
        let salt_vec = hex::decode(&doc.salt).map_err(D::Error::custom)?;
        let salt: [u8; SALT_LEN] = salt_vec
            .try_into()
            .map_err(|_| D::Error::custom("salt must be 16 bytes"))?;
        let records = doc
            .zones
            .iter()
            .map(|t| ZoneKeyRecord::from_token(t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        Ok(MasterKey::new(&doc.document_id, salt, records))
    }
}
