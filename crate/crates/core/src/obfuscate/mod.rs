//! Reversible, zone-scoped image obfuscation.
//!
//! A zone is a rectangle of an RGB raster plus an ordered list of layers.
//! Each layer key is bound to the owner's root key, the document, the zone
//! geometry and the layer position, so records can be handed out one zone
//! at a time and a pruned zone can never be restored.

mod faces;
mod keys;
mod layers;
mod record;
pub mod wire;

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::raster::{RasterImage, Rect};

pub use faces::{FaceDetector, FixtureFaceDetector, NullFaceDetector, SkinToneDetector};
pub use keys::{
    derive_root, derive_zone_key, LayerKey, RootKey, DEFAULT_PBKDF2_ITERATIONS, LAYER_KEY_LEN,
    SALT_LEN,
};
pub use layers::Algorithm;
pub use record::{MasterKey, ZoneKeyRecord};

/// Upper bound on layers per zone.
pub const MAX_LAYERS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObfuscateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid zone{}: {reason}", zone_id.map(|z| format!(" {z}")).unwrap_or_default())]
    InvalidZone { zone_id: Option<u32>, reason: String },
    #[error("integrity check failed for zone {zone_id}")]
    IntegrityFailure { zone_id: u32 },
    #[error("zone {zone_id} not found in master key")]
    NotFound { zone_id: u32 },
    #[error("malformed obfuscation key: {0}")]
    MalformedKey(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub algorithm: Algorithm,
    pub key_material: Vec<u8>,
}

impl LayerSpec {
    pub fn new(algorithm: Algorithm, key_material: impl Into<Vec<u8>>) -> Self {
        Self {
            algorithm,
            key_material: key_material.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneSpec {
    pub id: u32,
    pub rect: Rect,
    pub layers: Vec<LayerSpec>,
}

impl ZoneSpec {
    pub fn new(id: u32, rect: Rect, layers: Vec<LayerSpec>) -> Self {
        Self { id, rect, layers }
    }
}

fn check_rect(zone_id: u32, rect: &Rect, image: &RasterImage) -> Result<(), ObfuscateError> {
    if rect.is_empty() || !rect.fits(image.width(), image.height()) {
        return Err(ObfuscateError::InvalidZone {
            zone_id: Some(zone_id),
            reason: format!(
                "rect {rect} outside {}x{} image or empty",
                image.width(),
                image.height()
            ),
        });
    }
    Ok(())
}

fn validate_zones(image: &RasterImage, zones: &[ZoneSpec]) -> Result<(), ObfuscateError> {
    let mut seen = HashSet::new();
    for zone in zones {
        if !seen.insert(zone.id) {
            return Err(ObfuscateError::InvalidZone {
                zone_id: Some(zone.id),
                reason: "duplicate zone id".into(),
            });
        }
        check_rect(zone.id, &zone.rect, image)?;
        if zone.layers.is_empty() || zone.layers.len() > MAX_LAYERS {
            return Err(ObfuscateError::InvalidZone {
                zone_id: Some(zone.id),
                reason: format!("layer count {} not in 1..={MAX_LAYERS}", zone.layers.len()),
            });
        }
        if zone.layers.iter().any(|l| l.key_material.is_empty()) {
            return Err(ObfuscateError::InvalidZone {
                zone_id: Some(zone.id),
                reason: "layer key material must not be empty".into(),
            });
        }
    }
    for (i, a) in zones.iter().enumerate() {
        for b in &zones[i + 1..] {
            if a.rect.intersects(&b.rect) {
                return Err(ObfuscateError::InvalidZone {
                    zone_id: Some(b.id),
                    reason: format!("overlaps zone {}", a.id),
                });
            }
        }
    }
    Ok(())
}

/// Applies every zone's layers in listed order.
///
/// Pixels outside the zones are copied unchanged. The returned master key
/// holds one record per zone, in request order.
pub fn obfuscate(
    image: &RasterImage,
    zones: &[ZoneSpec],
    root: &RootKey,
    document_id: &str,
) -> Result<(RasterImage, MasterKey), ObfuscateError> {
    validate_zones(image, zones)?;
    let mut out = image.clone();
    let mut records = Vec::with_capacity(zones.len());
    for zone in zones {
        let mut bytes = image.zone_bytes(&zone.rect);
        let digest = crate::sha256(&bytes);
        let mut layer_keys = Vec::with_capacity(zone.layers.len());
        for (index, layer) in zone.layers.iter().enumerate() {
            let key = derive_zone_key(root, document_id, zone, index)?;
            layers::apply(layer.algorithm, &key, zone.id, &mut bytes);
            layer_keys.push((layer.algorithm, key));
        }
        out.write_zone(&zone.rect, &bytes);
        records.push(ZoneKeyRecord::new(zone.id, zone.rect, layer_keys, digest));
    }
    Ok((out, MasterKey::new(document_id, *root.salt(), records)))
}

/// Restores the zones named by `records`, leaving every other byte alone.
///
/// All records are inverted and checked against their digests before any
/// byte of the output is written, so a single bad key yields an error and
/// no partially restored image.
pub fn deobfuscate(
    image: &RasterImage,
    records: &[ZoneKeyRecord],
) -> Result<RasterImage, ObfuscateError> {
    let mut seen = HashSet::new();
    let mut restored = Vec::with_capacity(records.len());
    for rec in records {
        if !seen.insert(rec.zone_id) {
            return Err(ObfuscateError::InvalidZone {
                zone_id: Some(rec.zone_id),
                reason: "record supplied twice".into(),
            });
        }
        check_rect(rec.zone_id, &rec.rect, image)?;
        let mut bytes = image.zone_bytes(&rec.rect);
        for (alg, key) in rec.layers.iter().rev() {
            layers::invert(*alg, key, rec.zone_id, &mut bytes);
        }
        if crate::sha256(&bytes) != rec.integrity_digest {
            return Err(ObfuscateError::IntegrityFailure {
                zone_id: rec.zone_id,
            });
        }
        restored.push((rec.rect, bytes));
    }
    let mut out = image.clone();
    for (rect, bytes) in restored {
        out.write_zone(&rect, &bytes);
    }
    Ok(out)
}

/// Returns a copy of `master` without the listed zones.
pub fn prune(master: &MasterKey, zone_ids: &BTreeSet<u32>) -> Result<MasterKey, ObfuscateError> {
    for id in zone_ids {
        if master.record(*id).is_none() {
            return Err(ObfuscateError::NotFound { zone_id: *id });
        }
    }
    let mut pruned = master.clone();
    pruned.records.retain(|r| !zone_ids.contains(&r.zone_id));
    Ok(pruned)
}

/// Runs the given detector; kept as a free function so callers can treat
/// detection like the other zone operations.
pub fn detect_faces(detector: &dyn FaceDetector, image: &RasterImage) -> Vec<Rect> {
    detector.detect(image)
}
