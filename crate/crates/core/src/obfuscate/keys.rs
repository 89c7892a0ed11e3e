//! Passphrase root derivation and per-layer key binding.

use std::fmt;

use hmac::{Hmac, Mac};
use sha2::Sha256;
use zeroize::Zeroize;

use super::{ObfuscateError, ZoneSpec};

pub const DEFAULT_PBKDF2_ITERATIONS: u32 = 100_000;
pub const SALT_LEN: usize = 16;
pub const LAYER_KEY_LEN: usize = 16;

type HmacSha256 = Hmac<Sha256>;

/// A user's 32-byte root secret together with the salt it was derived with.
#[derive(Clone)]
pub struct RootKey {
    key: [u8; 32],
    salt: [u8; SALT_LEN],
}

impl RootKey {
    pub fn from_parts(key: [u8; 32], salt: [u8; SALT_LEN]) -> Self {
        Self { key, salt }
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.key
    }

    pub fn salt(&self) -> &[u8; SALT_LEN] {
        &self.salt
    }
}

impl Drop for RootKey {
    fn drop(&mut self) {
        self.key.zeroize();
    }
}

impl fmt::Debug for RootKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RootKey")
            .field("salt", &hex::encode(self.salt))
            .finish_non_exhaustive()
    }
}

/// 128-bit key for one layer of one zone.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct LayerKey(pub [u8; LAYER_KEY_LEN]);

impl fmt::Debug for LayerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("LayerKey(..)")
    }
}

/// PBKDF2-HMAC-SHA256 with a 32-byte output.
pub fn derive_root(
    passphrase: &str,
    salt: &[u8; SALT_LEN],
    iterations: u32,
) -> Result<RootKey, ObfuscateError> {
    if passphrase.is_empty() {
        return Err(ObfuscateError::InvalidInput("passphrase must not be empty".into()));
    }
    if iterations == 0 {
        return Err(ObfuscateError::InvalidInput("iterations must be at least 1".into()));
    }
    let mut key = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, iterations, &mut key);
    Ok(RootKey { key, salt: *salt })
}

/// First 16 bytes of
/// `HMAC-SHA256(root, len32(doc) ‖ doc ‖ zone_id32 ‖ sx32 ‖ sy32 ‖ ex32 ‖ ey32 ‖ layer_index32 ‖ key_material)`,
/// all integers big-endian.
pub fn derive_zone_key(
    root: &RootKey,
    document_id: &str,
    zone: &ZoneSpec,
    layer_index: usize,
) -> Result<LayerKey, ObfuscateError> {
    let layer = zone.layers.get(layer_index).ok_or_else(|| ObfuscateError::InvalidZone {
        zone_id: Some(zone.id),
        reason: format!(
            "layer index {layer_index} out of range for {} layers",
            zone.layers.len()
        ),
    })?;
    let mut mac = HmacSha256::new_from_slice(&root.key).expect("HMAC accepts any key length");
    mac.update(&(document_id.len() as u32).to_be_bytes());
    mac.update(document_id.as_bytes());
    mac.update(&zone.id.to_be_bytes());
    for c in [
        zone.rect.start_x,
        zone.rect.start_y,
        zone.rect.end_x,
        zone.rect.end_y,
    ] {
        mac.update(&c.to_be_bytes());
    }
    mac.update(&(layer_index as u32).to_be_bytes());
    mac.update(&layer.key_material);
    let full = mac.finalize().into_bytes();
    let mut key = [0u8; LAYER_KEY_LEN];
    key.copy_from_slice(&full[..LAYER_KEY_LEN]);
    Ok(LayerKey(key))
}

pub(crate) fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}
