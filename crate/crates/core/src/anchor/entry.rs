//! Ledger entries and private payload encryption.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use chrono::{DateTime, Utc};
use hkdf::Hkdf;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use x25519_dalek::{EphemeralSecret, PublicKey, StaticSecret};
use zeroize::Zeroizing;

use super::AnchorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    Document,
    Fact,
    NotarySignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Visibility {
    Public,
    Private,
}

/// Entry payload key wrapped for one member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrappedKey {
    pub member_id: String,
    pub ephemeral_public: String,
    pub nonce: String,
    pub wrapped_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivatePayload {
    pub nonce: String,
    pub ciphertext: String,
    pub recipients: Vec<WrappedKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    /// Lowercase hex SHA-256.
    pub content_hash: String,
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_payload: Option<PrivatePayload>,
    pub submitter: String,
    pub submitted_at: DateTime<Utc>,
}

/// What a submitter hands to the ledger.
#[derive(Debug, Clone)]
pub struct EntryDraft {
    pub kind: EntryKind,
    pub content_hash: String,
    pub submitter: String,
    /// Plaintext and recipients for a private entry.
    pub private: Option<(Vec<u8>, Vec<MemberPublic>)>,
}

impl EntryDraft {
    pub fn public(kind: EntryKind, content_hash: &str, submitter: &str) -> Self {
        Self {
            kind,
            content_hash: content_hash.to_string(),
            submitter: submitter.to_string(),
            private: None,
        }
    }

    pub fn private(kind: EntryKind, content_hash: &str, submitter: &str, payload: Vec<u8>, members: Vec<MemberPublic>) -> Self {
        Self {
            kind,
            content_hash: content_hash.to_string(),
            submitter: submitter.to_string(),
            private: Some((payload, members)),
        }
    }
}

pub fn valid_hash_hex(h: &str) -> bool {
    h.len() == 64 && h.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl AnchorEntry {
    /// Canonical JSON bytes; the entry hash is taken over exactly these.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        crate::canonical_json(&serde_json::to_value(self).expect("entry serializes")).into_bytes()
    }

    /// The entry as any non-member sees it: hash and metadata only.
    pub fn public_view(&self) -> AnchorEntry {
        AnchorEntry {
            private_payload: None,
            ..self.clone()
        }
    }
}

/// A participant able to read private entries.
pub struct MemberKey {
    pub id: String,
    secret: StaticSecret,
}

impl std::fmt::Debug for MemberKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemberKey").field("id", &self.id).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberPublic {
    pub id: String,
    pub public: [u8; 32],
}

impl MemberKey {
    pub fn generate(id: &str) -> Self {
        Self {
            id: id.to_string(),
            secret: StaticSecret::random_from_rng(OsRng),
        }
    }

    pub fn from_bytes(id: &str, bytes: [u8; 32]) -> Self {
        Self {
            id: id.to_string(),
            secret: StaticSecret::from(bytes),
        }
    }

    pub fn public(&self) -> MemberPublic {
        MemberPublic {
            id: self.id.clone(),
            public: PublicKey::from(&self.secret).to_bytes(),
        }
    }
}

fn wrap_key(shared: &[u8; 32], eph: &[u8; 32], member: &[u8; 32]) -> Zeroizing<[u8; 32]> {
    let mut info = b"docvault-anchor-wrap".to_vec();
    info.extend_from_slice(eph);
    info.extend_from_slice(member);
    let mut out = Zeroizing::new([0u8; 32]);
    Hkdf::<Sha256>::new(None, shared)
        .expand(&info, out.as_mut())
        .expect("32 bytes is a valid HKDF length");
    out
}

fn random<const N: usize>() -> [u8; N] {
    let mut b = [0u8; N];
    OsRng.fill_bytes(&mut b);
    b
}

fn crypto(msg: &str) -> AnchorError {
    AnchorError::Crypto(msg.to_string())
}

/// Encrypts `plaintext` under a fresh entry key and wraps that key for each
/// member. The content hash is bound as associated data.
pub fn seal_payload(plaintext: &[u8], content_hash: &str, members: &[MemberPublic]) -> Result<PrivatePayload, AnchorError> {
    if members.is_empty() {
        return Err(AnchorError::InvalidEntry("private entry needs at least one member".into()));
    }
    let entry_key = Zeroizing::new(random::<32>());
    let nonce = random::<12>();
    let ct = Aes256Gcm::new_from_slice(entry_key.as_ref())
        .expect("32-byte key")
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: content_hash.as_bytes() })
        .map_err(|_| crypto("payload encryption failed"))?;
    let mut recipients = Vec::with_capacity(members.len());
    for m in members {
        let eph = EphemeralSecret::random_from_rng(OsRng);
        let eph_pub = PublicKey::from(&eph).to_bytes();
        let shared = eph.diffie_hellman(&PublicKey::from(m.public));
        let kek = wrap_key(shared.as_bytes(), &eph_pub, &m.public);
        let wnonce = random::<12>();
        let wrapped = Aes256Gcm::new_from_slice(kek.as_ref())
            .expect("32-byte key")
            .encrypt(Nonce::from_slice(&wnonce), Payload { msg: entry_key.as_ref(), aad: m.id.as_bytes() })
            .map_err(|_| crypto("key wrap failed"))?;
        recipients.push(WrappedKey {
            member_id: m.id.clone(),
            ephemeral_public: hex::encode(eph_pub),
            nonce: hex::encode(wnonce),
            wrapped_key: hex::encode(wrapped),
        });
    }
    Ok(PrivatePayload {
        nonce: hex::encode(nonce),
        ciphertext: hex::encode(ct),
        recipients,
    })
}

fn unhex<const N: usize>(s: &str) -> Result<[u8; N], AnchorError> {
    hex::decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| crypto("malformed payload field"))
}

/// Decrypts a private entry for `member`. Fails for non-members and for any
/// tampering with the ciphertext or wrapped key.
pub fn open_payload(entry: &AnchorEntry, member: &MemberKey) -> Result<Vec<u8>, AnchorError> {
    let p = entry
        .private_payload
        .as_ref()
        .ok_or_else(|| crypto("entry has no private payload"))?;
    let me = member.public();
    let w = p
        .recipients
        .iter()
        .find(|w| w.member_id == member.id)
        .ok_or_else(|| crypto("not a member of this entry"))?;
    let eph: [u8; 32] = unhex(&w.ephemeral_public)?;
    let shared = member.secret.diffie_hellman(&PublicKey::from(eph));
    let kek = wrap_key(shared.as_bytes(), &eph, &me.public);
    let wnonce: [u8; 12] = unhex(&w.nonce)?;
    let wrapped = hex::decode(&w.wrapped_key).map_err(|_| crypto("malformed wrapped key"))?;
    let entry_key = Zeroizing::new(
        Aes256Gcm::new_from_slice(kek.as_ref())
            .expect("32-byte key")
            .decrypt(Nonce::from_slice(&wnonce), Payload { msg: &wrapped, aad: member.id.as_bytes() })
            .map_err(|_| crypto("key unwrap failed"))?,
    );
    let nonce: [u8; 12] = unhex(&p.nonce)?;
    let ct = hex::decode(&p.ciphertext).map_err(|_| crypto("malformed ciphertext"))?;
    Aes256Gcm::new_from_slice(&entry_key)
        .map_err(|_| crypto("bad entry key"))?
        .decrypt(Nonce::from_slice(&nonce), Payload { msg: &ct, aad: entry.content_hash.as_bytes() })
        .map_err(|_| crypto("payload decryption failed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn entry(payload: Option<PrivatePayload>) -> AnchorEntry {
        AnchorEntry {
            entry_id: "e1".into(),
            kind: EntryKind::Document,
            content_hash: "ab".repeat(32),
            visibility: if payload.is_some() { Visibility::Private } else { Visibility::Public },
            private_payload: payload,
            submitter: "owner".into(),
            submitted_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn members_decrypt_non_members_fail() {
        let alice = MemberKey::generate("alice");
        let bob = MemberKey::generate("bob");
        let eve = MemberKey::generate("eve");
        let p = seal_payload(b"document details", &"ab".repeat(32), &[alice.public(), bob.public()]).unwrap();
        let e = entry(Some(p));
        assert_eq!(open_payload(&e, &alice).unwrap(), b"document details");
        assert_eq!(open_payload(&e, &bob).unwrap(), b"document details");
        assert!(open_payload(&e, &eve).is_err());
        // Eve claiming Bob's id still cannot unwrap.
        let fake = MemberKey::from_bytes("bob", [9u8; 32]);
        assert!(open_payload(&e, &fake).is_err());
    }

    #[test]
    fn public_view_has_no_payload_bytes() {
        let alice = MemberKey::generate("alice");
        let p = seal_payload(b"secret", &"ab".repeat(32), &[alice.public()]).unwrap();
        let ct = p.ciphertext.clone();
        let e = entry(Some(p));
        let public = String::from_utf8(e.public_view().canonical_bytes()).unwrap();
        assert!(!public.contains(&ct));
        assert!(!public.contains("private_payload"));
        assert!(public.contains(&"ab".repeat(32)));
    }

    #[test]
    fn tampered_ciphertext_rejected() {
        let alice = MemberKey::generate("alice");
        let mut p = seal_payload(b"secret", &"ab".repeat(32), &[alice.public()]).unwrap();
        let mut ct = hex::decode(&p.ciphertext).unwrap();
        ct[0] ^= 1;
        p.ciphertext = hex::encode(ct);
        assert!(open_payload(&entry(Some(p)), &alice).is_err());
    }

    #[test]
    fn canonical_entry_bytes() {
        let e = entry(None);
        assert_eq!(
            String::from_utf8(e.canonical_bytes()).unwrap(),
            format!(
                r#"{{"content_hash":"{}","entry_id":"e1","kind":"document","submitted_at":"2024-01-01T00:00:00Z","submitter":"owner","visibility":"public"}}"#,
                "ab".repeat(32)
            )
        );
    }

    #[test]
    fn hash_hex_validation() {
        assert!(valid_hash_hex(&"0f".repeat(32)));
        assert!(!valid_hash_hex(&"0F".repeat(32)));
        assert!(!valid_hash_hex("abc"));
    }
}
