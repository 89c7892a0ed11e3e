//! Users, salted password hashes and bearer sessions.

use std::collections::BTreeSet;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use rand::rngs::OsRng;
use rand::RngCore;
use rusqlite::{params, OptionalExtension};
use serde::Serialize;
use subtle::ConstantTimeEq;

use super::OrchestrateError;
use crate::store::{AccessToken, Metadata, Scope};

const HASH_TAG: &str = "pbkdf2-sha256";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Principal {
    pub user_id: String,
    pub username: String,
    pub scopes: BTreeSet<Scope>,
}

impl Principal {
    pub fn has(&self, scope: Scope) -> bool {
        self.scopes.contains(&scope) || self.scopes.contains(&Scope::Admin)
    }

    pub fn require(&self, scope: Scope) -> Result<(), OrchestrateError> {
        if self.has(scope) {
            Ok(())
        } else {
            Err(OrchestrateError::Unauthorized(format!("{} scope required", scope)))
        }
    }

    pub fn is_admin(&self) -> bool {
        self.scopes.contains(&Scope::Admin)
    }

    pub fn keystore_token(&self) -> AccessToken {
        AccessToken {
            principal: self.user_id.clone(),
            scopes: self.scopes.clone(),
        }
    }
}

/// `pbkdf2-sha256$<iterations>$<salt hex>$<hash hex>`
pub fn hash_password(password: &str, iterations: u32) -> String {
    let mut salt = [0u8; 16];
    OsRng.fill_bytes(&mut salt);
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<sha2::Sha256>(password.as_bytes(), &salt, iterations.max(1), &mut out);
    format!("{HASH_TAG}${}${}${}", iterations.max(1), hex::encode(salt), hex::encode(out))
}

pub fn verify_password(password: &str, stored: &str) -> bool {
    let parts: Vec<&str> = stored.split('$').collect();
    let [tag, iters, salt, hash] = parts[..] else {
        return false;
    };
    let (Ok(iters), Ok(salt), Ok(hash)) = (iters.parse::<u32>(), hex::decode(salt), hex::decode(hash)) else {
        return false;
    };
    if tag != HASH_TAG || hash.len() != 32 {
        return false;
    }
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<sha2::Sha256>(password.as_bytes(), &salt, iters, &mut out);
    out.ct_eq(hash.as_slice()).into()
}

fn scopes_to_text(scopes: &BTreeSet<Scope>) -> String {
    scopes.iter().map(Scope::to_string).collect::<Vec<_>>().join(",")
}

fn scopes_from_text(s: &str) -> BTreeSet<Scope> {
    s.split(',').filter_map(|p| p.trim().parse().ok()).collect()
}

pub fn create_user(
    db: &Metadata,
    username: &str,
    password: &str,
    scopes: &[Scope],
    iterations: u32,
    now: DateTime<Utc>,
) -> Result<Principal, OrchestrateError> {
    if username.trim().is_empty() || password.len() < 8 {
        return Err(OrchestrateError::InvalidInput(
            "username must be non-empty and password at least 8 characters".into(),
        ));
    }
    let scopes: BTreeSet<Scope> = scopes.iter().copied().collect();
    let id = uuid::Uuid::new_v4().to_string();
    let hash = hash_password(password, iterations);
    let c = db.conn();
    let taken: bool = c
        .query_row("SELECT 1 FROM users WHERE username = ?1", [username], |_| Ok(()))
        .optional()?
        .is_some();
    if taken {
        return Err(OrchestrateError::Conflict(format!("username {username:?} is taken")));
    }
    c.execute(
        "INSERT INTO users (id, username, password_hash, scopes, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
        params![id, username, hash, scopes_to_text(&scopes), now.timestamp_millis()],
    )?;
    Ok(Principal {
        user_id: id,
        username: username.to_string(),
        scopes,
    })
}

pub fn find_user(db: &Metadata, user_id: &str) -> Result<Option<Principal>, OrchestrateError> {
    Ok(db
        .conn()
        .query_row("SELECT username, scopes FROM users WHERE id = ?1", [user_id], |r| {
            Ok(Principal {
                user_id: user_id.to_string(),
                username: r.get(0)?,
                scopes: scopes_from_text(&r.get::<_, String>(1)?),
            })
        })
        .optional()?)
}

/// Checks the password and opens a session. Returns the bearer token,
/// which is stored only as its SHA-256.
pub fn login(
    db: &Metadata,
    username: &str,
    password: &str,
    ttl_secs: i64,
    now: DateTime<Utc>,
) -> Result<(String, Principal), OrchestrateError> {
    let row: Option<(String, String, String)> = db
        .conn()
        .query_row(
            "SELECT id, password_hash, scopes FROM users WHERE username = ?1",
            [username],
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
        )
        .optional()?;
    let denied = || OrchestrateError::Unauthorized("bad username or password".into());
    let (id, hash, scopes) = row.ok_or_else(denied)?;
    if !verify_password(password, &hash) {
        return Err(denied());
    }
    let mut raw = [0u8; 32];
    OsRng.fill_bytes(&mut raw);
    let token = URL_SAFE_NO_PAD.encode(raw);
    db.conn().execute(
        "INSERT INTO sessions (token_hash, user_id, expires_at) VALUES (?1, ?2, ?3)",
        params![crate::sha256_hex(token.as_bytes()), id, now.timestamp_millis() + ttl_secs * 1000],
    )?;
    Ok((
        token,
        Principal {
            user_id: id,
            username: username.to_string(),
            scopes: scopes_from_text(&scopes),
        },
    ))
}

pub fn authenticate(db: &Metadata, token: &str, now: DateTime<Utc>) -> Result<Principal, OrchestrateError> {
    let row: Option<(String, String, String, i64)> = db
        .conn()
        .query_row(
            "SELECT u.id, u.username, u.scopes, s.expires_at FROM sessions s JOIN users u ON u.id = s.user_id
             WHERE s.token_hash = ?1",
            [crate::sha256_hex(token.as_bytes())],
            |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
        )
        .optional()?;
    match row {
        Some((id, username, scopes, exp)) if now.timestamp_millis() < exp => Ok(Principal {
            user_id: id,
            username,
            scopes: scopes_from_text(&scopes),
        }),
        Some(_) => Err(OrchestrateError::Unauthorized("session expired".into())),
        None => Err(OrchestrateError::Unauthorized("unknown session".into())),
    }
}

pub fn logout(db: &Metadata, token: &str) -> Result<(), OrchestrateError> {
    db.conn()
        .execute("DELETE FROM sessions WHERE token_hash = ?1", [crate::sha256_hex(token.as_bytes())])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn password_hash_round_trip() {
        let h = hash_password("correct horse", 10);
        assert!(h.starts_with("pbkdf2-sha256$10$"));
        assert!(verify_password("correct horse", &h));
        assert!(!verify_password("correct hors", &h));
        assert!(!verify_password("x", "garbage"));
        assert_ne!(hash_password("correct horse", 10), h);
    }

    #[test]
    fn sessions_expire() {
        let db = Metadata::in_memory().unwrap();
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let u = create_user(&db, "ana", "password1", &[Scope::Owner], 10, t0).unwrap();
        assert!(matches!(
            create_user(&db, "ana", "password2", &[Scope::Owner], 10, t0),
            Err(OrchestrateError::Conflict(_))
        ));
        assert!(login(&db, "ana", "wrong-pass", 60, t0).is_err());
        let (tok, p) = login(&db, "ana", "password1", 60, t0).unwrap();
        assert_eq!(p, u);
        assert_eq!(authenticate(&db, &tok, t0).unwrap().user_id, u.user_id);
        assert!(authenticate(&db, &tok, t0 + chrono::Duration::seconds(61)).is_err());
        logout(&db, &tok).unwrap();
        assert!(authenticate(&db, &tok, t0).is_err());
    }
}
