//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use docvault_core::clock::{ManualClock, RecordingSleeper};
use docvault_core::extract::corpus;
use docvault_core::orchestrate::{Config, DocumentState, NotaryReview, Principal, Vault, VaultDeps};
use docvault_core::store::{PinTransport, Scope, StubTransport};
use tempfile::TempDir;

pub const START_MS: i64 = 1_750_000_000_000;

pub struct Env {
    pub dir: TempDir,
    pub clock: Arc<ManualClock>,
    pub sleeper: Arc<RecordingSleeper>,
    pub pin: Arc<StubTransport>,
    pub vault: Arc<Vault>,
    pub owner: Principal,
    pub notary: Principal,
    pub admin: Principal,
}

pub fn config(dir: &std::path::Path) -> Config {
    Config {
        data_dir: dir.to_path_buf(),
        pbkdf2_iterations: 1_000,
        password_iterations: 1_000,
        master_passphrase: Some("test passphrase".into()),
        seal_interval_ms: 5,
        inclusion_timeout_ms: 5_000,
        ..Config::default()
    }
}

pub fn env() -> Env {
    env_with(|_| {})
}

pub fn env_with(tweak: impl FnOnce(&mut Config)) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    tweak(&mut cfg);
    let clock = Arc::new(ManualClock::at_millis(START_MS));
    let sleeper = Arc::new(RecordingSleeper::new());
    let pin = Arc::new(StubTransport::echo());
    let vault = Arc::new(
        Vault::open(
            cfg,
            VaultDeps {
                clock: clock.clone(),
                sleeper: sleeper.clone(),
                pin_transport: Some(pin.clone() as Arc<dyn PinTransport>),
                ..VaultDeps::default()
            },
        )
        .unwrap(),
    );
    let owner = vault.register_user("owner", "owner-password", &[Scope::Owner]).unwrap();
    let notary = vault.register_user("notary", "notary-password", &[Scope::Notary]).unwrap();
    let admin = vault.register_user("admin", "admin-password", &[Scope::Admin]).unwrap();
    vault.register_notary(&admin, &notary.user_id).unwrap();
    Env {
        dir,
        clock,
        sleeper,
        pin,
        vault,
        owner,
        notary,
        admin,
    }
}

/// PNG of corpus document `seed` for `template`.
pub fn card_png(template: &str, seed: u64) -> Vec<u8> {
    corpus::document(&corpus::layout(template).unwrap(), seed).image.encode_png()
}

impl Env {
    /// Uploads, approves and drives a document to COMPLETED.
    pub fn completed(&self, png: &[u8]) -> String {
        let (id, _) = self.vault.create_document(&self.owner, png, "card", None).unwrap();
        assert_eq!(self.vault.run_to_rest(&id).unwrap(), DocumentState::NotarizationAwaiting);
        self.vault
            .notary_decide(&self.notary, &id, NotaryReview::Approve { corrections: Default::default(), coordinates: Default::default() })
            .unwrap();
        assert_eq!(self.vault.run_to_rest(&id).unwrap(), DocumentState::Completed);
        id
    }

    pub fn advance_clock(&self, d: Duration) {
        self.clock.advance(d);
    }
}
