mod common;

use std::collections::BTreeSet;
use std::time::Duration;

use docvault_core::facts::FactStatus;
use docvault_core::orchestrate::events::events_for;
use docvault_core::orchestrate::{DocumentState, NotaryReview, OrchestrateError, ShareMode, Step, WorkerPool};
use docvault_core::store::ContentId;

use common::{card_png, env};

fn approve() -> NotaryReview {
    NotaryReview::Approve {
        corrections: Default::default(),
        coordinates: Default::default(),
    }
}

fn visited_states(e: &common::Env, doc: &str) -> Vec<String> {
    events_for(e.vault.metadata(), doc)
        .unwrap()
        .into_iter()
        .filter(|ev| ev.kind == "state")
        .map(|ev| ev.detail.rsplit(" -> ").next().unwrap().to_string())
        .collect()
}

#[test]
fn happy_path_visits_every_state_in_order() {
    let e = env();
    let id = e.completed(&card_png("id_card", 7));
    assert_eq!(
        visited_states(&e, &id),
        [
            "RECOGNITION_STARTED",
            "FACTS_COLLECTED",
            "NOTARIZATION_AWAITING",
            "NOTARIZATION_STARTED",
            "OBFUSCATION_STARTED",
            "TO_BE_UPLOADED",
            "COMPLETED"
        ]
    );
    let view = e.vault.get_document(&e.owner, &id).unwrap();
    assert!(view.content_id.is_some());
    assert!(view.anchor_block.is_some());
    assert!(!view.zones.is_empty());
    assert_eq!(e.pin.calls(), 1);
    // Originals and intermediates are gone.
    assert_eq!(std::fs::read_dir(e.vault.config().staging_dir()).unwrap().count(), 0);
    assert!(!e.vault.keystore().contains(&format!("documents/{id}/extraction")));
    assert!(e.vault.pending_drafts(&id).unwrap().is_empty());
}

#[test]
fn two_transient_obfuscation_failures_take_three_attempts() {
    let e = env();
    let (id, _) = e.vault.create_document(&e.owner, &card_png("id_card", 8), "card", None).unwrap();
    e.vault.run_to_rest(&id).unwrap();
    e.vault.notary_decide(&e.notary, &id, approve()).unwrap();
    e.vault.inject_faults(Step::Obfuscate, 2);
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::Completed);
    let view = e.vault.document_view(&id).unwrap();
    assert_eq!(view.attempts["obfuscate"], 3);
    assert_eq!(e.sleeper.delays(), [Duration::from_millis(200), Duration::from_millis(400)]);
}

#[test]
fn exhausted_retries_fail_the_document() {
    let e = env();
    let (id, _) = e.vault.create_document(&e.owner, &card_png("driving_license", 9), "card", None).unwrap();
    e.vault.inject_faults(Step::Extract, 5);
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::Failed);
    let view = e.vault.document_view(&id).unwrap();
    assert_eq!(view.attempts["extract"], 5);
    assert!(view.failure.unwrap().contains("after 5 attempts"));
    assert_eq!(std::fs::read_dir(e.vault.config().staging_dir()).unwrap().count(), 0);
    // Terminal states absorb.
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::Failed);
}

#[test]
fn corrupt_png_creates_nothing() {
    let e = env();
    let r = e.vault.create_document(&e.owner, b"\x89PNG\r\n\x1a\nnot really", "bad", None);
    assert!(matches!(r, Err(OrchestrateError::InvalidImage(_))));
    let n: i64 = e.vault.metadata().conn().query_row("SELECT COUNT(*) FROM documents", [], |r| r.get(0)).unwrap();
    assert_eq!(n, 0);
    assert_eq!(std::fs::read_dir(e.vault.config().staging_dir()).unwrap().count(), 0);
}

#[test]
fn idempotency_key_returns_same_document() {
    let e = env();
    let png = card_png("student_card", 1);
    let (a, _) = e.vault.create_document(&e.owner, &png, "card", Some("k-1")).unwrap();
    let (b, _) = e.vault.create_document(&e.owner, &png, "card", Some("k-1")).unwrap();
    let (c, _) = e.vault.create_document(&e.owner, &png, "card", Some("k-2")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unclassified_upload_fails_permanently() {
    let e = env();
    let blank = docvault_core::raster::RasterImage::filled(800, 500, [200, 40, 40]).encode_png();
    let (id, _) = e.vault.create_document(&e.owner, &blank, "nothing", None).unwrap();
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::Failed);
    assert_eq!(e.vault.document_view(&id).unwrap().attempts["extract"], 1);
}

#[test]
fn notary_rejection_fails_and_purges() {
    let e = env();
    let (id, _) = e.vault.create_document(&e.owner, &card_png("id_card", 3), "card", None).unwrap();
    e.vault.run_to_rest(&id).unwrap();
    let queue = e.vault.notary_queue(&e.notary).unwrap();
    assert_eq!(queue.len(), 1);
    assert!(queue[0].fields.iter().all(|f| !f.text.is_empty()));
    assert!(e.vault.notary_queue(&e.owner).is_err());
    let rec = e
        .vault
        .notary_decide(&e.notary, &id, NotaryReview::Reject { reason: "blurry".into() })
        .unwrap();
    assert!(rec.signature.is_none());
    assert_eq!(e.vault.state_of(&id).unwrap(), DocumentState::Failed);
    assert!(!e.vault.keystore().contains(&format!("documents/{id}/extraction")));
    assert!(matches!(
        e.vault.notary_decide(&e.notary, &id, approve()),
        Err(OrchestrateError::StateViolation(_))
    ));
}

#[test]
fn notary_corrections_change_fact_inputs_but_not_metadata() {
    let e = env();
    let (id, _) = e.vault.create_document(&e.owner, &card_png("id_card", 4), "card", None).unwrap();
    e.vault.run_to_rest(&id).unwrap();
    let before = e.vault.pending_drafts(&id).unwrap();
    let rec = e
        .vault
        .notary_decide(
            &e.notary,
            &id,
            NotaryReview::Approve {
                corrections: [("birthdate".to_string(), "01.01.2020".to_string())].into(),
                coordinates: Default::default(),
            },
        )
        .unwrap();
    assert_eq!(rec.corrected_fields, ["birthdate"]);
    assert!(!rec.metadata.contains("01.01.2020"));
    let after = e.vault.pending_drafts(&id).unwrap();
    assert_ne!(before, after);
    assert!(!after.iter().any(|d| d.predicate == "over_18"));
}

#[test]
fn blocked_until_notary_decides() {
    let e = env();
    let (id, _) = e.vault.create_document(&e.owner, &card_png("id_card", 5), "card", None).unwrap();
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::NotarizationAwaiting);
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::NotarizationAwaiting);
    assert_eq!(e.vault.notary_claim(&e.notary, &id).unwrap(), DocumentState::NotarizationStarted);
    assert_eq!(e.vault.run_to_rest(&id).unwrap(), DocumentState::NotarizationStarted);
}

#[test]
fn share_modes() {
    let e = env();
    let id = e.completed(&card_png("id_card", 11));
    let zones: BTreeSet<u32> = e.vault.document_view(&id).unwrap().zones.iter().map(|z| z.zone_id).collect();
    let one: BTreeSet<u32> = zones.iter().take(1).copied().collect();

    let once = e.vault.create_share(&e.owner, &id, &one, ShareMode::MaxAccesses { max_accesses: 1 }).unwrap();
    assert_eq!(once.qr_payload, once.url);
    assert!(once.url.ends_with(&format!("/share/{}", once.uuid)));
    let view = e.vault.resolve_share(&once.uuid).unwrap();
    assert_eq!(view.revealed_zones, one.iter().copied().collect::<Vec<_>>());
    assert!(matches!(e.vault.resolve_share(&once.uuid), Err(OrchestrateError::Expired(_))));

    let until = e.vault.now() + chrono::Duration::seconds(60);
    let timed = e.vault.create_share(&e.owner, &id, &zones, ShareMode::Until { until }).unwrap();
    e.advance_clock(Duration::from_secs(30));
    e.vault.resolve_share(&timed.uuid).unwrap();
    e.advance_clock(Duration::from_secs(31));
    assert!(matches!(e.vault.resolve_share(&timed.uuid), Err(OrchestrateError::Expired(_))));
    assert_eq!(e.vault.share(&timed.uuid).unwrap().accesses_used, 1);

    let open = e.vault.create_share(&e.owner, &id, &zones, ShareMode::Indefinite).unwrap();
    e.vault.resolve_share(&open.uuid).unwrap();
    assert!(e.vault.revoke_share(&e.notary, &open.uuid).is_err());
    e.vault.revoke_share(&e.owner, &open.uuid).unwrap();
    e.vault.revoke_share(&e.owner, &open.uuid).unwrap();
    assert!(matches!(e.vault.resolve_share(&open.uuid), Err(OrchestrateError::Expired(_))));
    assert!(matches!(e.vault.revoke_share(&e.owner, "nope"), Err(OrchestrateError::NotFound(_))));
    assert!(matches!(e.vault.resolve_share("nope"), Err(OrchestrateError::NotFound(_))));

    let bad: BTreeSet<u32> = [999].into();
    assert!(matches!(
        e.vault.create_share(&e.owner, &id, &bad, ShareMode::Indefinite),
        Err(OrchestrateError::InvalidZone(_))
    ));
    assert!(matches!(
        e.vault.create_share(&e.notary, &id, &zones, ShareMode::Indefinite),
        Err(OrchestrateError::Unauthorized(_))
    ));

    // Pruned zones can no longer be offered.
    let first = *zones.iter().next().unwrap();
    e.vault.prune_zones(&e.owner, &id, &[first]).unwrap();
    assert!(matches!(
        e.vault.create_share(&e.owner, &id, &[first].into(), ShareMode::Indefinite),
        Err(OrchestrateError::InvalidZone(_))
    ));
}

#[test]
fn verification_report() {
    let e = env();
    let id = e.completed(&card_png("id_card", 12));
    let cid = e.vault.document_view(&id).unwrap().content_id.unwrap();
    let report = e.vault.verify_public(&cid).unwrap();
    assert!(report.all_green(), "{report:?}");
    assert!(!report.facts.is_empty());

    let share = e
        .vault
        .create_share(&e.owner, &id, &[1].into(), ShareMode::Indefinite)
        .unwrap();
    let view = e.vault.resolve_share(&share.uuid).unwrap();
    use base64::Engine;
    let blob = base64::engine::general_purpose::STANDARD.decode(&view.obfuscated_png).unwrap();
    assert_eq!(ContentId::of(&blob).to_string(), view.content_id);
    assert!(e.vault.verify_public(&share.uuid).unwrap().all_green());

    // Revoking one fact shows up in the report.
    let fact = &report.facts[0];
    e.vault.revoke_fact(&e.owner, &fact.fact_hash, "test").unwrap();
    let r = e.vault.verify_public(&cid).unwrap();
    assert_eq!(r.facts[0].status, FactStatus::Revoked);

    // Swapping the blob in the backing store breaks the hash check.
    let path = e.vault.cas().path_of(&cid.parse().unwrap());
    std::fs::write(path, b"swapped").unwrap();
    let r = e.vault.verify_public(&cid).unwrap();
    assert!(!r.hash_match);
    assert!(r.anchored);

    let unknown = e.vault.verify_public("sha256-".to_string().as_str()).unwrap();
    assert!(unknown.document_id.is_none());
}

#[test]
fn worker_pool_drives_documents() {
    let e = env();
    let pool = WorkerPool::start(e.vault.clone(), 2).unwrap();
    let ids: Vec<String> = (0..3)
        .map(|i| e.vault.create_document(&e.owner, &card_png("student_card", 20 + i), "card", None).unwrap().0)
        .collect();
    let deadline = std::time::Instant::now() + Duration::from_secs(120);
    while ids
        .iter()
        .any(|id| e.vault.state_of(id).unwrap() != DocumentState::NotarizationAwaiting)
    {
        assert!(std::time::Instant::now() < deadline, "workers stalled");
        std::thread::sleep(Duration::from_millis(20));
    }
    for id in &ids {
        e.vault.notary_decide(&e.notary, id, approve()).unwrap();
    }
    while ids.iter().any(|id| e.vault.state_of(id).unwrap() != DocumentState::Completed) {
        assert!(std::time::Instant::now() < deadline, "workers stalled");
        std::thread::sleep(Duration::from_millis(20));
    }
    pool.shutdown();
}

#[test]
fn restart_resumes_from_persisted_state() {
    let e = env();
    let (id, _) = e.vault.create_document(&e.owner, &card_png("id_card", 30), "card", None).unwrap();
    let cfg = e.vault.config().clone();
    drop(e.vault);
    let vault = docvault_core::orchestrate::Vault::open(cfg, Default::default()).unwrap();
    assert_eq!(vault.resumable().unwrap(), std::slice::from_ref(&id));
    assert_eq!(vault.run_to_rest(&id).unwrap(), DocumentState::NotarizationAwaiting);
}
