//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Run with `cargo test -p docvault-core --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use base64::Engine as _;
use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use jsonschema::JSONSchema;
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use serde::Deserialize;
use serde_json::{json, Value};

use docvault_core::anchor::chain::verify_chain_bytes;
use docvault_core::anchor::{prove_inclusion, run_harness, verify_inclusion, ChainVerdict, EntryDraft, EntryKind, HarnessConfig, Ledger};
use docvault_core::clock::ManualClock;
use docvault_core::extract::{cer, corpus, extract, field_accuracy, rase, ssim, ExtractionResult, GlyphOcr};
use docvault_core::facts::{cnp, derive_facts, RuleSet};
use docvault_core::obfuscate::wire::{DeobfuscationRequest, ObfuscationRequest};
use docvault_core::obfuscate::{
    deobfuscate, obfuscate, Algorithm, LayerSpec, MasterKey, NullFaceDetector, ObfuscateError, RootKey, ZoneSpec,
};
use docvault_core::orchestrate::{OrchestrateError, ShareMode};
use docvault_core::raster::{RasterImage, Rect};
use docvault_core::schemas;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- obfuscation cases -----------------------------------------------

struct Case {
    image: RasterImage,
    zones: Vec<ZoneSpec>,
    root: RootKey,
}

/// Random image up to 512×512 with 1..=max_zones disjoint zones of at
/// least 16 bytes, each with 1..=3 layers.
fn random_case(rng: &mut StdRng, min_zones: usize, max_zones: usize) -> Case {
    let (w, h) = (rng.gen_range(16..=512u32), rng.gen_range(16..=512u32));
    let mut data = vec![0u8; (w * h * 3) as usize];
    rng.fill_bytes(&mut data);
    let want = rng.gen_range(min_zones..=max_zones);
    let mut rects: Vec<Rect> = Vec::new();
    while rects.len() < want {
        let (zw, zh) = (rng.gen_range(2..=w.min(96)), rng.gen_range(3..=h.min(96)));
        let (x, y) = (rng.gen_range(0..=w - zw), rng.gen_range(0..=h - zh));
        let r = Rect::new(x, y, x + zw, y + zh);
        if rects.iter().all(|o| !o.intersects(&r)) {
            rects.push(r);
        }
    }
    let zones = rects
        .into_iter()
        .enumerate()
        .map(|(i, rect)| {
            let layers = (0..rng.gen_range(1..=3))
                .map(|_| {
                    let alg = Algorithm::ALL[rng.gen_range(0..3)];
                    let mut material = vec![0u8; rng.gen_range(1..24)];
                    rng.fill_bytes(&mut material);
                    LayerSpec::new(alg, material)
                })
                .collect();
            ZoneSpec::new(i as u32 + 1, rect, layers)
        })
        .collect();
    let mut key = [0u8; 32];
    let mut salt = [0u8; 16];
    rng.fill_bytes(&mut key);
    rng.fill_bytes(&mut salt);
    Case {
        image: RasterImage::new(w, h, data).unwrap(),
        zones,
        root: RootKey::from_parts(key, salt),
    }
}

fn obfuscation_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x0b5c);
    let start = Instant::now();
    let mut failures = 0;
    let mut algs = BTreeSet::new();
    for i in 0..1000 {
        let case = random_case(&mut rng, 1, 10);
        algs.extend(case.zones.iter().flat_map(|z| z.layers.iter().map(|l| l.algorithm.id())));
        let (obf, master) = obfuscate(&case.image, &case.zones, &case.root, &format!("case-{i}")).unwrap();
        if deobfuscate(&obf, &master.records).ok().as_ref() != Some(&case.image) {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        failures == 0 && secs < 60.0 && algs.len() == 3,
        format!("1000 cases, {failures} mismatches, algorithms {algs:?}, {secs:.1} s (limit 60 s)"),
    )
}

fn partial_disclosure() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xd15c);
    let (mut subset_bad, mut wrong_key_missed) = (0, 0);
    for i in 0..1000 {
        let case = random_case(&mut rng, 2, 10);
        let (obf, master) = obfuscate(&case.image, &case.zones, &case.root, &format!("case-{i}")).unwrap();
        let n = master.records.len();
        let take = rng.gen_range(1..n);
        let mut ids: Vec<u32> = master.zone_ids();
        for k in (1..ids.len()).rev() {
            ids.swap(k, rng.gen_range(0..=k));
        }
        let chosen: BTreeSet<u32> = ids[..take].iter().copied().collect();
        let records: Vec<_> = master.records.iter().filter(|r| chosen.contains(&r.zone_id)).cloned().collect();
        // Keys travel through the wire format, as a relying party gets them.
        let wire = serde_json::to_string(&DeobfuscationRequest::from_records(&records)).unwrap();
        let records = serde_json::from_str::<DeobfuscationRequest>(&wire).unwrap().to_records().unwrap();
        let out = deobfuscate(&obf, &records).unwrap();
        let exact = case.zones.iter().all(|z| {
            let want = if chosen.contains(&z.id) { &case.image } else { &obf };
            out.zone_bytes(&z.rect) == want.zone_bytes(&z.rect)
        });
        let outside_same = {
            let mut a = out.clone();
            let mut b = case.image.clone();
            for z in &case.zones {
                a.fill_rect(&z.rect, [0, 0, 0]);
                b.fill_rect(&z.rect, [0, 0, 0]);
            }
            a == b
        };
        if !exact || !outside_same {
            subset_bad += 1;
        }

        let mut wrong = records.clone();
        let victim = rng.gen_range(0..wrong.len());
        let layer = rng.gen_range(0..wrong[victim].layers.len());
        wrong[victim].layers[layer].1 .0[rng.gen_range(0..16)] ^= 1 << rng.gen_range(0..8);
        let zone_id = wrong[victim].zone_id;
        if deobfuscate(&obf, &wrong) != Err(ObfuscateError::IntegrityFailure { zone_id }) {
            wrong_key_missed += 1;
        }
    }
    ensure(
        subset_bad == 0 && wrong_key_missed == 0,
        format!("1000 cases: {subset_bad} inexact subset restores, {wrong_key_missed} wrong keys not rejected"),
    )
}

// ---- wire formats -----------------------------------------------------

fn compile(text: &str) -> JSONSchema {
    let schema: Value = serde_json::from_str(text).unwrap();
    JSONSchema::options().should_validate_formats(true).compile(&schema).unwrap()
}

fn wire_conformance() -> Outcome {
    let extractor = compile(schemas::EXTRACTOR_RESPONSE);
    let request = compile(schemas::OBFUSCATOR_REQUEST);
    let response = compile(schemas::OBFUSCATOR_RESPONSE);
    let deob = compile(schemas::DEOBFUSCATOR_REQUEST);
    let mut failed = Vec::new();
    let mut total = 0;
    let mut check = |name: &str, ok: bool| {
        total += 1;
        if !ok {
            failed.push(name.to_string());
        }
    };

    let coords = json!({"start_x": 1427, "start_y": 792, "end_x": 2254, "end_y": 924});
    let listing_extractor = json!({"document_type": "id_card", "pages": [{"id": "c690c529-771f-4129-b4e5-a775a076b888",
        "fields": [{"name": "cnp", "text": "197XXXXXXXXXX", "sensitive": true, "confidence_score": 0.94, "coordinates": coords}]}]});
    let listing_request = json!({"zones": [{"id": 1, "coordinates": coords,
        "layers": [{"algorithm_id": 1, "key": "MY_SECRET_KEY"}]}]});
    let listing_response = json!({"document_id": "c690c529-771f-4129-b4e5-a775a076b888",
        "zones": [{"id": 1, "coordinates": coords, "obfuscationKey": "eJxrYJnKz8gABj1i2amVekAcX8CMr2BrMlTNBun1E7R6OFOzs8vSsnMSXoAlzdk6g=="}]});
    check("listing extractor", extractor.is_valid(&listing_extractor));
    check("listing obfuscator request", request.is_valid(&listing_request));
    check("listing obfuscator response", response.is_valid(&listing_response));
    check("typed extractor decode", serde_json::from_value::<ExtractionResult>(listing_extractor.clone()).is_ok());
    check("typed request decode", serde_json::from_value::<ObfuscationRequest>(listing_request.clone()).is_ok());

    // Field names are exact: renames and extras are refused.
    let mut renamed = listing_response.clone();
    let z = renamed["zones"][0].as_object_mut().unwrap();
    let key = z.remove("obfuscationKey").unwrap();
    z.insert("obfuscation_key".into(), key);
    check("renamed obfuscationKey rejected", !response.is_valid(&renamed));
    let mut extra = listing_request.clone();
    extra["zones"][0]["layers"][0]["algorithm"] = json!(1);
    check("extra layer field rejected", !request.is_valid(&extra));
    let mut camel = listing_extractor.clone();
    let t = camel.as_object_mut().unwrap().remove("document_type").unwrap();
    camel["documentType"] = t;
    check("camelCase document_type rejected", !extractor.is_valid(&camel));
    check("typed decoder rejects rename", serde_json::from_value::<ObfuscationRequest>(extra).is_err());

    // Bodies the system produces.
    let registry = corpus::registry(&NullFaceDetector).unwrap();
    let doc = corpus::document(&corpus::layout("student_card").unwrap(), 17);
    let produced = serde_json::to_value(extract(&doc.image, &registry, &GlyphOcr::default())).unwrap();
    check("produced extractor body", extractor.is_valid(&produced));
    let mut rng = StdRng::seed_from_u64(3);
    let case = random_case(&mut rng, 3, 6);
    let (_, master) = obfuscate(&case.image, &case.zones, &case.root, "wire").unwrap();
    let req = serde_json::to_value(ObfuscationRequest::from_specs(&case.zones)).unwrap();
    check("produced obfuscator request", request.is_valid(&req));
    check("produced obfuscator response", response.is_valid(&serde_json::to_value(master.to_response()).unwrap()));
    let d = serde_json::to_value(DeobfuscationRequest::from_records(&master.records)).unwrap();
    check("produced deobfuscator request", deob.is_valid(&d));
    ensure(failed.is_empty(), format!("{total} checks, failed: {failed:?}"))
}

// ---- extraction corpus ------------------------------------------------

fn extraction_corpus() -> Outcome {
    let registry = corpus::registry(&NullFaceDetector).unwrap();
    let docs = corpus::generate(20, 2024);
    let ocr = GlyphOcr::default();
    let accuracy = |width: Option<u32>| {
        let results: Vec<_> = docs
            .iter()
            .map(|d| {
                let img = width.map_or_else(|| d.image.clone(), |w| d.image.resize_to_width(w));
                (extract(&img, &registry, &ocr), d.truth.clone())
            })
            .collect();
        field_accuracy(&results).unwrap()
    };
    let native = accuracy(None);
    let widths: Vec<(u32, f64)> = [1800, 800, 200].into_iter().map(|w| (w, accuracy(Some(w)).accuracy)).collect();
    let monotone = widths.windows(2).all(|p| p[0].1 >= p[1].1);
    ensure(
        docs.len() == 60 && native.accuracy == 1.0 && monotone,
        format!(
            "{} documents, native accuracy {:.4} ({}/{} fields), by width {}",
            docs.len(),
            native.accuracy,
            native.correct,
            native.expected,
            widths.iter().map(|(w, a)| format!("{w}px {a:.4}")).collect::<Vec<_>>().join(" >= ")
        ),
    )
}

// ---- fact oracles -----------------------------------------------------

#[derive(Deserialize)]
struct FactsFixture {
    cnps: Vec<CnpCase>,
    adult_counts: BTreeMap<String, u32>,
}

#[derive(Deserialize)]
struct CnpCase {
    cnp: String,
    checksum_ok: bool,
    birthdate: Option<String>,
}

/// Age in whole years by calendar comparison.
fn oracle_adult(birth: NaiveDate, today: NaiveDate) -> bool {
    let before = (today.month(), today.day()) < (birth.month(), birth.day());
    today.year() - birth.year() - i32::from(before) >= 18
}

fn noon(d: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&d.and_hms_opt(12, 0, 0).unwrap())
}

fn fact_oracles() -> Outcome {
    let fixture: FactsFixture = serde_json::from_str(include_str!("fixtures/facts_oracle.json")).unwrap();
    let rules = RuleSet {
        over_18: true,
        ..RuleSet::default()
    };
    let derives_adult = |fields: BTreeMap<String, String>, today: NaiveDate| {
        derive_facts("subject", "doc", &fields, &rules, noon(today))
            .drafts
            .iter()
            .any(|d| d.predicate == "over_18")
    };

    let (mut pairs, mut date_bad, mut cnp_route_bad) = (0, 0, 0);
    for (year, expected) in &fixture.adult_counts {
        let year: i32 = year.parse().unwrap();
        let mut count = 0;
        let mut birth = NaiveDate::from_ymd_opt(year, 1, 1).unwrap();
        while birth.year() == year {
            let pivot = NaiveDate::from_ymd_opt(year + 18, birth.month(), birth.day())
                .unwrap_or_else(|| NaiveDate::from_ymd_opt(year + 18, 3, 1).unwrap());
            let code = cnp::encode(cnp::Sex::Female, birth, 40, 123).unwrap();
            for k in -3..=3 {
                let today = pivot + chrono::Duration::days(k);
                let want = oracle_adult(birth, today);
                count += u32::from(want);
                pairs += 1;
                let by_date = derives_adult([("birthdate".into(), birth.format("%d.%m.%Y").to_string())].into(), today);
                let by_cnp = derives_adult([("cnp".into(), code.clone())].into(), today);
                date_bad += usize::from(by_date != want);
                cnp_route_bad += usize::from(by_cnp != want);
            }
            birth = birth.succ_opt().unwrap();
        }
        if count != *expected {
            return Err(format!("{year}: oracle counted {count} adult days, frozen value {expected}"));
        }
    }

    let mut cnp_bad = 0;
    for c in &fixture.cnps {
        let decoded = cnp::decode(&c.cnp).ok().map(|d| d.birthdate.format("%Y-%m-%d").to_string());
        if cnp::checksum_valid(&c.cnp) != c.checksum_ok || decoded != c.birthdate {
            cnp_bad += 1;
        }
    }
    let valid = fixture.cnps.iter().filter(|c| c.birthdate.is_some()).count();
    ensure(
        date_bad == 0 && cnp_route_bad == 0 && cnp_bad == 0 && fixture.cnps.len() == 1000,
        format!(
            "{pairs} boundary pairs 1996-2008: {date_bad} birthdate and {cnp_route_bad} CNP-route disagreements; \
             {} CNPs ({valid} decodable): {cnp_bad} disagreements",
            fixture.cnps.len()
        ),
    )
}

// ---- ledger -----------------------------------------------------------

fn ledger_tamper() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.bin");
    let ledger = Ledger::open(&path, Arc::new(ManualClock::at_millis(1_750_000_000_000))).unwrap();
    let mut hashes = Vec::new();
    for b in 0..4 {
        for i in 0..=b {
            let h = docvault_core::sha256_hex(format!("tamper-{b}-{i}").as_bytes());
            ledger.submit(EntryDraft::public(EntryKind::Document, &h, "acceptance")).unwrap();
            hashes.push(h);
        }
        ledger.seal().unwrap();
    }
    let bytes = std::fs::read(&path).unwrap();
    if verify_chain_bytes(&bytes) != (ChainVerdict::Ok { blocks: 5 }) {
        return Err("untouched 5-block chain does not verify".into());
    }
    // Byte offset ranges of each block record.
    let mut bounds = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        bounds.push(pos..pos + 4 + len);
        pos += 4 + len;
    }
    let mut wrong = 0;
    for i in 0..bytes.len() {
        let expected = bounds.iter().position(|r| r.contains(&i)).unwrap() as u64;
        let mut m = bytes.clone();
        m[i] ^= 0xA5;
        if verify_chain_bytes(&m) != (ChainVerdict::FirstBadBlock { index: expected }) {
            wrong += 1;
        }
    }

    let blocks = ledger.blocks();
    let headers = ledger.headers();
    let proofs: Vec<_> = hashes.iter().map(|h| (h, prove_inclusion(&blocks, h))).collect();
    let proofs_ok = proofs.iter().all(|(h, p)| p.as_ref().is_some_and(|p| verify_inclusion(p, h, &headers)));
    let mut tampered_accepted = 0;
    let mut tampered = 0;
    for j in 0..headers.len() {
        let mut variants = Vec::new();
        let mut t = headers.clone();
        t[j].timestamp_ms += 1;
        variants.push(t);
        let mut t = headers.clone();
        t[j].prev_hash[0] ^= 1;
        variants.push(t);
        let mut t = headers.clone();
        t[j].block_hash[31] ^= 1;
        variants.push(t);
        if !headers[j].entry_hashes.is_empty() {
            let mut t = headers.clone();
            t[j].entry_hashes[0][5] ^= 1;
            variants.push(t);
        }
        for t in variants {
            tampered += 1;
            for (h, p) in &proofs {
                if verify_inclusion(p.as_ref().unwrap(), h, &t) {
                    tampered_accepted += 1;
                }
            }
        }
    }
    ensure(
        wrong == 0 && proofs_ok && tampered_accepted == 0,
        format!(
            "{} byte mutations, {wrong} misattributed; {} proofs verify: {proofs_ok}; \
             {tampered} tampered header sets x {} proofs, {tampered_accepted} accepted",
            bytes.len(),
            hashes.len(),
            hashes.len()
        ),
    )
}

// ---- shares -----------------------------------------------------------

fn share_semantics() -> Outcome {
    let env = common::env();
    let doc = env.completed(&common::card_png("id_card", 41));
    let zones: BTreeSet<u32> = [env.vault.document_view(&doc).unwrap().zones[0].zone_id].into();
    let mut violations = 0;
    for _ in 0..100 {
        let link = env
            .vault
            .create_share(&env.owner, &doc, &zones, ShareMode::MaxAccesses { max_accesses: 5 })
            .unwrap();
        let barrier = Barrier::new(20);
        let results: Vec<Result<(), OrchestrateError>> = std::thread::scope(|s| {
            let hs: Vec<_> = (0..20)
                .map(|_| {
                    s.spawn(|| {
                        barrier.wait();
                        env.vault.resolve_share(&link.uuid).map(|_| ())
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let ok = results.iter().filter(|r| r.is_ok()).count();
        let expired = results.iter().filter(|r| matches!(r, Err(OrchestrateError::Expired(_)))).count();
        if ok != 5 || expired != 15 || env.vault.share(&link.uuid).unwrap().accesses_used != 5 {
            violations += 1;
        }
    }

    let t = env.vault.now() + chrono::Duration::hours(1);
    let link = env.vault.create_share(&env.owner, &doc, &zones, ShareMode::Until { until: t }).unwrap();
    let before = env.vault.resolve_share(&link.uuid).is_ok();
    env.clock.set(t);
    let at_t = env.vault.resolve_share(&link.uuid).is_ok();
    let mut after_ok = 0;
    for step in [1i64, 1_000, 60_000, 86_400_000, 365 * 86_400_000] {
        env.clock.set(t + chrono::Duration::milliseconds(step));
        if !matches!(env.vault.resolve_share(&link.uuid), Err(OrchestrateError::Expired(_))) {
            after_ok += 1;
        }
    }
    ensure(
        violations == 0 && before && at_t && after_ok == 0,
        format!(
            "100 rounds of 20 resolvers on max_accesses=5: {violations} violations; \
             time link live before/at T: {before}/{at_t}, resolved after T+eps: {after_ok}"
        ),
    )
}

// ---- privacy sweep ----------------------------------------------------

const WATERMARK: &str = "DV-CANARY-WATERMARK-7f3e9a41c2";

/// Re-encodes `image` with the watermark in a tEXt chunk.
fn watermarked_png(image: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, image.width(), image.height());
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.add_text_chunk("Comment".into(), WATERMARK.into()).unwrap();
    let mut w = enc.write_header().unwrap();
    w.write_image_data(image.data()).unwrap();
    w.finish().unwrap();
    out
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out
}

fn privacy_sweep() -> Outcome {
    let env = common::env();
    let card = corpus::document(&corpus::layout("id_card").unwrap(), 77);
    let png = watermarked_png(&card.image);
    if !png.windows(WATERMARK.len()).any(|w| w == WATERMARK.as_bytes()) {
        return Err("watermark missing from upload".into());
    }
    let doc = env.completed(&png);
    let zones: BTreeSet<u32> = env.vault.document_view(&doc).unwrap().zones.iter().map(|z| z.zone_id).collect();
    let link = env.vault.create_share(&env.owner, &doc, &zones, ShareMode::Indefinite).unwrap();
    env.vault.resolve_share(&link.uuid).unwrap();
    env.vault.verify_public(&doc).unwrap();

    let raw = env
        .vault
        .keystore()
        .get(&format!("documents/{doc}/master-key"), &env.owner.keystore_token())
        .unwrap();
    let master: MasterKey = serde_json::from_slice(&raw).unwrap();
    let mut canaries: Vec<(String, Vec<u8>)> = vec![
        ("birthdate".into(), card.truth["birthdate"].clone().into_bytes()),
        ("cnp".into(), card.truth["cnp"].clone().into_bytes()),
        ("watermark".into(), WATERMARK.as_bytes().to_vec()),
    ];
    let b64 = base64::engine::general_purpose::STANDARD;
    for r in &master.records {
        canaries.push((format!("zone {} token", r.zone_id), r.token().into_bytes()));
        canaries.push((format!("zone {} digest", r.zone_id), r.integrity_digest.to_vec()));
        for (i, (_, key)) in r.layers.iter().enumerate() {
            canaries.push((format!("zone {} layer {i} key", r.zone_id), key.0.to_vec()));
            canaries.push((format!("zone {} layer {i} key hex", r.zone_id), hex::encode(key.0).into_bytes()));
            canaries.push((format!("zone {} layer {i} key b64", r.zone_id), b64.encode(key.0).into_bytes()));
        }
    }

    let store = env.vault.keystore().store_path();
    let files: Vec<PathBuf> = files_under(&env.vault.config().data_dir).into_iter().filter(|p| *p != store).collect();
    let covered = ["cas", "metadata.db", "ledger.bin", "logs"]
        .iter()
        .all(|c| files.iter().any(|f| f.strip_prefix(&env.vault.config().data_dir).unwrap().starts_with(c)));
    let mut hits = Vec::new();
    let mut scanned = 0usize;
    for f in &files {
        let bytes = std::fs::read(f).unwrap();
        scanned += bytes.len();
        for (name, c) in &canaries {
            if bytes.windows(c.len()).any(|w| w == c.as_slice()) {
                hits.push(format!("{name} in {}", f.display()));
            }
        }
    }
    // The keystore itself must still hold the ciphertext, not plaintext.
    let store_bytes = std::fs::read(&store).unwrap();
    let store_plain = canaries.iter().any(|(_, c)| store_bytes.windows(c.len()).any(|w| w == c.as_slice()));
    ensure(
        covered && hits.is_empty() && !store_plain,
        format!(
            "{} canaries over {} files ({scanned} bytes, stores covered: {covered}); hits: {hits:?}; plaintext in keystore: {store_plain}",
            canaries.len(),
            files.len()
        ),
    )
}

// ---- anchor harness ---------------------------------------------------

fn anchor_harness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::open(&dir.path().join("ledger.bin"), Arc::new(docvault_core::clock::SystemClock)).unwrap());
    let report = run_harness(
        &ledger,
        &HarnessConfig {
            requests: 1000,
            parallelism: 64,
            ..HarnessConfig::default()
        },
    )
    .unwrap();
    let csv_path = Path::new(env!("CARGO_TARGET_TMPDIR")).join("anchor_latency.csv");
    report.write_csv(std::fs::File::create(&csv_path).unwrap()).unwrap();
    let rows = std::fs::read_to_string(&csv_path).unwrap().lines().count();
    ensure(
        report.exactly_once() && rows == 1001 && matches!(ledger.verify(), ChainVerdict::Ok { .. }),
        format!(
            "1000 submissions at parallelism 64: {} included, {} duplicates, {} missing; p50 {:.1} ms, p99 {:.1} ms, \
             {:.0}/s; CSV {} ({rows} lines)",
            report.inclusions,
            report.duplicates,
            report.missing,
            report.p50_ms,
            report.p99_ms,
            report.throughput_per_s,
            csv_path.display()
        ),
    )
}

// ---- metrics ----------------------------------------------------------

#[derive(Deserialize)]
struct MetricPair {
    index: u32,
    width: u32,
    height: u32,
    kind: u32,
    ssim: f64,
    rase: f64,
}

/// Same stream as the fixture generator.
fn xorshift_bytes(seed: u32, n: usize) -> Vec<i64> {
    let mut s = seed.wrapping_mul(2_654_435_761).wrapping_add(1);
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 17;
            s ^= s << 5;
            (s >> 24) as i64
        })
        .collect()
}

fn fixture_pair(p: &MetricPair) -> (RasterImage, RasterImage) {
    let (w, h, i) = (p.width as usize, p.height as usize, p.index);
    let n = w * h * 3;
    let mut a = xorshift_bytes(2 * i + 1, n);
    let r = xorshift_bytes(2 * i + 2, n);
    let b: Vec<i64> = match p.kind {
        0 => r,
        1 => a.iter().zip(&r).map(|(a, r)| (a + (r - 128).div_euclid(16)).clamp(0, 255)).collect(),
        2 => a.iter().map(|a| 255 - a).collect(),
        3 => {
            a = (0..n).map(|k| ((k / 3) % w) as i64 * 255 / (w as i64 - 1).max(1)).collect();
            a.iter().zip(&r).map(|(a, r)| (a + (r - 128).div_euclid(32)).clamp(0, 255)).collect()
        }
        _ => {
            a = vec![10 + i as i64; n];
            a.iter().zip(&r).map(|(a, r)| (a + r / 8).clamp(0, 255)).collect()
        }
    };
    let img = |v: Vec<i64>| RasterImage::new(p.width, p.height, v.into_iter().map(|x| x as u8).collect()).unwrap();
    (img(a), img(b))
}

fn metric_oracles() -> Outcome {
    let pairs: Vec<MetricPair> = serde_json::from_str(include_str!("fixtures/metric_pairs.json")).unwrap();
    let (mut worst_ssim, mut worst_rase) = (0.0f64, 0.0f64);
    for p in &pairs {
        let (a, b) = fixture_pair(p);
        worst_ssim = worst_ssim.max((ssim(&a, &b).unwrap() - p.ssim).abs());
        worst_rase = worst_rase.max((rase(&a, &b).unwrap() - p.rase).abs());
    }
    let kitten = cer("kitten", "sitting");
    ensure(
        pairs.len() == 50 && worst_ssim <= 1e-6 && worst_rase <= 1e-6 && (kitten - 3.0 / 7.0).abs() < 1e-12,
        format!(
            "{} pairs: max |dSSIM| {worst_ssim:.2e}, max |dRASE| {worst_rase:.2e} (tolerance 1e-6); CER(kitten, sitting) = {kitten:.6}",
            pairs.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("obfuscation round trip", obfuscation_round_trip),
        ("partial disclosure", partial_disclosure),
        ("wire-format conformance", wire_conformance),
        ("extraction corpus", extraction_corpus),
        ("fact oracles", fact_oracles),
        ("ledger tamper detection", ledger_tamper),
        ("share semantics", share_semantics),
        ("privacy sweep", privacy_sweep),
        ("anchor harness", anchor_harness),
        ("metric oracles", metric_oracles),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let secs = Duration::as_secs_f64(&start.elapsed());
        println!("{tag} [{:02}] {name}: {detail} [{secs:.1} s]", i + 1);
        std::io::stdout().flush().ok();
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
