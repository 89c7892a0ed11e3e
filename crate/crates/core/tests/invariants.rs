use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use docvault_core::anchor::{prove_inclusion, verify_chain, verify_inclusion, ChainVerdict, EntryDraft, EntryKind, Ledger};
use docvault_core::clock::ManualClock;
use docvault_core::extract::accuracy::{cer, levenshtein};
use docvault_core::extract::{rase, ssim};
use docvault_core::facts::cnp::{self, Sex};
use docvault_core::facts::rules::is_adult;
use docvault_core::obfuscate::{
    deobfuscate, obfuscate, prune, Algorithm, LayerSpec, RootKey, ZoneKeyRecord, ZoneSpec,
};
use docvault_core::raster::{RasterImage, Rect};

fn image(w: u32, h: u32, seed: u64) -> RasterImage {
    let mut s = seed | 1;
    let data = (0..w * h * 3)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 56) as u8
        })
        .collect();
    RasterImage::new(w, h, data).unwrap()
}

/// Non-overlapping zones: one per chosen cell of a 4×4 grid.
fn zones(w: u32, h: u32, cells: &BTreeSet<u8>, algs: &[u8]) -> Vec<ZoneSpec> {
    let (cw, ch) = (w / 4, h / 4);
    cells
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (cx, cy) = (c as u32 % 4, c as u32 / 4);
            let rect = Rect::new(cx * cw, cy * ch, cx * cw + cw, cy * ch + ch);
            let n = 1 + algs[i] as usize % 3;
            let layers = (0..n)
                .map(|l| {
                    let alg = Algorithm::ALL[(algs[i] as usize + l) % 3];
                    LayerSpec::new(alg, format!("material-{i}-{l}").into_bytes())
                })
                .collect();
            ZoneSpec::new(c as u32, rect, layers)
        })
        .collect()
}

fn root(seed: u8) -> RootKey {
    RootKey::from_parts([seed; 32], [seed.wrapping_add(1); 16])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deobfuscate_inverts_obfuscate(
        w in 16u32..96, h in 16u32..96, seed in any::<u64>(),
        cells in prop::collection::btree_set(0u8..16, 1..6),
        algs in prop::collection::vec(any::<u8>(), 6),
    ) {
        let img = image(w, h, seed);
        let zs = zones(w, h, &cells, &algs);
        let (obf, master) = obfuscate(&img, &zs, &root(7), "doc").unwrap();
        prop_assert_eq!(deobfuscate(&obf, &master.records).unwrap(), img);
    }

    #[test]
    fn pixels_outside_zones_are_untouched(
        w in 16u32..64, h in 16u32..64, seed in any::<u64>(),
        cells in prop::collection::btree_set(0u8..16, 1..5),
        algs in prop::collection::vec(any::<u8>(), 5),
    ) {
        let img = image(w, h, seed);
        let zs = zones(w, h, &cells, &algs);
        let (obf, _) = obfuscate(&img, &zs, &root(3), "doc").unwrap();
        for y in 0..h {
            for x in 0..w {
                let inside = zs.iter().any(|z| z.rect.intersects(&Rect::new(x, y, x + 1, y + 1)));
                if !inside {
                    prop_assert_eq!(obf.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn pruned_master_restores_only_the_rest(
        seed in any::<u64>(),
        cells in prop::collection::btree_set(0u8..16, 2..6),
        algs in prop::collection::vec(any::<u8>(), 6),
    ) {
        let img = image(64, 64, seed);
        let zs = zones(64, 64, &cells, &algs);
        let (obf, master) = obfuscate(&img, &zs, &root(9), "doc").unwrap();
        let dropped: BTreeSet<u32> = [zs[0].id].into();
        let kept = prune(&master, &dropped).unwrap();
        prop_assert!(kept.record(zs[0].id).is_none());
        let out = deobfuscate(&obf, &kept.records).unwrap();
        prop_assert_eq!(out.zone_bytes(&zs[0].rect), obf.zone_bytes(&zs[0].rect));
        for z in &zs[1..] {
            prop_assert_eq!(out.zone_bytes(&z.rect), img.zone_bytes(&z.rect));
        }
    }

    #[test]
    fn zone_record_token_round_trips(
        cells in prop::collection::btree_set(0u8..16, 1..4),
        algs in prop::collection::vec(any::<u8>(), 4),
    ) {
        let img = image(32, 32, 11);
        let (_, master) = obfuscate(&img, &zones(32, 32, &cells, &algs), &root(1), "doc").unwrap();
        for rec in &master.records {
            prop_assert_eq!(&ZoneKeyRecord::from_token(&rec.token()).unwrap(), rec);
        }
    }

    #[test]
    fn cnp_encode_decode_round_trips(
        days in 0i64..(365 * 299), female in any::<bool>(), county in 1u8..53, serial in 0u16..1000,
    ) {
        let birth = NaiveDate::from_ymd_opt(1800, 1, 1).unwrap() + Duration::days(days);
        let sex = if female { Sex::Female } else { Sex::Male };
        let code = cnp::encode(sex, birth, county, serial).unwrap();
        let d = cnp::decode(&code).unwrap();
        prop_assert_eq!((d.sex, d.birthdate, d.county, d.serial), (sex, birth, county, serial));
        let valid = ('0'..='9').filter(|c| cnp::checksum_valid(&format!("{}{c}", &code[..12]))).count();
        prop_assert_eq!(valid, 1);
    }

    #[test]
    fn adulthood_is_monotone_in_time(days in 0i64..(365 * 40), a in 0i64..20_000, b in 0i64..20_000) {
        let birth = NaiveDate::from_ymd_opt(1980, 1, 1).unwrap() + Duration::days(days);
        let (early, late) = (birth + Duration::days(a.min(b)), birth + Duration::days(a.max(b)));
        prop_assert!(!is_adult(birth, early) || is_adult(birth, late));
    }

    #[test]
    fn levenshtein_is_a_metric(a in "[a-z]{0,12}", b in "[a-z]{0,12}", c in "[a-z]{0,12}") {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert_eq!(cer(&a, &a), 0.0);
    }

    #[test]
    fn identical_images_score_perfectly(w in 1u32..40, h in 1u32..40, seed in any::<u64>()) {
        let img = image(w, h, seed);
        prop_assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-9);
        if img.data().iter().any(|&v| v > 0) {
            prop_assert_eq!(rase(&img, &img).unwrap(), 0.0);
        }
    }

    #[test]
    fn sealed_entries_have_verifiable_proofs(batches in prop::collection::vec(1usize..6, 1..5)) {
        let ledger = Ledger::in_memory(Arc::new(ManualClock::at_millis(1_700_000_000_000)));
        let mut hashes = Vec::new();
        for (b, n) in batches.iter().enumerate() {
            for i in 0..*n {
                let h = docvault_core::sha256_hex(format!("{b}-{i}").as_bytes());
                ledger.submit(EntryDraft::public(EntryKind::Document, &h, "prop")).unwrap();
                hashes.push(h);
            }
            ledger.seal().unwrap();
        }
        prop_assert_eq!(ledger.verify(), ChainVerdict::Ok { blocks: batches.len() as u64 + 1 });
        let blocks = ledger.blocks();
        let whole = matches!(verify_chain(&blocks), ChainVerdict::Ok { .. });
        prop_assert!(whole);
        let headers = ledger.headers();
        for h in &hashes {
            let proof = prove_inclusion(&blocks, h).unwrap();
            prop_assert!(verify_inclusion(&proof, h, &headers));
        }
    }
}
