//! Synthetic identity documents rendered with the glyph font.
//!
//! Three card layouts at 2000×1250 with distinct palettes, static labels,
//! a photo box holding a drawn face, and field values drawn inside each
//! declared rectangle. Used by tests, the acceptance suite and the CLI's
//! `corpus` command.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{Datelike, Duration, NaiveDate};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::category::{CategoryRegistry, FieldCategory};
use super::font::{draw_text, text_height};
use super::template::{FieldSpec, PageInput, Template, TemplateRegistry};
use super::ExtractError;
use crate::facts::cnp::{self, Sex};
use crate::obfuscate::FaceDetector;
use crate::raster::{RasterImage, Rect};

pub const CARD_WIDTH: u32 = 2000;
pub const CARD_HEIGHT: u32 = 1250;
pub const VALUE_SCALE: u32 = 4;
const LABEL_SCALE: u32 = 3;
const PAD: u32 = 12;
const INK: [u8; 3] = [20, 20, 30];
const LABEL_INK: [u8; 3] = [90, 90, 100];

pub const TEMPLATE_NAMES: [&str; 3] = ["id_card", "driving_license", "student_card"];

/// Default categories plus `status` used by the student card.
pub fn categories() -> CategoryRegistry {
    let mut reg = CategoryRegistry::defaults();
    reg.insert(
        FieldCategory::new("status", "Enrolment status", &[r"^(?:ACTIVE|GRADUATED|SUSPENDED)$"])
            .expect("static pattern"),
    );
    reg
}

#[derive(Debug, Clone)]
struct Slot {
    field: FieldSpec,
    label: &'static str,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub name: &'static str,
    background: [u8; 3],
    slots: Vec<Slot>,
    photo: Rect,
    decor: fn(&mut RasterImage),
}

impl Layout {
    pub fn fields(&self) -> Vec<FieldSpec> {
        self.slots.iter().map(|s| s.field.clone()).collect()
    }

    /// Outer box of the drawn face inside the photo frame.
    pub fn face_rect(&self) -> Rect {
        let p = self.photo;
        let cx = (p.start_x + p.end_x) / 2;
        let cy = (p.start_y + p.end_y) / 2 + 20;
        let rx = p.width() * 3 / 10;
        let ry = p.height() * 3 / 10;
        Rect::new(cx - rx, cy - ry, cx + rx, cy + ry)
    }
}

fn slot(label: &'static str, name: &str, category: &str, sensitive: bool, x: u32, y: u32, w: u32) -> Slot {
    let h = text_height(VALUE_SCALE) + 2 * PAD;
    Slot {
        field: FieldSpec::new(name, Rect::from_origin(x, y, w, h), sensitive, category),
        label,
    }
}

fn id_card_decor(img: &mut RasterImage) {
    img.fill_rect(&Rect::new(0, 0, CARD_WIDTH, 170), [30, 60, 140]);
    draw_text(img, 80, 50, "ROMANIA  CARTE DE IDENTITATE", 7, [255, 255, 255]);
    img.fill_rect(&Rect::new(1780, 30, 1940, 140), [40, 150, 150]);
    for i in 0..6 {
        let y = 1040 + i * 30;
        img.fill_rect(&Rect::new(80, y, 1920, y + 12), [175, 190, 215]);
    }
}

fn driving_license_decor(img: &mut RasterImage) {
    img.fill_rect(&Rect::new(0, 1080, CARD_WIDTH, CARD_HEIGHT), [150, 30, 40]);
    draw_text(img, 80, 1140, "PERMIS DE CONDUCERE", 7, [255, 255, 255]);
    draw_text(img, 100, 60, "RO", 14, [20, 40, 120]);
    fill_ellipse(img, 1150, 450, 170, 170, [160, 180, 215]);
    img.fill_rect(&Rect::new(950, 100, 980, 1040), [200, 170, 200]);
}

fn student_card_decor(img: &mut RasterImage) {
    img.fill_rect(&Rect::new(0, 0, 260, CARD_HEIGHT), [20, 100, 60]);
    draw_text(img, 320, 60, "CARNET DE STUDENT", 7, [20, 100, 60]);
    fill_ellipse(img, 1690, 150, 90, 90, [20, 100, 60]);
    for i in 0..4 {
        let y = 1100 + i * 36;
        img.fill_rect(&Rect::new(260, y, CARD_WIDTH, y + 18), [190, 220, 195]);
    }
}

/// The three built-in layouts.
pub fn layouts() -> Vec<Layout> {
    vec![
        Layout {
            name: "id_card",
            background: [225, 235, 245],
            photo: Rect::new(80, 230, 580, 880),
            decor: id_card_decor,
            slots: vec![
                slot("SERIA", "series", "series", false, 680, 260, 120),
                slot("NR", "number", "number", true, 900, 260, 200),
                slot("CNP", "cnp", "cnp", true, 1250, 260, 380),
                slot("NUME/NOM/LAST NAME", "surname", "name", true, 680, 390, 720),
                slot("PRENUME/PRENOM/FIRST NAME", "given_name", "name", true, 680, 520, 720),
                slot("DATA NASTERII", "birthdate", "date", true, 680, 650, 320),
                slot("DOMICILIU/ADRESSE/ADDRESS", "address", "address", true, 680, 780, 1220),
                slot("VALABILITATE", "validity", "date-range", false, 680, 910, 620),
            ],
        },
        Layout {
            name: "driving_license",
            background: [240, 228, 232],
            photo: Rect::new(1420, 120, 1920, 770),
            decor: driving_license_decor,
            slots: vec![
                slot("1. NUME", "surname", "name", true, 120, 260, 780),
                slot("2. PRENUME", "given_name", "name", true, 120, 380, 780),
                slot("3. DATA NASTERII", "birthdate", "date", true, 120, 500, 380),
                slot("4. VALABILITATE", "validity", "date-range", false, 120, 620, 680),
                slot("5. NUMAR PERMIS", "number", "number", true, 120, 740, 330),
                slot("4D. CNP", "cnp", "cnp", true, 120, 860, 440),
                slot("8. DOMICILIU", "address", "address", true, 1000, 860, 920),
            ],
        },
        Layout {
            name: "student_card",
            background: [228, 240, 225],
            photo: Rect::new(1480, 300, 1900, 860),
            decor: student_card_decor,
            slots: vec![
                slot("NUME", "surname", "name", true, 320, 260, 680),
                slot("PRENUME", "given_name", "name", true, 320, 380, 680),
                slot("UNIVERSITATE", "university", "address", false, 320, 500, 1080),
                slot("STATUS", "status", "status", false, 320, 620, 380),
                slot("NR. MATRICOL", "number", "number", true, 800, 620, 350),
                slot("VALABIL", "validity", "date-range", false, 320, 740, 580),
                slot("DATA NASTERII", "birthdate", "date", true, 320, 860, 330),
            ],
        },
    ]
}

pub fn layout(name: &str) -> Option<Layout> {
    layouts().into_iter().find(|l| l.name == name)
}

fn fill_ellipse(img: &mut RasterImage, cx: u32, cy: u32, rx: u32, ry: u32, rgb: [u8; 3]) {
    let (cxf, cyf, rxf, ryf) = (cx as f64, cy as f64, rx as f64, ry as f64);
    for y in cy.saturating_sub(ry)..(cy + ry).min(img.height()) {
        for x in cx.saturating_sub(rx)..(cx + rx).min(img.width()) {
            let dx = (x as f64 + 0.5 - cxf) / rxf;
            let dy = (y as f64 + 0.5 - cyf) / ryf;
            if dx * dx + dy * dy <= 1.0 {
                img.set_pixel(x, y, rgb);
            }
        }
    }
}

fn draw_face(img: &mut RasterImage, layout: &Layout, skin: [u8; 3]) {
    let p = layout.photo;
    img.fill_rect(&p, [60, 60, 60]);
    img.fill_rect(&Rect::new(p.start_x + 4, p.start_y + 4, p.end_x - 4, p.end_y - 4), [210, 210, 215]);
    let f = layout.face_rect();
    let (cx, cy) = ((f.start_x + f.end_x) / 2, (f.start_y + f.end_y) / 2);
    let (rx, ry) = (f.width() / 2, f.height() / 2);
    // Shoulders, then head.
    img.fill_rect(&Rect::new(p.start_x + 30, f.end_y - 10, p.end_x - 30, p.end_y - 4), [50, 60, 90]);
    fill_ellipse(img, cx, cy, rx, ry, skin);
    // Hair cap over the top third.
    for y in f.start_y..f.start_y + ry * 2 / 3 {
        for x in f.start_x..f.end_x {
            let dx = (x as f64 + 0.5 - cx as f64) / (rx as f64 + 8.0);
            let dy = (y as f64 + 0.5 - cy as f64) / (ry as f64 + 8.0);
            if dx * dx + dy * dy <= 1.0 {
                img.set_pixel(x, y, [60, 40, 30]);
            }
        }
    }
    let eye_y = cy - ry / 8;
    for ex in [cx - rx * 2 / 5, cx + rx * 2 / 5] {
        img.fill_rect(&Rect::new(ex - 14, eye_y - 6, ex + 14, eye_y + 6), [30, 30, 40]);
    }
    img.fill_rect(&Rect::new(cx - rx / 3, cy + ry / 2, cx + rx / 3, cy + ry / 2 + 10), [150, 40, 50]);
}

/// Renders a card. Values are drawn at each field's padded origin; missing
/// values leave the field blank.
pub fn render(layout: &Layout, values: &BTreeMap<String, String>, skin: [u8; 3]) -> RasterImage {
    let mut img = RasterImage::filled(CARD_WIDTH, CARD_HEIGHT, layout.background);
    (layout.decor)(&mut img);
    draw_face(&mut img, layout, skin);
    for s in &layout.slots {
        let r = s.field.rect;
        draw_text(&mut img, r.start_x, r.start_y - text_height(LABEL_SCALE) - 8, s.label, LABEL_SCALE, LABEL_INK);
        if let Some(v) = values.get(&s.field.name) {
            draw_text(&mut img, r.start_x + PAD, r.start_y + PAD, v, VALUE_SCALE, INK);
        }
    }
    img
}

const SURNAMES: &[&str] = &[
    "POPESCU", "IONESCU", "POPA", "RADU", "DUMITRU", "STAN", "STOICA", "GHEORGHE", "MATEI", "CIOBANU",
    "ROSU", "MUNTEANU", "FLOREA", "DINU", "CONSTANTIN", "BALAN", "NISTOR", "MOLDOVAN-POP",
];
const GIVEN: &[(&str, Sex)] = &[
    ("ANDREI", Sex::Male),
    ("MIHAI", Sex::Male),
    ("ALEXANDRU", Sex::Male),
    ("IOAN", Sex::Male),
    ("VLAD", Sex::Male),
    ("ELENA", Sex::Female),
    ("IOANA", Sex::Female),
    ("MARIA", Sex::Female),
    ("ANA-MARIA", Sex::Female),
    ("CRISTINA", Sex::Female),
];
const STREETS: &[&str] = &["LALELELOR", "MIHAI VITEAZU", "UNIRII", "EROILOR", "VICTORIEI", "PACII", "MORII"];
const CITIES: &[&str] = &["CLUJ", "IASI", "BRASOV", "TIMISOARA", "BUCURESTI", "SIBIU", "ORADEA"];
const SKINS: &[[u8; 3]] = &[[224, 172, 140], [198, 134, 96], [236, 190, 160], [170, 110, 80]];

fn fmt_date(d: NaiveDate) -> String {
    format!("{:02}.{:02}.{}", d.day(), d.month(), d.year())
}

fn random_date(rng: &mut StdRng, from_year: i32, to_year: i32) -> NaiveDate {
    let start = NaiveDate::from_ymd_opt(from_year, 1, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(to_year, 12, 31).unwrap();
    start + Duration::days(rng.gen_range(0..=(end - start).num_days()))
}

/// Plausible ground-truth values for `layout`.
pub fn random_values(layout: &Layout, rng: &mut StdRng) -> BTreeMap<String, String> {
    let (given, sex) = GIVEN[rng.gen_range(0..GIVEN.len())];
    let birth = random_date(rng, 1950, 2006);
    let issued = random_date(rng, 2016, 2024);
    let expires = issued.with_year(issued.year() + if layout.name == "student_card" { 4 } else { 10 })
        .unwrap_or(issued + Duration::days(3650));
    let city = CITIES[rng.gen_range(0..CITIES.len())];
    let mut all = BTreeMap::new();
    all.insert("surname", SURNAMES[rng.gen_range(0..SURNAMES.len())].to_string());
    all.insert("given_name", given.to_string());
    all.insert("birthdate", fmt_date(birth));
    all.insert(
        "cnp",
        cnp::encode(sex, birth, rng.gen_range(1..=52), rng.gen_range(1..=999)).expect("encodable year"),
    );
    all.insert(
        "series",
        (0..2).map(|_| rng.gen_range(b'A'..=b'Z') as char).collect(),
    );
    all.insert("number", format!("{:06}", rng.gen_range(0..1_000_000)));
    all.insert(
        "address",
        format!("STR. {} {}, {}", STREETS[rng.gen_range(0..STREETS.len())], rng.gen_range(1..=120), city),
    );
    all.insert("validity", format!("{}-{}", fmt_date(issued), fmt_date(expires)));
    all.insert("university", format!("UNIVERSITATEA DIN {city}"));
    all.insert("status", if rng.gen_bool(0.8) { "ACTIVE" } else { "GRADUATED" }.to_string());
    layout
        .slots
        .iter()
        .filter_map(|s| all.get(s.field.name.as_str()).map(|v| (s.field.name.clone(), v.clone())))
        .collect()
}

/// Specimen values used for the registered template image.
pub fn specimen_values(layout: &Layout) -> BTreeMap<String, String> {
    random_values(layout, &mut StdRng::seed_from_u64(0x5eed))
}

/// Specimen card for `layout`, without noise.
pub fn specimen(layout: &Layout) -> RasterImage {
    render(layout, &specimen_values(layout), SKINS[0])
}

#[derive(Debug, Clone)]
pub struct CorpusDocument {
    pub template: String,
    pub image: RasterImage,
    pub truth: BTreeMap<String, String>,
    pub face: Rect,
}

/// Adds uniform ±1 noise and a small global brightness shift.
fn perturb(img: &mut RasterImage, rng: &mut StdRng) {
    let gain: f64 = rng.gen_range(0.98..1.02);
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let mut p = img.pixel(x, y);
            for c in p.iter_mut() {
                let v = *c as f64 * gain + rng.gen_range(-1i32..=1) as f64;
                *c = v.round().clamp(0.0, 255.0) as u8;
            }
            img.set_pixel(x, y, p);
        }
    }
}

/// Simulated photo: the card centred on a slate 2600×1900 backdrop and
/// rotated by `degrees` about the centre.
pub fn photograph(card: &RasterImage, degrees: f32) -> RasterImage {
    use image::Rgb;
    use imageproc::geometric_transformations::{rotate_about_center, Interpolation};
    const BACKDROP: [u8; 3] = [120, 130, 140];
    let (w, h) = (card.width() + 600, card.height() + 650);
    let mut canvas = RasterImage::filled(w, h, BACKDROP);
    let (ox, oy) = ((w - card.width()) / 2, (h - card.height()) / 2);
    canvas.write_zone(
        &Rect::from_origin(ox, oy, card.width(), card.height()),
        card.data(),
    );
    let rotated = rotate_about_center(
        &canvas.to_rgb_image(),
        degrees.to_radians(),
        Interpolation::Bilinear,
        Rgb(BACKDROP),
    );
    RasterImage::from_rgb_image(rotated)
}

/// One document for `layout`, deterministic in `seed`.
pub fn document(layout: &Layout, seed: u64) -> CorpusDocument {
    let mut rng = StdRng::seed_from_u64(seed);
    let truth = random_values(layout, &mut rng);
    let skin = SKINS[rng.gen_range(0..SKINS.len())];
    let mut image = render(layout, &truth, skin);
    perturb(&mut image, &mut rng);
    CorpusDocument {
        template: layout.name.to_string(),
        image,
        truth,
        face: layout.face_rect(),
    }
}

/// `per_template` documents for each layout, in layout order.
pub fn generate(per_template: usize, seed: u64) -> Vec<CorpusDocument> {
    let mut out = Vec::new();
    for (t, l) in layouts().iter().enumerate() {
        for i in 0..per_template {
            out.push(document(l, seed.wrapping_mul(1_000_003).wrapping_add((t * 10_000 + i) as u64)));
        }
    }
    out
}

/// Registry holding all three specimen templates.
pub fn registry(detector: &dyn FaceDetector) -> Result<TemplateRegistry, ExtractError> {
    let reg = TemplateRegistry::new(categories());
    register_all(&reg, detector)?;
    Ok(reg)
}

pub fn register_all(
    registry: &TemplateRegistry,
    detector: &dyn FaceDetector,
) -> Result<Vec<Arc<Template>>, ExtractError> {
    layouts()
        .iter()
        .map(|l| {
            let page = PageInput {
                name: "front".into(),
                image: specimen(l),
                fields: l.fields(),
            };
            registry.register(l.name, &[page], detector)
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TruthEntry {
    pub file: String,
    pub template: String,
    pub fields: BTreeMap<String, String>,
    pub face: Rect,
}

/// Writes documents as PNG plus `truth.json`, and each specimen with its
/// template manifest under `templates/`.
pub fn write_corpus(dir: &Path, per_template: usize, seed: u64) -> std::io::Result<Vec<TruthEntry>> {
    use super::template::{PageManifest, TemplateManifest};
    let tdir = dir.join("templates");
    std::fs::create_dir_all(&tdir)?;
    for l in layouts() {
        std::fs::write(tdir.join(format!("{}.png", l.name)), specimen(&l).encode_png())?;
        let manifest = TemplateManifest {
            name: l.name.to_string(),
            pages: vec![PageManifest {
                name: "front".into(),
                image: format!("{}.png", l.name),
                fields: l.fields(),
            }],
        };
        std::fs::write(
            tdir.join(format!("{}.json", l.name)),
            serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?,
        )?;
    }
    let mut entries = Vec::new();
    for (i, d) in generate(per_template, seed).into_iter().enumerate() {
        let file = format!("{:03}_{}.png", i, d.template);
        std::fs::write(dir.join(&file), d.image.encode_png())?;
        entries.push(TruthEntry {
            file,
            template: d.template,
            fields: d.truth,
            face: d.face,
        });
    }
    std::fs::write(
        dir.join("truth.json"),
        serde_json::to_vec_pretty(&entries).map_err(std::io::Error::other)?,
    )?;
    Ok(entries)
}
