//! Template registration, alignment, classification and field extraction.

pub mod accuracy;
pub mod align;
pub mod category;
pub mod corpus;
pub mod enhance;
pub mod font;
pub mod matching;
pub mod metrics;
pub mod ocr;
pub mod template;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::obfuscate::wire::Coordinates;
use crate::raster::{RasterImage, Rect};

pub use accuracy::{cer, field_accuracy, levenshtein, AccuracyReport};
pub use align::{align, Alignment, NO_ALIGNMENT};
pub use category::{CategoryRegistry, FieldCategory};
pub use enhance::Enhancement;
pub use matching::{match_template, rank_templates, LAMBDA, MATCH_THRESHOLD, MATCH_WIDTH};
pub use metrics::{rase, ssim};
pub use ocr::{GlyphOcr, OcrEngine, OcrOutput};
pub use template::{FieldSpec, PageInput, Template, TemplatePage, TemplateRegistry};

/// `document_type` reported when no template matches.
pub const UNCLASSIFIED: &str = "Unclassified";
/// Confidence multiplier per enhancement retry.
pub const RETRY_DECAY: f64 = 0.9;
/// Fields below this confidence are flagged for notary review.
pub const FLAG_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedField {
    pub name: String,
    pub text: String,
    pub sensitive: bool,
    pub confidence_score: f64,
    pub coordinates: Coordinates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractedPage {
    pub id: String,
    pub fields: Vec<ExtractedField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionResult {
    pub document_type: String,
    pub pages: Vec<ExtractedPage>,
}

impl ExtractionResult {
    pub fn unclassified() -> Self {
        Self {
            document_type: UNCLASSIFIED.to_string(),
            pages: Vec::new(),
        }
    }

    pub fn is_classified(&self) -> bool {
        self.document_type != UNCLASSIFIED
    }

    pub fn field(&self, name: &str) -> Option<&ExtractedField> {
        self.pages.iter().flat_map(|p| p.fields.iter()).find(|f| f.name == name)
    }

    pub fn fields(&self) -> impl Iterator<Item = &ExtractedField> {
        self.pages.iter().flat_map(|p| p.fields.iter())
    }
}

/// How one declared field fared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldTrace {
    pub page: usize,
    pub name: String,
    pub retries: u32,
    pub enhancement: Option<Enhancement>,
    pub engine_confidence: Option<f64>,
    pub omitted: bool,
    pub flagged: bool,
}

/// Extraction result plus the intermediate artefacts downstream steps need.
#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub result: ExtractionResult,
    pub template: Option<Arc<Template>>,
    pub match_score: Option<f64>,
    /// Each page aligned and resampled to its template page size; the
    /// aligned input when unclassified. Field coordinates refer to these.
    pub normalized: Vec<RasterImage>,
    pub alignment_scores: Vec<f64>,
    pub traces: Vec<FieldTrace>,
}

impl ExtractionOutcome {
    pub fn flagged_fields(&self) -> impl Iterator<Item = &FieldTrace> {
        self.traces.iter().filter(|t| t.flagged)
    }
}

struct FieldRead {
    text: String,
    engine_confidence: f64,
    retries: u32,
    enhancement: Option<Enhancement>,
}

fn read_field(crop: &RasterImage, category: &FieldCategory, ocr: &dyn OcrEngine) -> Option<FieldRead> {
    let gray = crop.to_gray();
    let first = ocr.recognize(&enhance::preprocess(&gray));
    if let Some(text) = category.extract(&first.text) {
        return Some(FieldRead {
            text,
            engine_confidence: first.confidence,
            retries: 0,
            enhancement: None,
        });
    }
    for (i, e) in Enhancement::LADDER.iter().enumerate() {
        let out = ocr.recognize(&e.prepare(&gray));
        if let Some(text) = category.extract(&out.text) {
            return Some(FieldRead {
                text,
                engine_confidence: out.confidence,
                retries: i as u32 + 1,
                enhancement: Some(*e),
            });
        }
    }
    None
}

/// Final confidence after `retries` enhancement passes.
pub fn decayed_confidence(engine: f64, retries: u32) -> f64 {
    (engine * RETRY_DECAY.powi(retries as i32)).clamp(0.0, 1.0)
}

fn extract_page(
    page_index: usize,
    image: &RasterImage,
    page: &TemplatePage,
    registry: &TemplateRegistry,
    ocr: &dyn OcrEngine,
    traces: &mut Vec<FieldTrace>,
) -> ExtractedPage {
    let mut fields = Vec::new();
    for spec in &page.fields {
        let trace_base = FieldTrace {
            page: page_index,
            name: spec.name.clone(),
            retries: 0,
            enhancement: None,
            engine_confidence: None,
            omitted: true,
            flagged: false,
        };
        let Some(category) = registry.categories().get(&spec.category) else {
            traces.push(trace_base);
            continue;
        };
        let rect: Rect = spec.rect.clip(image.width(), image.height());
        if rect.is_empty() {
            traces.push(trace_base);
            continue;
        }
        match read_field(&image.crop(&rect), category, ocr) {
            Some(read) => {
                let conf = decayed_confidence(read.engine_confidence, read.retries);
                traces.push(FieldTrace {
                    retries: read.retries,
                    enhancement: read.enhancement,
                    engine_confidence: Some(read.engine_confidence),
                    omitted: false,
                    flagged: conf < FLAG_THRESHOLD,
                    ..trace_base
                });
                fields.push(ExtractedField {
                    name: spec.name.clone(),
                    text: read.text,
                    sensitive: spec.sensitive,
                    confidence_score: conf,
                    coordinates: rect.into(),
                });
            }
            None => traces.push(FieldTrace {
                retries: Enhancement::LADDER.len() as u32,
                ..trace_base
            }),
        }
    }
    ExtractedPage {
        id: page.id.clone(),
        fields,
    }
}

/// Extracts a multi-page upload. Page `i` of the upload is read against
/// page `i` of the template chosen from the first page; surplus pages are
/// ignored.
pub fn extract_document(
    pages: &[RasterImage],
    registry: &TemplateRegistry,
    ocr: &dyn OcrEngine,
) -> ExtractionOutcome {
    let mut outcome = ExtractionOutcome {
        result: ExtractionResult::unclassified(),
        template: None,
        match_score: None,
        normalized: Vec::new(),
        alignment_scores: Vec::new(),
        traces: Vec::new(),
    };
    let Some(first) = pages.first() else {
        return outcome;
    };
    let aligned0 = align(first, registry);
    outcome.alignment_scores.push(aligned0.score);
    let Some((template, score)) = match_template(&aligned0.image, registry) else {
        outcome.normalized.push(aligned0.image);
        return outcome;
    };
    outcome.match_score = Some(score);
    let mut result_pages = Vec::new();
    for (i, upload) in pages.iter().enumerate().take(template.pages.len()) {
        let page = &template.pages[i];
        let aligned = if i == 0 {
            aligned0.image.clone()
        } else {
            let a = align(upload, registry);
            outcome.alignment_scores.push(a.score);
            a.image
        };
        let (tw, th) = page.size();
        let normalized = aligned.resize(tw, th);
        result_pages.push(extract_page(i, &normalized, page, registry, ocr, &mut outcome.traces));
        outcome.normalized.push(normalized);
    }
    outcome.result = ExtractionResult {
        document_type: template.name.clone(),
        pages: result_pages,
    };
    outcome.template = Some(template);
    outcome
}

/// Single-page convenience wrapper returning only the wire result.
pub fn extract(image: &RasterImage, registry: &TemplateRegistry, ocr: &dyn OcrEngine) -> ExtractionResult {
    extract_document(std::slice::from_ref(image), registry, ocr).result
}
