//! Template classification by combined SSIM/RASE score.

use std::sync::Arc;

use serde::Serialize;

use super::metrics::{rase, ssim};
use super::template::{Template, TemplatePage, TemplateRegistry, WHITE};
use crate::raster::RasterImage;

/// Width both sides are reduced to before comparison.
pub const MATCH_WIDTH: u32 = 200;
/// Weight of the RASE penalty in the combined score.
pub const LAMBDA: f64 = 0.5;
/// Minimum combined score accepted as a match.
pub const MATCH_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, Serialize)]
pub struct PageScore {
    pub template_id: String,
    pub template_name: String,
    pub ssim: f64,
    pub rase: f64,
    pub score: f64,
}

/// Upload reduced to the page thumbnail size with the page's masked
/// regions painted white, ready for comparison.
pub fn prepare_upload(image: &RasterImage, page: &TemplatePage) -> RasterImage {
    let (tw, th) = (page.thumb.width(), page.thumb.height());
    let mut small = image.resize(tw, th);
    for r in page.masked_scaled(tw, th) {
        small.fill_rect(&r, WHITE);
    }
    small
}

/// `SSIM − λ·RASE/100` against one page; an undefined RASE scores −∞.
pub fn score_page(image: &RasterImage, page: &TemplatePage) -> (f64, f64, f64) {
    let up = prepare_upload(image, page);
    let s = ssim(&page.thumb, &up).unwrap_or(-1.0);
    let r = rase(&page.thumb, &up).unwrap_or(f64::INFINITY);
    (s, r, s - LAMBDA * r / 100.0)
}

/// Scores page `page_index` of every template, best first.
pub fn rank_templates(
    image: &RasterImage,
    registry: &TemplateRegistry,
    page_index: usize,
) -> Vec<(Arc<Template>, PageScore)> {
    let mut out: Vec<_> = registry
        .snapshot()
        .into_iter()
        .filter_map(|t| {
            let page = t.pages.get(page_index)?;
            let (s, r, score) = score_page(image, page);
            let ps = PageScore {
                template_id: t.id.clone(),
                template_name: t.name.clone(),
                ssim: s,
                rase: r,
                score,
            };
            Some((t, ps))
        })
        .collect();
    out.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
    out
}

/// Best template above the threshold, or `None`.
pub fn match_template(
    image: &RasterImage,
    registry: &TemplateRegistry,
) -> Option<(Arc<Template>, f64)> {
    rank_templates(image, registry, 0)
        .into_iter()
        .next()
        .filter(|(_, s)| s.score >= MATCH_THRESHOLD)
        .map(|(t, s)| (t, s.score))
}
