//! Perspective normalization of photographed documents.
//!
//! Edges are detected over a sweep of thresholds; at each threshold the
//! largest four-corner contour becomes a candidate. Candidate corners are
//! refined against the full-resolution image, every candidate is warped and
//! scored by RASE against the registered templates, and the best one wins.
//! The unwarped input competes too, so a document that already fills the
//! frame is returned untouched.

use image::{GrayImage, Rgb, RgbImage};
use imageproc::contours::{find_contours, BorderType};
use imageproc::distance_transform::Norm;
use imageproc::edges::canny;
use imageproc::filter::gaussian_blur_f32;
use imageproc::geometric_transformations::{warp_into, Interpolation, Projection};
use imageproc::geometry::{approximate_polygon_dp, arc_length, contour_area, convex_hull};
use imageproc::morphology::dilate;
use imageproc::point::Point;

use super::matching::prepare_upload;
use super::metrics::rase;
use super::template::{TemplatePage, TemplateRegistry};
use crate::raster::RasterImage;

/// Edge thresholds tried, low threshold is half the high one.
pub const CANNY_SWEEP: [f32; 9] = [50.0, 75.0, 100.0, 125.0, 150.0, 175.0, 200.0, 225.0, 250.0];
/// Contours are searched on a copy at most this wide.
pub const WORK_WIDTH: u32 = 800;
/// A quadrilateral must cover this share of the frame to count.
pub const MIN_QUAD_FRACTION: f64 = 0.25;
/// Score reported when no alignment could be evaluated.
pub const NO_ALIGNMENT: f64 = f64::INFINITY;

pub type Quad = [(f64, f64); 4];

#[derive(Debug, Clone)]
pub struct Alignment {
    pub image: RasterImage,
    /// RASE of the chosen candidate against its closest template; lower is
    /// better. [`NO_ALIGNMENT`] when nothing could be scored.
    pub score: f64,
    /// Source corners (TL, TR, BR, BL) when a warp was applied.
    pub corners: Option<Quad>,
}

impl Alignment {
    fn identity(image: &RasterImage, score: f64) -> Self {
        Self {
            image: image.clone(),
            score,
            corners: None,
        }
    }
}

/// Orders four points as top-left, top-right, bottom-right, bottom-left.
pub fn order_corners(pts: &[(f64, f64)]) -> Quad {
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let mut v: Vec<(f64, f64)> = pts.to_vec();
    v.sort_by(|a, b| {
        (a.1 - cy)
            .atan2(a.0 - cx)
            .total_cmp(&(b.1 - cy).atan2(b.0 - cx))
    });
    let start = (0..4)
        .min_by(|&i, &j| (v[i].0 + v[i].1).total_cmp(&(v[j].0 + v[j].1)))
        .unwrap();
    [v[start], v[(start + 1) % 4], v[(start + 2) % 4], v[(start + 3) % 4]]
}

/// Douglas-Peucker on a closed polygon: split at the vertex farthest from
/// the first and simplify both halves as open chains.
fn simplify_closed(poly: &[Point<i32>], epsilon: f64) -> Vec<Point<i32>> {
    let d2 = |p: &Point<i32>| {
        let (dx, dy) = ((p.x - poly[0].x) as i64, (p.y - poly[0].y) as i64);
        dx * dx + dy * dy
    };
    let far = (0..poly.len()).max_by_key(|&i| d2(&poly[i])).unwrap_or(0);
    if far == 0 {
        return poly.to_vec();
    }
    let mut first = approximate_polygon_dp(&poly[..=far], epsilon, false);
    let mut back: Vec<Point<i32>> = poly[far..].to_vec();
    back.push(poly[0]);
    let second = approximate_polygon_dp(&back, epsilon, false);
    first.pop();
    first.extend(&second[..second.len() - 1]);
    first
}

/// Largest convex four-corner contour in `edges`, if any covers enough area.
fn largest_quad(edges: &GrayImage) -> Option<Quad> {
    let min_area = MIN_QUAD_FRACTION * edges.width() as f64 * edges.height() as f64;
    find_contours::<i32>(edges)
        .into_iter()
        .filter(|c| c.border_type == BorderType::Outer && c.points.len() >= 4)
        .filter_map(|c| {
            let mut hull = convex_hull(c.points);
            if hull.len() < 4 {
                return None;
            }
            let start = (0..hull.len()).min_by_key(|&i| hull[i].x + hull[i].y).unwrap_or(0);
            hull.rotate_left(start);
            let peri = arc_length(&hull, true);
            let approx = simplify_closed(&hull, 0.02 * peri);
            if approx.len() != 4 {
                return None;
            }
            let area = contour_area(&approx).abs();
            (area >= min_area).then_some((area, approx))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, pts)| {
            let p: Vec<(f64, f64)> = pts.iter().map(|p: &Point<i32>| (p.x as f64, p.y as f64)).collect();
            order_corners(&p)
        })
}

fn sample(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let px = |xi: i64, yi: i64| img.get_pixel(xi.clamp(0, w - 1) as u32, yi.clamp(0, h - 1) as u32)[0] as f64;
    let (xi, yi) = (x0 as i64, y0 as i64);
    px(xi, yi) * (1.0 - fx) * (1.0 - fy)
        + px(xi + 1, yi) * fx * (1.0 - fy)
        + px(xi, yi + 1) * (1.0 - fx) * fy
        + px(xi + 1, yi + 1) * fx * fy
}

/// Line through `pts` by total least squares, as (point, unit direction).
fn fit_line(pts: &[(f64, f64)]) -> Option<((f64, f64), (f64, f64))> {
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(((mx, my), (theta.cos(), theta.sin())))
}

/// Total least squares with two rounds of outlier rejection.
fn fit_line_robust(pts: &[(f64, f64)]) -> Option<((f64, f64), (f64, f64))> {
    let mut line = fit_line(pts)?;
    let mut kept: Vec<(f64, f64)> = pts.to_vec();
    for _ in 0..2 {
        let ((px, py), (dx, dy)) = line;
        let dist = |p: &(f64, f64)| ((p.0 - px) * dy - (p.1 - py) * dx).abs();
        let mut d: Vec<f64> = kept.iter().map(dist).collect();
        d.sort_by(f64::total_cmp);
        let cut = (d[d.len() / 2] * 3.0).max(1.0);
        kept.retain(|p| dist(p) <= cut);
        line = fit_line(&kept)?;
    }
    Some(line)
}

fn intersect(a: ((f64, f64), (f64, f64)), b: ((f64, f64), (f64, f64))) -> Option<(f64, f64)> {
    let ((px, py), (dx, dy)) = a;
    let ((qx, qy), (ex, ey)) = b;
    let den = dx * ey - dy * ex;
    if den.abs() < 1e-9 {
        return None;
    }
    let t = ((qx - px) * ey - (qy - py) * ex) / den;
    Some((px + t * dx, py + t * dy))
}

/// Snaps each side of `quad` onto the strongest nearby intensity edge and
/// re-intersects the sides. Returns the input if any side cannot be fit.
pub fn refine_quad(gray: &GrayImage, quad: &Quad, search: f64) -> Quad {
    const SAMPLES: usize = 80;
    let mut lines = Vec::with_capacity(4);
    for k in 0..4 {
        let a = quad[k];
        let b = quad[(k + 1) % 4];
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        if len < 1.0 {
            return *quad;
        }
        let d = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        let n = (-d.1, d.0);
        let mut pts = Vec::with_capacity(SAMPLES);
        for i in 0..SAMPLES {
            let t = 0.1 + 0.8 * i as f64 / (SAMPLES - 1) as f64;
            let p = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            let mut best = (0.0f64, 0.0f64);
            let steps = (search * 4.0) as i64;
            let grad = |s: f64| {
                sample(gray, p.0 + (s + 0.5) * n.0, p.1 + (s + 0.5) * n.1)
                    - sample(gray, p.0 + (s - 0.5) * n.0, p.1 + (s - 0.5) * n.1)
            };
            for j in -steps..=steps {
                let s = j as f64 * 0.25;
                let g = grad(s).abs();
                if g > best.1 {
                    best = (s, g);
                }
            }
            if best.1 < 20.0 {
                continue;
            }
            // Parabolic sub-sample peak.
            let (s, g0) = best;
            let gm = grad(s - 0.25).abs();
            let gp = grad(s + 0.25).abs();
            let den = gm - 2.0 * g0 + gp;
            let off = if den.abs() > 1e-9 { 0.125 * (gm - gp) / den } else { 0.0 };
            let s = s + off.clamp(-0.25, 0.25);
            pts.push((p.0 + s * n.0, p.1 + s * n.1));
        }
        match fit_line_robust(&pts) {
            Some(l) => lines.push(l),
            None => return *quad,
        }
    }
    let shortest = (0..4)
        .map(|k| {
            let (a, b) = (quad[k], quad[(k + 1) % 4]);
            ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    let limit = (search * 3.0).max(0.1 * shortest);
    let mut out = *quad;
    for k in 0..4 {
        match intersect(lines[(k + 3) % 4], lines[k]) {
            Some(c) if (c.0 - quad[k].0).abs() <= limit && (c.1 - quad[k].1).abs() <= limit => out[k] = c,
            _ => return *quad,
        }
    }
    out
}

/// Warps the quadrilateral `corners` of `image` onto a `width × height`
/// rectangle. Corners are in pixel-centre coordinates.
pub fn warp_quad(image: &RgbImage, corners: &Quad, width: u32, height: u32) -> Option<RgbImage> {
    let src = corners.map(|(x, y)| (x as f32, y as f32));
    let (w, h) = (width as f32, height as f32);
    let dst = [(-0.5, -0.5), (w - 0.5, -0.5), (w - 0.5, h - 0.5), (-0.5, h - 0.5)];
    let proj = Projection::from_control_points(src, dst)?;
    let mut out = RgbImage::new(width, height);
    warp_into(image, &proj, Interpolation::Bilinear, Rgb([0, 0, 0]), &mut out);
    Some(out)
}

fn best_template_rase(candidate: &RasterImage, pages: &[&TemplatePage]) -> Option<(f64, usize)> {
    pages
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let up = prepare_upload(candidate, p);
            rase(&p.thumb, &up).ok().map(|r| (r, i))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Candidate document corners in full-resolution pixel-centre
/// coordinates, one per distinct quad found over the threshold sweep.
pub fn candidate_quads(image: &RasterImage) -> Vec<Quad> {
    let (w, h) = (image.width(), image.height());
    let work = if w > WORK_WIDTH {
        image.resize_to_width(WORK_WIDTH)
    } else {
        image.clone()
    };
    let sx = w as f64 / work.width() as f64;
    let sy = h as f64 / work.height() as f64;
    let blurred = gaussian_blur_f32(&work.to_gray(), 1.0);

    let mut quads: Vec<Quad> = Vec::new();
    for t in CANNY_SWEEP {
        let edges = dilate(&canny(&blurred, t / 2.0, t), Norm::LInf, 1);
        if let Some(q) = largest_quad(&edges) {
            let full = q.map(|(x, y)| ((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5));
            let dup = quads.iter().any(|o| {
                o.iter()
                    .zip(full.iter())
                    .all(|(a, b)| (a.0 - b.0).abs() < 2.0 && (a.1 - b.1).abs() < 2.0)
            });
            if !dup {
                quads.push(full);
            }
        }
    }
    quads
}

pub fn align(image: &RasterImage, registry: &TemplateRegistry) -> Alignment {
    let w = image.width();
    let scale = w as f64 / w.min(WORK_WIDTH) as f64;
    let quads = candidate_quads(image);
    let templates = registry.snapshot();
    let pages: Vec<&TemplatePage> = templates.iter().filter_map(|t| t.pages.first()).collect();
    if quads.is_empty() || pages.is_empty() {
        return Alignment::identity(image, NO_ALIGNMENT);
    }

    let full_gray = gaussian_blur_f32(&image.to_gray(), 1.0);
    let search = scale * 2.0 + 2.0;
    let rgb = image.to_rgb_image();
    let mut best: Option<(f64, Quad, usize)> = None;
    for q in &quads {
        let once = refine_quad(&full_gray, q, search);
        let refined = refine_quad(&full_gray, &once, search);
        // Score on a modest intermediate size, then let the resize filter
        // average down to the thumbnail.
        let Some(mid) = warp_quad(&rgb, &refined, WORK_WIDTH, (WORK_WIDTH as f64 * 0.625) as u32) else {
            continue;
        };
        let cand = RasterImage::from_rgb_image(mid);
        if let Some((r, page)) = best_template_rase(&cand, &pages) {
            if best.as_ref().is_none_or(|b| r < b.0) {
                best = Some((r, refined, page));
            }
        }
    }
    let identity = best_template_rase(image, &pages).map(|(r, _)| r);
    match (best, identity) {
        (Some((r, quad, page)), id) if id.is_none_or(|i| r < i) => {
            let (tw, th) = pages[page].size();
            match warp_quad(&rgb, &quad, tw, th) {
                Some(out) => Alignment {
                    image: RasterImage::from_rgb_image(out),
                    score: r,
                    corners: Some(quad),
                },
                None => Alignment::identity(image, id.unwrap_or(NO_ALIGNMENT)),
            }
        }
        (_, Some(i)) => Alignment::identity(image, i),
        _ => Alignment::identity(image, NO_ALIGNMENT),
    }
}
