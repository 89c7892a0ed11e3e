//! OCR engine interface and the deterministic glyph decoder.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::font::{self, Bitmap, GLYPH_H, GLYPH_W, PITCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrOutput {
    pub text: String,
    /// Engine confidence in `[0, 1]`.
    pub confidence: f64,
}

/// Recognizes a single text line. Ink is dark on a light background.
pub trait OcrEngine: Send + Sync {
    fn recognize(&self, image: &GrayImage) -> OcrOutput;
}

/// Decoder for text drawn with the built-in 5×7 font at any scale.
///
/// The line is split into glyphs at blank columns, the cell size comes from
/// the line height, and each glyph is matched against every font bitmap by
/// per-cell ink coverage.
#[derive(Debug, Clone, Copy)]
pub struct GlyphOcr {
    /// Grey level below which a pixel counts as ink.
    pub ink_level: u8,
}

impl Default for GlyphOcr {
    fn default() -> Self {
        Self { ink_level: 128 }
    }
}

struct Mask {
    w: usize,
    h: usize,
    ink: Vec<f64>,
}

impl Mask {
    fn at(&self, x: usize, y: usize) -> f64 {
        self.ink[y * self.w + x]
    }

    /// Mean ink over a fractional pixel box, weighting partial pixels by
    /// overlap.
    fn box_mean(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let (mut acc, mut area) = (0.0, 0.0);
        let ys = y0.floor().max(0.0) as usize;
        let ye = (y1.ceil() as usize).min(self.h);
        let xs = x0.floor().max(0.0) as usize;
        let xe = (x1.ceil() as usize).min(self.w);
        for y in ys..ye {
            let oy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
            if oy == 0.0 {
                continue;
            }
            for x in xs..xe {
                let ox = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
                acc += self.at(x, y) * ox * oy;
                area += ox * oy;
            }
        }
        if area == 0.0 {
            0.0
        } else {
            acc / area
        }
    }
}

struct Segment {
    x0: f64,
    x1: f64,
}

struct Decoded {
    ch: char,
    bitmap: &'static Bitmap,
    distance: f64,
}

impl GlyphOcr {
    fn mask(&self, img: &GrayImage) -> Mask {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw: Vec<bool> = img.pixels().map(|p| p[0] < self.ink_level).collect();
        // Drop ink pixels with no inked 8-neighbour.
        let mut ink = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                if !raw[y * w + x] {
                    continue;
                }
                let mut neighbours = false;
                'n: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0
                            && ny >= 0
                            && (nx as usize) < w
                            && (ny as usize) < h
                            && raw[ny as usize * w + nx as usize]
                        {
                            neighbours = true;
                            break 'n;
                        }
                    }
                }
                if neighbours {
                    ink[y * w + x] = 1.0;
                }
            }
        }
        Mask { w, h, ink }
    }

    fn classify(&self, m: &Mask, seg: &Segment, top: f64, cell: f64) -> Decoded {
        let seg_w = seg.x1 - seg.x0;
        let mut best: Option<Decoded> = None;
        for (ch, bm) in font::glyphs() {
            let (c0, c1) = font::ink_columns(bm).expect("font glyphs have ink");
            let gw = c1 - c0 + 1;
            let cw = seg_w / gw as f64;
            let mut d = 0.0;
            for r in 0..GLYPH_H {
                let y0 = top + r as f64 * cell;
                for c in 0..gw {
                    let x0 = seg.x0 + c as f64 * cw;
                    let cov = m.box_mean(x0, x0 + cw, y0, y0 + cell);
                    let bit = if font::ink(bm, r, c0 + c) { 1.0 } else { 0.0 };
                    d += (cov - bit).abs();
                }
            }
            // Penalize width disagreement by the cells it implies.
            d += (seg_w / cell - gw as f64).abs() * GLYPH_H as f64 * 0.5;
            if best.as_ref().is_none_or(|b| d < b.distance) {
                best = Some(Decoded {
                    ch,
                    bitmap: bm,
                    distance: d,
                });
            }
        }
        best.expect("font is non-empty")
    }
}

impl OcrEngine for GlyphOcr {
    fn recognize(&self, image: &GrayImage) -> OcrOutput {
        let empty = OcrOutput {
            text: String::new(),
            confidence: 0.0,
        };
        let m = self.mask(image);
        let rows: Vec<usize> = (0..m.h)
            .filter(|&y| (0..m.w).any(|x| m.at(x, y) > 0.0))
            .collect();
        let (Some(&top), Some(&bottom)) = (rows.first(), rows.last()) else {
            return empty;
        };
        let line_h = (bottom - top + 1) as f64;
        let cell = line_h / GLYPH_H as f64;

        let mut segments = Vec::new();
        let mut start: Option<usize> = None;
        for x in 0..=m.w {
            let inked = x < m.w && (top..=bottom).any(|y| m.at(x, y) > 0.0);
            match (inked, start) {
                (true, None) => start = Some(x),
                (false, Some(s)) => {
                    segments.push(Segment {
                        x0: s as f64,
                        x1: x as f64,
                    });
                    start = None;
                }
                _ => {}
            }
        }
        // Split runs too wide for one glyph into equal-pitch pieces.
        let mut pieces = Vec::new();
        for s in segments {
            let cells = (s.x1 - s.x0) / cell;
            if cells > GLYPH_W as f64 + 0.75 {
                let k = ((cells + 1.0) / PITCH as f64).round().max(1.0);
                let pitch = (s.x1 - s.x0 + cell) / k;
                for i in 0..k as usize {
                    let x0 = s.x0 + i as f64 * pitch;
                    pieces.push(Segment {
                        x0,
                        x1: (x0 + pitch - cell).min(s.x1),
                    });
                }
            } else {
                pieces.push(s);
            }
        }

        let decoded: Vec<(Segment, Decoded)> = pieces
            .into_iter()
            .map(|s| {
                let d = self.classify(&m, &s, top as f64, cell);
                (s, d)
            })
            .collect();

        let mut text = String::new();
        let mut conf_sum = 0.0;
        for (i, (seg, dec)) in decoded.iter().enumerate() {
            if i > 0 {
                let (prev_seg, prev) = &decoded[i - 1];
                let (_, prev_c1) = font::ink_columns(prev.bitmap).unwrap();
                let (c0, _) = font::ink_columns(dec.bitmap).unwrap();
                let expected = 1 + (GLYPH_W - 1 - prev_c1) + c0;
                let gap = (seg.x0 - prev_seg.x1) / cell;
                let spaces = ((gap - expected as f64) / PITCH as f64).round();
                for _ in 0..spaces.max(0.0) as usize {
                    text.push(' ');
                }
            }
            text.push(dec.ch);
            conf_sum += (1.0 - dec.distance / (GLYPH_W * GLYPH_H) as f64).clamp(0.0, 1.0);
        }
        OcrOutput {
            text,
            confidence: conf_sum / decoded.len() as f64,
        }
    }
}
