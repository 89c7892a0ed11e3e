//! Pluggable face detection used to propose photo zones.

use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use image::{GrayImage, Luma};
use imageproc::region_labelling::{connected_components, Connectivity};

use super::ObfuscateError;
use crate::raster::{RasterImage, Rect};

pub trait FaceDetector: Send + Sync {
    fn detect(&self, image: &RasterImage) -> Vec<Rect>;
}

/// Never finds anything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullFaceDetector;

impl FaceDetector for NullFaceDetector {
    fn detect(&self, _image: &RasterImage) -> Vec<Rect> {
        Vec::new()
    }
}

/// Replays rectangles recorded per image digest.
///
/// The sidecar file is a JSON object mapping the lowercase hex of
/// [`RasterImage::digest`] to a list of `{start_x,start_y,end_x,end_y}`.
#[derive(Debug, Default)]
pub struct FixtureFaceDetector {
    entries: RwLock<HashMap<String, Vec<Rect>>>,
}

impl FixtureFaceDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sidecar(path: &Path) -> Result<Self, ObfuscateError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ObfuscateError::InvalidInput(format!("{}: {e}", path.display())))?;
        let entries: HashMap<String, Vec<Rect>> = serde_json::from_str(&text)
            .map_err(|e| ObfuscateError::InvalidInput(format!("{}: {e}", path.display())))?;
        Ok(Self {
            entries: RwLock::new(entries),
        })
    }

    pub fn record(&self, image: &RasterImage, faces: Vec<Rect>) {
        self.entries
            .write()
            .expect("fixture lock")
            .insert(hex::encode(image.digest()), faces);
    }

    pub fn save_sidecar(&self, path: &Path) -> std::io::Result<()> {
        let entries = self.entries.read().expect("fixture lock");
        let text = serde_json::to_string_pretty(&*entries).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }
}

impl FaceDetector for FixtureFaceDetector {
    fn detect(&self, image: &RasterImage) -> Vec<Rect> {
        self.entries
            .read()
            .expect("fixture lock")
            .get(&hex::encode(image.digest()))
            .cloned()
            .unwrap_or_default()
    }
}

/// Skin-colour blob detector.
///
/// Marks pixels passing the classic RGB skin rule, labels 8-connected
/// blobs and keeps those that are large enough, roughly face-shaped and
/// reasonably solid.
#[derive(Debug, Clone, Copy)]
pub struct SkinToneDetector {
    /// Minimum blob area as a fraction of the image area.
    pub min_area_fraction: f64,
    /// Accepted width/height range.
    pub aspect: (f64, f64),
    /// Minimum fraction of the bounding box covered by skin pixels.
    pub min_fill: f64,
}

impl Default for SkinToneDetector {
    fn default() -> Self {
        Self {
            min_area_fraction: 0.002,
            aspect: (0.5, 1.6),
            min_fill: 0.45,
        }
    }
}

fn is_skin([r, g, b]: [u8; 3]) -> bool {
    let (r, g, b) = (r as i32, g as i32, b as i32);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    r > 95 && g > 40 && b > 20 && max - min > 15 && (r - g).abs() > 15 && r > g && r > b
}

impl FaceDetector for SkinToneDetector {
    fn detect(&self, image: &RasterImage) -> Vec<Rect> {
        let (w, h) = (image.width(), image.height());
        let mut mask = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if is_skin(image.pixel(x, y)) {
                    mask.put_pixel(x, y, Luma([255]));
                }
            }
        }
        let labels = connected_components(&mask, Connectivity::Eight, Luma([0u8]));
        // label -> (min_x, min_y, max_x, max_y, count)
        let mut boxes: HashMap<u32, (u32, u32, u32, u32, u64)> = HashMap::new();
        for (x, y, l) in labels.enumerate_pixels() {
            if l[0] == 0 {
                continue;
            }
            let e = boxes.entry(l[0]).or_insert((x, y, x, y, 0));
            e.0 = e.0.min(x);
            e.1 = e.1.min(y);
            e.2 = e.2.max(x);
            e.3 = e.3.max(y);
            e.4 += 1;
        }
        let min_area = (self.min_area_fraction * (w as f64) * (h as f64)).max(16.0);
        let mut found: Vec<Rect> = boxes
            .values()
            .filter_map(|&(x0, y0, x1, y1, count)| {
                let r = Rect::new(x0, y0, x1 + 1, y1 + 1);
                let aspect = r.width() as f64 / r.height() as f64;
                let fill = count as f64 / r.area() as f64;
                (count as f64 >= min_area
                    && aspect >= self.aspect.0
                    && aspect <= self.aspect.1
                    && fill >= self.min_fill)
                    .then_some(r)
            })
            .collect();
        found.sort_by_key(|r| (r.start_y, r.start_x));
        found
    }
}
