//! Crop preprocessing and the enhancement retry ladder.

use image::{GrayImage, Luma};
use imageproc::contrast::{otsu_level, threshold, ThresholdType};
use imageproc::filter::median_filter;
use serde::{Deserialize, Serialize};

pub const ADAPTIVE_BLOCK: u32 = 11;
pub const ADAPTIVE_C: i32 = 2;

/// Mean adaptive threshold: a pixel stays white when it is brighter than
/// the mean of its `block × block` neighbourhood minus `c`.
pub fn adaptive_threshold(img: &GrayImage, block: u32, c: i32) -> GrayImage {
    let (w, h) = img.dimensions();
    let (wu, hu) = (w as usize, h as usize);
    let mut sat = vec![0u64; (wu + 1) * (hu + 1)];
    for y in 0..hu {
        let mut row = 0u64;
        for x in 0..wu {
            row += img.get_pixel(x as u32, y as u32)[0] as u64;
            sat[(y + 1) * (wu + 1) + x + 1] = sat[y * (wu + 1) + x + 1] + row;
        }
    }
    let r = (block / 2) as i64;
    let mut out = GrayImage::new(w, h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let x0 = (x - r).max(0) as usize;
            let y0 = (y - r).max(0) as usize;
            let x1 = ((x + r + 1) as usize).min(wu);
            let y1 = ((y + r + 1) as usize).min(hu);
            let sum = sat[y1 * (wu + 1) + x1] + sat[y0 * (wu + 1) + x0]
                - sat[y0 * (wu + 1) + x1]
                - sat[y1 * (wu + 1) + x0];
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            let t = sum as f64 / n - c as f64;
            let v = img.get_pixel(x as u32, y as u32)[0] as f64;
            out.put_pixel(x as u32, y as u32, Luma([if v > t { 255 } else { 0 }]));
        }
    }
    out
}

/// Default preprocessing before OCR.
pub fn preprocess(gray: &GrayImage) -> GrayImage {
    adaptive_threshold(gray, ADAPTIVE_BLOCK, ADAPTIVE_C)
}

/// Enhancements tried, in order, when a field fails validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enhancement {
    Brightness,
    Sharpness,
    Contrast,
    Binarization,
    NoiseRemoval,
}

impl Enhancement {
    pub const LADDER: [Enhancement; 5] = [
        Enhancement::Brightness,
        Enhancement::Sharpness,
        Enhancement::Contrast,
        Enhancement::Binarization,
        Enhancement::NoiseRemoval,
    ];

    pub fn apply(self, img: &GrayImage) -> GrayImage {
        match self {
            Enhancement::Brightness => map_pixels(img, |v| v * 1.15),
            Enhancement::Sharpness => sharpen(img, 1.5),
            Enhancement::Contrast => stretch(img),
            Enhancement::Binarization => {
                threshold(img, otsu_level(img), ThresholdType::Binary)
            }
            Enhancement::NoiseRemoval => median_filter(img, 1, 1),
        }
    }

    /// Image handed to the OCR engine for this retry. Binarization already
    /// yields a two-level image, so it skips the adaptive threshold.
    pub fn prepare(self, gray: &GrayImage) -> GrayImage {
        let e = self.apply(gray);
        if self == Enhancement::Binarization {
            e
        } else {
            preprocess(&e)
        }
    }
}

fn map_pixels(img: &GrayImage, f: impl Fn(f64) -> f64) -> GrayImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        p[0] = f(p[0] as f64).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Blend away from a 3×3 smoothed copy: `smooth + k·(img − smooth)`.
fn sharpen(img: &GrayImage, k: f64) -> GrayImage {
    const KERNEL: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]];
    let (w, h) = img.dimensions();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ky, row) in KERNEL.iter().enumerate() {
                for (kx, kv) in row.iter().enumerate() {
                    let sx = (x as i64 + kx as i64 - 1).clamp(0, w as i64 - 1) as u32;
                    let sy = (y as i64 + ky as i64 - 1).clamp(0, h as i64 - 1) as u32;
                    acc += kv * img.get_pixel(sx, sy)[0] as f64;
                }
            }
            let smooth = acc / 13.0;
            let v = smooth + k * (img.get_pixel(x, y)[0] as f64 - smooth);
            out.put_pixel(x, y, Luma([v.round().clamp(0.0, 255.0) as u8]));
        }
    }
    out
}

fn stretch(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img
        .pixels()
        .fold((255u8, 0u8), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])));
    if hi <= lo {
        return img.clone();
    }
    let span = (hi - lo) as f64;
    map_pixels(img, |v| (v - lo as f64) * 255.0 / span)
}
