//! 8-bit RGB raster images and pixel rectangles.

use std::fmt;
use std::io::Cursor;

use image::{GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CHANNELS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("not a decodable PNG: {0}")]
    Decode(String),
}

/// Row-major RGB8 raster. Alpha and grayscale inputs are converted on decode.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(RasterError::BufferLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * CHANNELS)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * CHANNELS
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copies the bytes covered by `rect`, row by row.
    ///
    /// `rect` must lie within the image.
    pub fn zone_bytes(&self, rect: &Rect) -> Vec<u8> {
        debug_assert!(rect.fits(self.width, self.height));
        let row_len = rect.width() as usize * CHANNELS;
        let mut out = Vec::with_capacity(row_len * rect.height() as usize);
        for y in rect.start_y..rect.end_y {
            let o = self.offset(rect.start_x, y);
            out.extend_from_slice(&self.data[o..o + row_len]);
        }
        out
    }

    /// Inverse of [`zone_bytes`](Self::zone_bytes).
    pub fn write_zone(&mut self, rect: &Rect, bytes: &[u8]) {
        let row_len = rect.width() as usize * CHANNELS;
        assert_eq!(bytes.len(), row_len * rect.height() as usize);
        for (row, y) in (rect.start_y..rect.end_y).enumerate() {
            let o = self.offset(rect.start_x, y);
            self.data[o..o + row_len].copy_from_slice(&bytes[row * row_len..(row + 1) * row_len]);
        }
    }

    /// Paints `rect`, clipped to the image bounds.
    pub fn fill_rect(&mut self, rect: &Rect, rgb: [u8; 3]) {
        let r = rect.clip(self.width, self.height);
        for y in r.start_y..r.end_y {
            for x in r.start_x..r.end_x {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    pub fn crop(&self, rect: &Rect) -> RasterImage {
        RasterImage {
            width: rect.width(),
            height: rect.height(),
            data: self.zone_bytes(rect),
        }
    }

    pub fn from_rgb_image(img: RgbImage) -> Self {
        let (width, height) = img.dimensions();
        Self {
            width,
            height,
            data: img.into_raw(),
        }
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction")
    }

    /// Luma conversion with BT.601 weights, rounded to u8.
    pub fn to_gray(&self) -> GrayImage {
        let px = self
            .data
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]).round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::from_raw(self.width, self.height, px).expect("dimensions match")
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        let (width, height) = gray.dimensions();
        let data = gray.as_raw().iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Bilinear (triangle filter) resize to an exact size.
    pub fn resize(&self, width: u32, height: u32) -> RasterImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let out = image::imageops::resize(
            &self.to_rgb_image(),
            width.max(1),
            height.max(1),
            image::imageops::FilterType::Triangle,
        );
        Self::from_rgb_image(out)
    }

    /// Resizes to `width`, keeping the aspect ratio.
    pub fn resize_to_width(&self, width: u32) -> RasterImage {
        let height = ((self.height as f64 * width as f64 / self.width as f64).round() as u32).max(1);
        self.resize(width, height)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        let rgb = img.to_rgb8();
        if rgb.width() == 0 || rgb.height() == 0 {
            return Err(RasterError::EmptyImage {
                width: rgb.width(),
                height: rgb.height(),
            });
        }
        Ok(Self::from_rgb_image(rgb))
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }

    /// SHA-256 over `width_be32 ‖ height_be32 ‖ pixel bytes`.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.width.to_be_bytes());
        h.update(self.height.to_be_bytes());
        h.update(&self.data);
        h.finalize().into()
    }
}

pub(crate) fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Axis-aligned pixel rectangle, inclusive start and exclusive end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub start_x: u32,
    pub start_y: u32,
    pub end_x: u32,
    pub end_y: u32,
}

impl Rect {
    pub const fn new(start_x: u32, start_y: u32, end_x: u32, end_y: u32) -> Self {
        Self {
            start_x,
            start_y,
            end_x,
            end_y,
        }
    }

    pub fn from_origin(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self::new(x, y, x + width, y + height)
    }

    pub fn width(&self) -> u32 {
        self.end_x.saturating_sub(self.start_x)
    }

    pub fn height(&self) -> u32 {
        self.end_y.saturating_sub(self.start_y)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.start_x >= self.end_x || self.start_y >= self.end_y
    }

    /// Non-empty and inside a `width`×`height` image.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        !self.is_empty() && self.end_x <= width && self.end_y <= height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.start_x < other.end_x
            && other.start_x < self.end_x
            && self.start_y < other.end_y
            && other.start_y < self.end_y
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        if !self.intersects(other) {
            return None;
        }
        Some(Rect::new(
            self.start_x.max(other.start_x),
            self.start_y.max(other.start_y),
            self.end_x.min(other.end_x),
            self.end_y.min(other.end_y),
        ))
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn clip(&self, width: u32, height: u32) -> Rect {
        Rect::new(
            self.start_x.min(width),
            self.start_y.min(height),
            self.end_x.min(width),
            self.end_y.min(height),
        )
    }

    /// Scales coordinates, rounding outward so the scaled rect covers the
    /// original region.
    pub fn scale(&self, fx: f64, fy: f64) -> Rect {
        Rect::new(
            (self.start_x as f64 * fx).floor() as u32,
            (self.start_y as f64 * fy).floor() as u32,
            (self.end_x as f64 * fx).ceil() as u32,
            (self.end_y as f64 * fy).ceil() as u32,
        )
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{})-({},{})",
            self.start_x, self.start_y, self.end_x, self.end_y
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_buffer_length() {
        assert_eq!(
            RasterImage::new(2, 2, vec![0; 11]),
            Err(RasterError::BufferLength {
                expected: 12,
                actual: 11
            })
        );
        assert!(matches!(
            RasterImage::new(0, 4, vec![]),
            Err(RasterError::EmptyImage { .. })
        ));
    }

    #[test]
    fn zone_bytes_round_trip() {
        let data: Vec<u8> = (0..5 * 4 * 3).map(|v| v as u8).collect();
        let mut img = RasterImage::new(5, 4, data).unwrap();
        let r = Rect::new(1, 1, 4, 3);
        let zone = img.zone_bytes(&r);
        assert_eq!(zone.len(), 3 * 2 * 3);
        assert_eq!(&zone[..3], &img.pixel(1, 1));
        let orig = img.clone();
        img.write_zone(&r, &vec![9; zone.len()]);
        assert_eq!(img.pixel(2, 2), [9, 9, 9]);
        img.write_zone(&r, &zone);
        assert_eq!(img, orig);
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let data: Vec<u8> = (0..7 * 3 * 3).map(|v| (v * 37 % 256) as u8).collect();
        let img = RasterImage::new(7, 3, data).unwrap();
        let back = RasterImage::decode_png(&img.encode_png()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn corrupt_png_is_rejected() {
        assert!(matches!(
            RasterImage::decode_png(b"\x89PNG\r\n\x1a\nnot really"),
            Err(RasterError::Decode(_))
        ));
    }

    #[test]
    fn rect_geometry() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(5, 5, 15, 15);
        assert!(a.intersects(&b));
        assert_eq!(a.intersection(&b), Some(Rect::new(5, 5, 10, 10)));
        assert!((a.iou(&b) - 25.0 / 175.0).abs() < 1e-12);
        // touching edges do not overlap: end is exclusive
        assert!(!a.intersects(&Rect::new(10, 0, 20, 10)));
        assert!(a.fits(10, 10));
        assert!(!a.fits(9, 10));
        assert!(!Rect::new(3, 3, 3, 5).fits(10, 10));
    }
}
