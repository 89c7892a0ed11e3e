//! A fixed 5×7 bitmap font shared by the corpus renderer and the glyph OCR.
//!
//! Characters are drawn on a 6-cell pitch (5 glyph columns plus one blank
//! column), each cell `scale × scale` pixels.

use crate::raster::RasterImage;

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;
pub const PITCH: usize = GLYPH_W + 1;

pub type Bitmap = [u8; GLYPH_H];

/// Row bitmaps, most significant of the low five bits is the leftmost column.
const GLYPHS: &[(char, Bitmap)] = &[
    ('0', [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110]),
    ('1', [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110]),
    ('2', [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111]),
    ('3', [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110]),
    ('4', [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010]),
    ('5', [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110]),
    ('6', [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110]),
    ('7', [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000]),
    ('8', [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110]),
    ('9', [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100]),
    ('A', [0b01110, 0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001]),
    ('B', [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110]),
    ('C', [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110]),
    ('D', [0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100]),
    ('E', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111]),
    ('F', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000]),
    ('G', [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111]),
    ('H', [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('I', [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110]),
    ('J', [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100]),
    ('K', [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001]),
    ('L', [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111]),
    ('M', [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001]),
    ('N', [0b10001, 0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001]),
    ('O', [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110]),
    ('P', [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000]),
    ('Q', [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101]),
    ('R', [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001]),
    ('S', [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110]),
    ('T', [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100]),
    ('U', [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110]),
    ('V', [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100]),
    ('W', [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010]),
    ('X', [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001]),
    ('Y', [0b10001, 0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100]),
    ('Z', [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111]),
    ('.', [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100]),
    (',', [0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b00100, 0b01000]),
    ('-', [0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000]),
    ('/', [0b00000, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b00000]),
];

pub fn glyphs() -> impl Iterator<Item = (char, &'static Bitmap)> {
    GLYPHS.iter().map(|(c, b)| (*c, b))
}

pub fn glyph(c: char) -> Option<&'static Bitmap> {
    if c == ' ' {
        const BLANK: Bitmap = [0; GLYPH_H];
        return Some(&BLANK);
    }
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, b)| b)
}

pub fn supports(text: &str) -> bool {
    text.chars().all(|c| glyph(c).is_some())
}

#[inline]
pub fn ink(bitmap: &Bitmap, row: usize, col: usize) -> bool {
    bitmap[row] >> (GLYPH_W - 1 - col) & 1 == 1
}

/// Inclusive range of columns holding ink, or `None` for a blank glyph.
pub fn ink_columns(bitmap: &Bitmap) -> Option<(usize, usize)> {
    let cols: Vec<usize> = (0..GLYPH_W)
        .filter(|&c| (0..GLYPH_H).any(|r| ink(bitmap, r, c)))
        .collect();
    Some((*cols.first()?, *cols.last()?))
}

/// Pixel width of `text` rendered at `scale`, excluding the trailing gap.
pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        return 0;
    }
    (n * PITCH as u32 - 1) * scale
}

pub fn text_height(scale: u32) -> u32 {
    GLYPH_H as u32 * scale
}

/// Draws `text` with its top-left cell at `(x, y)`; pixels falling outside
/// the image are skipped. Unsupported characters render blank.
pub fn draw_text(img: &mut RasterImage, x: u32, y: u32, text: &str, scale: u32, rgb: [u8; 3]) {
    for (i, ch) in text.chars().enumerate() {
        let Some(bm) = glyph(ch) else { continue };
        let gx = x + (i * PITCH) as u32 * scale;
        for r in 0..GLYPH_H {
            for c in 0..GLYPH_W {
                if !ink(bm, r, c) {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let px = gx + c as u32 * scale + dx;
                        let py = y + r as u32 * scale + dy;
                        if px < img.width() && py < img.height() {
                            img.set_pixel(px, py, rgb);
                        }
                    }
                }
            }
        }
    }
}
