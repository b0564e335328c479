//! Embedded 5x7 bitmap glyphs for the digits, minus, and decimal point used
//! by the coordinate-map labels. Each glyph row holds 5 bits, MSB first.

use super::Image;

const GLYPH_WIDTH: u32 = 5;
const GLYPH_HEIGHT: u32 = 7;

fn glyph(c: char) -> Option<[u8; 7]> {
    let rows = match c {
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        '-' => [0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000],
        '.' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100],
        _ => return None,
    };
    Some(rows)
}

/// Pixel width of `text` drawn at `scale` (1 px inter-glyph gap per scale).
pub fn text_width(text: &str, scale: u32) -> u32 {
    let n = text.chars().count() as u32;
    if n == 0 {
        0
    } else {
        n * (GLYPH_WIDTH + 1) * scale - scale
    }
}

pub fn text_height(scale: u32) -> u32 {
    GLYPH_HEIGHT * scale
}

/// Stamp `text` with its top-left corner at (x, y). Characters without a
/// glyph advance the cursor but draw nothing.
pub fn draw_text(img: &mut Image, x: i32, y: i32, text: &str, scale: u32, color: [u8; 3]) {
    let mut cursor = x;
    for c in text.chars() {
        if let Some(rows) = glyph(c) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..GLYPH_WIDTH {
                    if row & (1 << (GLYPH_WIDTH - 1 - rx)) != 0 {
                        for sy in 0..scale {
                            for sx in 0..scale {
                                let px = cursor + (rx * scale + sx) as i32;
                                let py = y + (ry as u32 * scale + sy) as i32;
                                if px >= 0 && py >= 0 {
                                    img.put(px as u32, py as u32, color);
                                }
                            }
                        }
                    }
                }
            }
        }
        cursor += ((GLYPH_WIDTH + 1) * scale) as i32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_visible_pixels_for_numeric_text() {
        let mut img = Image::new(64, 16, [0, 0, 0]);
        draw_text(&mut img, 1, 1, "-0.5", 1, [255, 255, 255]);
        let lit = img
            .pixels()
            .chunks(3)
            .filter(|p| p == &[255, 255, 255])
            .count();
        assert!(lit > 10);
        assert_eq!(text_width("-0.5", 1), 23);
        assert_eq!(text_height(2), 14);
    }
}
