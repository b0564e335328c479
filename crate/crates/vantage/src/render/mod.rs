//! Software rendering: z-buffer rasterization of scene meshes, the annotated
//! coordinate maps handed to the agent, and the geometric pre-validation of
//! synthesized views.

mod check;
mod font;
mod maps;
mod raster;

use std::path::Path;

use thiserror::Error;

use crate::geometry::Vec3;

pub use check::{geometric_view_check, ObjectViewStats, ViewCheckReport, DEFAULT_COVERAGE_THRESHOLD};
pub use maps::{
    render_sideview_map, render_topdown_grid, render_topdown_map, side_layout, topdown_layout,
    FanEntry, MapLabel, SideLayout, TopdownLayout, AXIS_X_COLOR, AXIS_Y_COLOR, FAN_COLOR,
    GRID_COLOR, LABEL_COLOR, MAP_BACKGROUND, SIDE_FAN_PITCHES, TOPDOWN_GRID_INTERVAL,
    TOPDOWN_WINDOW,
};
pub use raster::{rasterize, rasterize_with_ids, RasterOutput, NEAR_PLANE};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("png io {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("png decode {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("unsupported bit depth in {path}: only 8-bit images are supported")]
    UnsupportedBitDepth { path: String },
    #[error("pixel buffer length {got} does not match {width}x{height}x3")]
    BufferMismatch { got: usize, width: u32, height: u32 },
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, background: [u8; 3]) -> Image {
        let mut pixels = Vec::with_capacity((width * height) as usize * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&background);
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Image, RenderError> {
        if pixels.len() != (width as usize) * (height as usize) * 3 {
            return Err(RenderError::BufferMismatch {
                got: pixels.len(),
                width,
                height,
            });
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = ((y * self.width + x) * 3) as usize;
            self.pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Flat per-object colors assigned by object index when no explicit colors
/// are configured.
pub const PALETTE: [[u8; 3]; 12] = [
    [222, 56, 49],   // red
    [38, 96, 224],   // blue
    [60, 168, 74],   // green
    [245, 148, 24],  // orange
    [150, 62, 186],  // purple
    [22, 178, 196],  // cyan
    [238, 210, 48],  // yellow
    [122, 86, 64],   // brown
    [232, 82, 152],  // pink
    [96, 114, 128],  // slate
    [136, 186, 62],  // lime
    [255, 122, 80],  // coral
];

/// Flat-shading controls for the rasterizer.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub background: [u8; 3],
    /// Explicit per-object colors; falls back to [`PALETTE`] by object index.
    pub object_colors: Option<Vec<[u8; 3]>>,
    /// Apply a Lambert term with a small ambient floor.
    pub lambert: bool,
    /// Unit direction light travels (re-normalized defensively at use).
    pub light_dir: Vec3,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: [14, 14, 18],
            object_colors: None,
            lambert: true,
            light_dir: Vec3::new(-1.0, -1.0, -2.0)
                .normalized()
                .expect("default light direction is nonzero"),
        }
    }
}

impl RenderOptions {
    pub fn object_color(&self, index: usize) -> [u8; 3] {
        if let Some(colors) = &self.object_colors {
            if let Some(c) = colors.get(index) {
                return *c;
            }
        }
        PALETTE[index % PALETTE.len()]
    }
}

/// Write an image as an 8-bit RGB PNG.
pub fn encode_png(img: &Image, path: &Path) -> Result<(), RenderError> {
    image::save_buffer(
        path,
        &img.pixels,
        img.width,
        img.height,
        image::ColorType::Rgb8,
    )
    .map_err(|e| RenderError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Encode to PNG bytes in memory (used when attaching images to prompts).
pub fn encode_png_bytes(img: &Image) -> Result<Vec<u8>, RenderError> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        &img.pixels,
        img.width,
        img.height,
        image::ColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|e| RenderError::Io {
        path: "<memory>".into(),
        reason: e.to_string(),
    })?;
    Ok(out.into_inner())
}

/// Read an 8-bit PNG back into an [`Image`]. 16-bit and float inputs are
/// rejected; 8-bit gray/alpha variants are converted to RGB.
pub fn decode_png(path: &Path) -> Result<Image, RenderError> {
    let dynimg = image::ImageReader::open(path)
        .map_err(|e| RenderError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?
        .decode()
        .map_err(|e| RenderError::Decode {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    use image::DynamicImage::*;
    match dynimg {
        ImageLuma16(_) | ImageLumaA16(_) | ImageRgb16(_) | ImageRgba16(_) | ImageRgb32F(_)
        | ImageRgba32F(_) => Err(RenderError::UnsupportedBitDepth {
            path: path.display().to_string(),
        }),
        other => {
            let rgb = other.to_rgb8();
            let (width, height) = rgb.dimensions();
            Image::from_pixels(width, height, rgb.into_raw())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(13, 9, [7, 8, 9]);
        for y in 0..9 {
            for x in 0..13 {
                img.put(x, y, [(x * 19) as u8, (y * 29) as u8, ((x + y) * 3) as u8]);
            }
        }
        let path = dir.path().join("t.png");
        encode_png(&img, &path).unwrap();
        let back = decode_png(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn one_by_one_red_payload() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(1, 1, [255, 0, 0]);
        assert_eq!(img.pixels(), &[255, 0, 0]);
        let path = dir.path().join("r.png");
        encode_png(&img, &path).unwrap();
        let back = decode_png(&path).unwrap();
        assert_eq!(back.pixels(), &[255, 0, 0]);
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let img16 = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_pixel(
            4,
            4,
            image::Rgb([65535, 0, 0]),
        );
        img16.save(&path).unwrap();
        assert!(matches!(
            decode_png(&path),
            Err(RenderError::UnsupportedBitDepth { .. })
        ));
    }

    #[test]
    fn buffer_mismatch_rejected() {
        assert!(matches!(
            Image::from_pixels(2, 2, vec![0u8; 11]),
            Err(RenderError::BufferMismatch { .. })
        ));
    }
}
