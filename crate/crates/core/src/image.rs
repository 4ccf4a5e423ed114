//! RGB images normalized to `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::imageops::FilterType;
use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::Mask;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub category: String,
    height: usize,
    width: usize,
    /// Row-major, interleaved RGB.
    pixels: Vec<f32>,
    pub original_size: (usize, usize),
}

impl ImageRecord {
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        height: usize,
        width: usize,
        pixels: Vec<f32>,
    ) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::InvalidImage(format!(
                "{} values for a {height}x{width}x3 image",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(ImageRecord {
            id: id.into(),
            category: category.into(),
            height,
            width,
            pixels,
            original_size: (height, width),
        })
    }

    pub fn from_rgb8(id: impl Into<String>, category: impl Into<String>, rgb: &RgbImage) -> Self {
        let (w, h) = rgb.dimensions();
        let pixels = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        ImageRecord {
            id: id.into(),
            category: category.into(),
            height: h as usize,
            width: w as usize,
            pixels,
            original_size: (h as usize, w as usize),
        }
    }

    /// Loads any supported image file, converts to RGB and resizes to a
    /// `resolution × resolution` working image.
    pub fn load(path: &Path, id: &str, category: &str, resolution: usize) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::UnreadableImage {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let original = (rgb.height() as usize, rgb.width() as usize);
        let resized = if original == (resolution, resolution) {
            rgb
        } else {
            image::imageops::resize(&rgb, resolution as u32, resolution as u32, FilterType::Triangle)
        };
        let mut record = ImageRecord::from_rgb8(id, category, &resized);
        record.original_size = original;
        Ok(record)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self
            .pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer matches dims")
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.to_rgb8()
            .write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
            .map_err(|e| Error::Codec(e.to_string()))?;
        Ok(out)
    }

    pub fn from_png_bytes(id: &str, category: &str, bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes).map_err(|e| Error::Codec(e.to_string()))?;
        Ok(ImageRecord::from_rgb8(id, category, &img.to_rgb8()))
    }
}

/// Loads a ground-truth mask (any nonzero pixel is positive), resized to the
/// working resolution with nearest-neighbour sampling.
pub fn load_mask(path: &Path, resolution: usize) -> Result<Mask> {
    let img = image::open(path).map_err(|e| Error::UnreadableImage {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let luma = img.to_luma8();
    let resized = if luma.dimensions() == (resolution as u32, resolution as u32) {
        luma
    } else {
        image::imageops::resize(&luma, resolution as u32, resolution as u32, FilterType::Nearest)
    };
    Ok(Mask::from_fn(resolution, resolution, |x, y| {
        resized.get_pixel(x as u32, y as u32).0[0] != 0
    }))
}

pub fn mask_to_png(mask: &Mask) -> Result<Vec<u8>> {
    let raw = mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer matches dims");
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out)
}
