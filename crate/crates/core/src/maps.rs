//! Dense per-pixel score fields and their on-disk formats.
//!
//! Binary form: an ASCII header line `"<MAGIC> <height> <width>\n"` followed
//! by `height * width` little-endian `f32` values in row-major order.

use std::io::Cursor;

use image::{ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};

pub const ANOMALY_MAGIC: &str = "SAA+MAP1";
pub const SALIENCY_MAGIC: &str = "SAA+SAL1";

/// Final per-pixel anomaly scores. Uncovered pixels are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AnomalyMap {
    pub fn zeros(height: usize, width: usize) -> Self {
        AnomalyMap {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_len(height, width, values.len())?;
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidMapFile(format!("negative or non-finite score {v}")));
        }
        Ok(AnomalyMap {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_f32(ANOMALY_MAGIC, self.height, self.width, &self.values)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (height, width, values) = decode_f32(ANOMALY_MAGIC, bytes)?;
        AnomalyMap::from_values(height, width, values)
    }

    /// 16-bit grayscale PNG with `scale_max` mapped to full white.
    pub fn to_png16(&self, scale_max: f64) -> Result<Vec<u8>> {
        encode_png16(self.height, self.width, &self.values, scale_max)
    }
}

/// Per-pixel self-dissimilarity in `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_len(height, width, values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=2.0).contains(*v)) {
            return Err(Error::InvalidMapFile(format!("saliency {v} outside [0, 2]")));
        }
        Ok(SaliencyMap {
            height,
            width,
            values,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        SaliencyMap::from_values(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_f32(SALIENCY_MAGIC, self.height, self.width, &self.values)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (height, width, values) = decode_f32(SALIENCY_MAGIC, bytes)?;
        SaliencyMap::from_values(height, width, values)
    }

    /// 16-bit heat map with the `[0, 2]` range spread over full scale.
    pub fn to_png16(&self) -> Result<Vec<u8>> {
        encode_png16(self.height, self.width, &self.values, 2.0)
    }
}

fn check_len(height: usize, width: usize, len: usize) -> Result<()> {
    if len != height * width {
        return Err(Error::ShapeMismatch {
            expected: (height, width),
            got: (len, 1),
        });
    }
    Ok(())
}

fn encode_f32(magic: &str, height: usize, width: usize, values: &[f64]) -> Vec<u8> {
    let header = format!("{magic} {height} {width}\n");
    let mut out = Vec::with_capacity(header.len() + values.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn decode_f32(magic: &str, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::InvalidMapFile("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::InvalidMapFile("header is not ASCII".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(magic) {
        return Err(Error::InvalidMapFile(format!("expected `{magic}` header")));
    }
    let mut dim = || -> Result<usize> {
        fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::InvalidMapFile(format!("bad header `{header}`")))
    };
    let (height, width) = (dim()?, dim()?);
    let payload = &bytes[newline + 1..];
    if payload.len() != height * width * 4 {
        return Err(Error::InvalidMapFile(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            height * width * 4
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((height, width, values))
}

fn encode_png16(height: usize, width: usize, values: &[f64], scale_max: f64) -> Result<Vec<u8>> {
    let raw: Vec<u16> = values
        .iter()
        .map(|&v| {
            if scale_max > 0.0 {
                ((v / scale_max).clamp(0.0, 1.0) * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw).expect("buffer matches dims");
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out)
}
