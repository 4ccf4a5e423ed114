//! Binary masks, boxes and region candidates.
//!
//! Coordinates are `(x, y)` with `x` horizontal, `y` vertical and the origin
//! at the top-left pixel. Boxes are half-open: `(x0, y0, x1, y1)` covers
//! columns `x0..x1` and rows `y0..y1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dense row-major binary mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mask")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("area", &self.area())
            .finish()
    }
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: (height, width),
                got: (bits.len(), 1),
            });
        }
        Ok(Mask {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask {
            height,
            width,
            bits,
        }
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn area(&self) -> usize {
        mask_area(self)
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn intersection_area(&self, other: &Mask) -> Result<usize> {
        self.check_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    pub fn union_area(&self, other: &Mask) -> Result<usize> {
        self.check_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a || **b)
            .count())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.check_shape(other)?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(Mask {
            height: self.height,
            width: self.width,
            bits,
        })
    }

    pub fn check_shape(&self, other: &Mask) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }

    /// Run-length text form: `"height width r0 r1 ..."`, row-major, runs
    /// alternate starting with a (possibly zero) run of unset pixels.
    pub fn to_rle(&self) -> String {
        let mut out = format!("{} {}", self.height, self.width);
        let mut current = false;
        let mut run = 0usize;
        for &bit in &self.bits {
            if bit == current {
                run += 1;
            } else {
                out.push_str(&format!(" {run}"));
                current = bit;
                run = 1;
            }
        }
        if run > 0 || self.bits.is_empty() {
            out.push_str(&format!(" {run}"));
        }
        out
    }

    pub fn from_rle(text: &str) -> Result<Mask> {
        let mut fields = text.split_whitespace();
        let mut header = |what: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::InvalidRle(format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| Error::InvalidRle(format!("bad {what}: {e}")))
        };
        let height = header("height")?;
        let width = header("width")?;
        let total = height * width;
        let mut bits = Vec::with_capacity(total);
        let mut value = false;
        for field in fields {
            let run: usize = field
                .parse()
                .map_err(|e| Error::InvalidRle(format!("bad run `{field}`: {e}")))?;
            if bits.len() + run > total {
                return Err(Error::InvalidRle(format!(
                    "runs exceed {height}x{width} pixels"
                )));
            }
            bits.extend(std::iter::repeat_n(value, run));
            value = !value;
        }
        if bits.len() != total {
            return Err(Error::InvalidRle(format!(
                "runs cover {} of {total} pixels",
                bits.len()
            )));
        }
        Ok(Mask {
            height,
            width,
            bits,
        })
    }

    /// Tight half-open bounding box of the set pixels.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != usize::MAX).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rle())
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Mask::from_rle(&text).map_err(serde::de::Error::custom)
    }
}

/// Number of set pixels.
pub fn mask_area(mask: &Mask) -> usize {
    mask.bits.iter().filter(|&&b| b).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMeasure {
    Iou,
    /// `|c ∩ o| / |c|`: how much of the candidate lies inside the object.
    #[default]
    Containment,
}

impl FromStr for OverlapMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iou" => Ok(OverlapMeasure::Iou),
            "containment" => Ok(OverlapMeasure::Containment),
            other => Err(Error::InvalidProfile(format!(
                "unknown overlap measure `{other}`"
            ))),
        }
    }
}

/// Overlap of `candidate` with `object`, in `[0, 1]`.
pub fn overlap(candidate: &Mask, object: &Mask, measure: OverlapMeasure) -> Result<f64> {
    let inter = candidate.intersection_area(object)?;
    let denom = match measure {
        OverlapMeasure::Iou => candidate.union_area(object)?,
        OverlapMeasure::Containment => candidate.area(),
    };
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / denom as f64)
}

/// Detector output: a half-open pixel box with its confidence and phrase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCandidate {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    score: f64,
    phrase: String,
}

impl BoxCandidate {
    pub fn new(
        (x0, y0, x1, y1): (u32, u32, u32, u32),
        score: f64,
        phrase: impl Into<String>,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if !(x0 < x1 && y0 < y1 && x1 as usize <= width && y1 as usize <= height) {
            return Err(Error::InvalidBox {
                x0,
                y0,
                x1,
                y1,
                width: width as u32,
                height: height as u32,
            });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidScore(score));
        }
        Ok(BoxCandidate {
            x0,
            y0,
            x1,
            y1,
            score,
            phrase: phrase.into(),
        })
    }

    pub fn coords(&self) -> (u32, u32, u32, u32) {
        (self.x0, self.y0, self.x1, self.y1)
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn phrase(&self) -> &str {
        &self.phrase
    }

    pub fn area(&self) -> usize {
        ((self.x1 - self.x0) * (self.y1 - self.y0)) as usize
    }
}

/// Mask with exactly the box interior set.
pub fn rasterize_box(bx: &BoxCandidate, height: usize, width: usize) -> Mask {
    let (x0, y0, x1, y1) = bx.coords();
    let (x0, x1) = (x0 as usize, (x1 as usize).min(width));
    let (y0, y1) = (y0 as usize, (y1 as usize).min(height));
    Mask::from_fn(height, width, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Generated,
    Refined,
    Filtered,
    Rescored,
    Selected,
}

/// A candidate anomaly region at some point in the cascade.
///
/// Scores are unbounded above: saliency rescoring multiplies by up to `e²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCandidate {
    pub phrase: String,
    pub score: f64,
    pub stage_tag: StageTag,
    pub mask: Mask,
}

impl RegionCandidate {
    pub fn new(mask: Mask, score: f64, phrase: impl Into<String>, stage_tag: StageTag) -> Result<Self> {
        let phrase = phrase.into();
        if !(score >= 0.0 && score.is_finite()) {
            return Err(Error::InvalidScore(score));
        }
        if stage_tag >= StageTag::Refined && mask.is_empty() {
            return Err(Error::EmptyMask(phrase));
        }
        Ok(RegionCandidate {
            phrase,
            score,
            stage_tag,
            mask,
        })
    }

    pub fn with_tag(mut self, tag: StageTag) -> Self {
        self.stage_tag = tag;
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }
}
