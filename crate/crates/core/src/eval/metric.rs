//! Pooled pixel-level max-F1.
//!
//! All pixels of all maps go into one pool. A pixel is predicted positive at
//! threshold `t` when its score is `>= t`. Candidate thresholds are the
//! unique scores, thinned to at most [`MAX_THRESHOLDS`] evenly spaced
//! quantiles of that set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mask;
use crate::maps::AnomalyMap;

pub const MAX_THRESHOLDS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxF1 {
    pub score: f64,
    pub threshold: f64,
    pub positive_pixels: u64,
    pub total_pixels: u64,
}

pub fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Accumulates `(score, is_positive)` pixels across images.
#[derive(Debug, Clone, Default)]
pub struct PixelPool {
    pixels: Vec<(f64, bool)>,
    positives: u64,
}

impl PixelPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, prediction: &AnomalyMap, ground_truth: &Mask) -> Result<()> {
        if prediction.shape() != ground_truth.shape() {
            return Err(Error::ShapeMismatch {
                expected: ground_truth.shape(),
                got: prediction.shape(),
            });
        }
        self.pixels.reserve(prediction.values().len());
        for (&v, &g) in prediction.values().iter().zip(ground_truth.bits()) {
            self.pixels.push((v, g));
            self.positives += g as u64;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// F1 with positives at `value >= threshold`.
    pub fn f1_at(&self, threshold: f64) -> f64 {
        let (mut tp, mut fp) = (0u64, 0u64);
        for &(v, g) in &self.pixels {
            if v >= threshold {
                if g {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        f1(tp, fp, self.positives - tp)
    }

    pub fn max_f1(mut self) -> Result<MaxF1> {
        if self.positives == 0 {
            return Err(Error::NoPositivePixels);
        }
        self.pixels.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        let mut unique: Vec<f64> = Vec::new();
        for &(v, _) in &self.pixels {
            if unique.last() != Some(&v) {
                unique.push(v);
            }
        }
        let thresholds: Vec<f64> = if unique.len() > MAX_THRESHOLDS {
            let last = unique.len() - 1;
            let mut picked: Vec<f64> = (0..MAX_THRESHOLDS)
                .map(|i| unique[(i * last + (MAX_THRESHOLDS - 1) / 2) / (MAX_THRESHOLDS - 1)])
                .collect();
            picked.dedup();
            picked
        } else {
            unique
        };

        // Thresholds are descending; sweep the sorted pool once.
        let (mut tp, mut fp, mut cursor) = (0u64, 0u64, 0usize);
        let mut best = MaxF1 {
            score: -1.0,
            threshold: 0.0,
            positive_pixels: self.positives,
            total_pixels: self.pixels.len() as u64,
        };
        for t in thresholds {
            while cursor < self.pixels.len() && self.pixels[cursor].0 >= t {
                if self.pixels[cursor].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                cursor += 1;
            }
            let score = f1(tp, fp, self.positives - tp);
            if score > best.score {
                best.score = score;
                best.threshold = t;
            }
        }
        Ok(best)
    }
}

/// Pooled max-F1 over paired predictions and ground truths.
pub fn max_f1_pixel(predictions: &[AnomalyMap], ground_truths: &[Mask]) -> Result<MaxF1> {
    if predictions.len() != ground_truths.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: ground_truths.len(),
        });
    }
    let mut pool = PixelPool::new();
    for (p, g) in predictions.iter().zip(ground_truths) {
        pool.add(p, g)?;
    }
    pool.max_f1()
}
