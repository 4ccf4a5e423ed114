//! Deterministic feature extractor: mean RGB of each cell of a fixed grid.

use super::{BackendDescriptor, FeatureExtractor};
use crate::error::{BackendError, Error};
use crate::image::ImageRecord;
use crate::saliency::FeatureGrid;

pub const DEFAULT_GRID: usize = 20;

#[derive(Debug, Clone, Copy)]
pub struct GridMeanFeatures {
    pub grid: usize,
}

impl Default for GridMeanFeatures {
    fn default() -> Self {
        GridMeanFeatures { grid: DEFAULT_GRID }
    }
}

impl GridMeanFeatures {
    /// Cell `i` along an axis of length `len` spans `[i*len/g, (i+1)*len/g)`.
    pub fn compute(&self, image: &ImageRecord) -> Result<FeatureGrid, Error> {
        let gh = self.grid.min(image.height()).max(1);
        let gw = self.grid.min(image.width()).max(1);
        let mut data = Vec::with_capacity(gh * gw * 3);
        for gy in 0..gh {
            let (y0, y1) = (gy * image.height() / gh, (gy + 1) * image.height() / gh);
            for gx in 0..gw {
                let (x0, x1) = (gx * image.width() / gw, (gx + 1) * image.width() / gw);
                let mut sum = [0.0f64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = image.pixel(x, y);
                        for c in 0..3 {
                            sum[c] += p[c] as f64;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)).max(1) as f64;
                data.extend(sum.iter().map(|s| s / n));
            }
        }
        FeatureGrid::from_raw(gh, gw, 3, data)
    }
}

impl FeatureExtractor for GridMeanFeatures {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "grid-mean-rgb".into(),
            max_prompt_length: None,
            score_semantics: "unit-normalized mean RGB per cell".into(),
            reentrant: true,
        }
    }

    fn grid_shape(&self) -> Option<(usize, usize, usize)> {
        Some((self.grid, self.grid, 3))
    }

    fn extract(&self, image: &ImageRecord) -> Result<FeatureGrid, BackendError> {
        self.compute(image)
            .map_err(|e| BackendError::Contract(e.to_string()))
    }
}
