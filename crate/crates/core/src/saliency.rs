//! kNN self-similarity saliency and the exponential saliency prompts.
//!
//! Each feature cell is scored by its mean cosine dissimilarity to its
//! `N'` most similar other cells, `N' = min(N, cells - 1)`. Ties in
//! similarity go to the lower row-major index.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geometry::RegionCandidate;
use crate::maps::SaliencyMap;

/// `gh × gw` grid of unit-norm feature vectors, row-major, `d` values per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    /// Builds a grid, unit-normalizing every vector. Zero (or non-finite)
    /// vectors are replaced by the first basis vector.
    pub fn from_raw(height: usize, width: usize, dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != height * width * dim {
            return Err(Error::InvalidImage(format!(
                "feature buffer of {} values does not match {height}x{width}x{dim}",
                data.len()
            )));
        }
        for cell in data.chunks_exact_mut(dim) {
            let norm = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                cell.iter_mut().for_each(|v| *v /= norm);
            } else {
                cell.iter_mut().for_each(|v| *v = 0.0);
                cell[0] = 1.0;
            }
        }
        Ok(FeatureGrid {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.dim)
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    pub fn cell(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Saliency at grid resolution.
pub fn saliency_map(features: &FeatureGrid, n_neighbors: usize) -> Result<SaliencyMap> {
    let cells = features.cells();
    if cells < 2 {
        return Err(Error::DegenerateGrid(cells));
    }
    if n_neighbors == 0 {
        return Err(Error::InvalidProfile("n_neighbors must be at least 1".into()));
    }
    let k = n_neighbors.min(cells - 1);
    let mut values = Vec::with_capacity(cells);
    let mut sims: Vec<(f64, usize)> = Vec::with_capacity(cells - 1);
    for i in 0..cells {
        let fi = features.cell(i);
        sims.clear();
        sims.extend(
            (0..cells)
                .filter(|&j| j != i)
                .map(|j| (dot(fi, features.cell(j)), j)),
        );
        let by_similarity = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if k < sims.len() {
            sims.select_nth_unstable_by(k - 1, by_similarity);
        }
        let nearest = &mut sims[..k];
        nearest.sort_unstable_by(by_similarity);
        let mean = nearest.iter().map(|(s, _)| 1.0 - s).sum::<f64>() / k as f64;
        values.push(mean.clamp(0.0, 2.0));
    }
    SaliencyMap::from_values(features.height, features.width, values)
}

/// Bilinear upsampling with corner-aligned sampling: output pixel `x` reads
/// the grid at `x * (gw - 1) / (width - 1)`.
pub fn upsample_saliency(map: &SaliencyMap, height: usize, width: usize) -> Result<SaliencyMap> {
    let (gh, gw) = map.shape();
    if gh == 0 || gw == 0 || height == 0 || width == 0 {
        return Err(Error::ShapeMismatch {
            expected: (height, width),
            got: (gh, gw),
        });
    }
    if (gh, gw) == (height, width) {
        return Ok(map.clone());
    }
    let axis = |out: usize, grid: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|i| {
                if out == 1 || grid == 1 {
                    return (0, 0, 0.0);
                }
                let pos = i as f64 * (grid - 1) as f64 / (out - 1) as f64;
                let lo = (pos.floor() as usize).min(grid - 1);
                let hi = (lo + 1).min(grid - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let ys = axis(height, gh);
    let xs = axis(width, gw);
    let mut values = Vec::with_capacity(height * width);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = map.get(x0, y0) * (1.0 - tx) + map.get(x1, y0) * tx;
            let bottom = map.get(x0, y1) * (1.0 - tx) + map.get(x1, y1) * tx;
            values.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 2.0));
        }
    }
    SaliencyMap::from_values(height, width, values)
}

/// One prompt per candidate: `exp` of the mean saliency under its mask.
pub fn saliency_prompts(saliency: &SaliencyMap, candidates: &[RegionCandidate]) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|c| {
            if c.mask.shape() != saliency.shape() {
                return Err(Error::ShapeMismatch {
                    expected: saliency.shape(),
                    got: c.mask.shape(),
                });
            }
            let (sum, count) = c
                .mask
                .bits()
                .iter()
                .zip(saliency.values())
                .filter(|(b, _)| **b)
                .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
            if count == 0 {
                return Err(Error::EmptyMask(c.phrase.clone()));
            }
            Ok((sum / count as f64).exp())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mask, StageTag};

    fn grid(h: usize, w: usize, rows: &[&[f64]]) -> FeatureGrid {
        let dim = rows[0].len();
        FeatureGrid::from_raw(h, w, dim, rows.iter().flat_map(|r| r.iter().copied()).collect())
            .unwrap()
    }

    #[test]
    fn identical_features_give_zero_map() {
        let row: &[f64] = &[0.3, 0.4];
        let g = grid(2, 3, &[row; 6]);
        let s = saliency_map(&g, 3).unwrap();
        assert!(s.values().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn two_by_two_worked_example() {
        let r = 1.0 / 2f64.sqrt();
        let g = grid(2, 2, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[r, r]]);
        let s = saliency_map(&g, 1).unwrap();
        let expected = 1.0 - r; // 0.29289
        assert!(s.get(0, 0).abs() < 1e-12);
        assert!(s.get(0, 1).abs() < 1e-12);
        assert!((s.get(1, 0) - expected).abs() < 1e-12);
        assert!((s.get(1, 1) - expected).abs() < 1e-12);
        assert!((expected - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn neighbor_count_is_clamped() {
        let g = grid(1, 3, &[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]]);
        assert_eq!(saliency_map(&g, 3).unwrap(), saliency_map(&g, 2).unwrap());
        assert_eq!(saliency_map(&g, 400).unwrap(), saliency_map(&g, 2).unwrap());
    }

    #[test]
    fn single_cell_grid_rejected() {
        let g = grid(1, 1, &[&[1.0]]);
        assert!(matches!(saliency_map(&g, 1), Err(Error::DegenerateGrid(1))));
    }

    #[test]
    fn zero_vectors_become_basis_vector() {
        let g = FeatureGrid::from_raw(1, 2, 3, vec![0.0, 0.0, 0.0, 0.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.cell(0), &[1.0, 0.0, 0.0]);
        assert!((g.cell(1)[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn upsample_cases() {
        let m = SaliencyMap::from_values(1, 2, vec![0.0, 2.0]).unwrap();
        let up = upsample_saliency(&m, 1, 4).unwrap();
        let expected = [0.0, 2.0 / 3.0, 4.0 / 3.0, 2.0];
        for (a, b) in up.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = SaliencyMap::constant(3, 4, 0.7).unwrap();
        let up = upsample_saliency(&c, 30, 17).unwrap();
        assert!(up.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert_eq!(upsample_saliency(&c, 3, 4).unwrap(), c);
    }

    #[test]
    fn prompts() {
        let zero = SaliencyMap::constant(2, 2, 0.0).unwrap();
        let m = Mask::from_fn(2, 2, |x, _| x == 0);
        let cand = RegionCandidate::new(m.clone(), 0.5, "a", StageTag::Filtered).unwrap();
        assert_eq!(saliency_prompts(&zero, std::slice::from_ref(&cand)).unwrap(), vec![1.0]);

        let s = SaliencyMap::from_values(2, 2, vec![0.2, 0.9, 0.4, 0.9]).unwrap();
        let p = saliency_prompts(&s, std::slice::from_ref(&cand)).unwrap()[0];
        assert!((p - 0.3f64.exp()).abs() < 1e-12);
        assert!((p - 1.34986).abs() < 1e-5);

        let uniform = SaliencyMap::constant(2, 2, 1.3).unwrap();
        let p = saliency_prompts(&uniform, &[cand]).unwrap()[0];
        assert!((p - 1.3f64.exp()).abs() < 1e-12);

        let empty = RegionCandidate::new(Mask::empty(2, 2), 0.5, "e", StageTag::Generated).unwrap();
        assert!(saliency_prompts(&zero, &[empty]).is_err());
    }
}
