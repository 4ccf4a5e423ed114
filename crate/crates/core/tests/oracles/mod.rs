//! Brute-force reference implementations used as test oracles.
//!
//! Each one is written from the definition, without sharing code with the
//! library: full pairwise similarity tables, per-pixel sums, exhaustive
//! threshold sweeps.

#![allow(dead_code)]

/// Saliency of every cell of a `cells x dim` feature table.
pub fn saliency(raw: &[Vec<f64>], n_neighbors: usize) -> Vec<f64> {
    let normalize = |v: &Vec<f64>| -> Vec<f64> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            v.iter().map(|x| x / norm).collect()
        } else {
            let mut e = vec![0.0; v.len()];
            e[0] = 1.0;
            e
        }
    };
    let unit: Vec<Vec<f64>> = raw.iter().map(normalize).collect();
    let n = unit.len();
    let mut table = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            table[i][j] = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
        }
    }
    let k = n_neighbors.min(n - 1);
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (table[i][j], j)).collect();
            // Stable sort: equal similarities keep ascending index.
            others.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            others[..k].iter().map(|(s, _)| 1.0 - s).sum::<f64>() / k as f64
        })
        .collect()
}

/// Per-pixel fused value: sum of covering scores over the number of
/// covering regions, zero when nothing covers.
pub fn fuse(masks: &[Vec<bool>], scores: &[f64], pixels: usize) -> Vec<f64> {
    (0..pixels)
        .map(|p| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (m, s) in masks.iter().zip(scores) {
                let r = if m[p] { 1.0 } else { 0.0 };
                num += r * s;
                den += r;
            }
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        })
        .collect()
}

pub fn f1_at(values: &[f64], gt: &[bool], t: f64) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&v, &g) in values.iter().zip(gt) {
        match (v >= t, g) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// Exhaustive max-F1 over every distinct value.
pub fn max_f1(values: &[f64], gt: &[bool]) -> f64 {
    let mut best: f64 = 0.0;
    for &t in values {
        best = best.max(f1_at(values, gt, t));
    }
    best
}

/// Candidates surviving the property filter, by index.
pub fn property_filter(masks: &[Vec<bool>], object: &[bool], theta_overlap: f64, theta_area: f64, iou: bool) -> Vec<usize> {
    let object_area = object.iter().filter(|&&b| b).count() as f64;
    (0..masks.len())
        .filter(|&i| {
            let m = &masks[i];
            let area = m.iter().filter(|&&b| b).count() as f64;
            let inter = m.iter().zip(object).filter(|(a, b)| **a && **b).count() as f64;
            let union = m.iter().zip(object).filter(|(a, b)| **a || **b).count() as f64;
            let denom = if iou { union } else { area };
            let ov = if denom == 0.0 { 0.0 } else { inter / denom };
            ov >= theta_overlap && area <= theta_area * object_area
        })
        .collect()
}
