use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::profile::{Mode, PromptFamily};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub images: usize,
    pub max_f1_pixel: f64,
    pub threshold: f64,
    pub positive_pixels: u64,
    pub total_pixels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub profile_hash: String,
    pub mode: Mode,
    pub ablation_drops: Vec<PromptFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub categories: Vec<CategoryScore>,
    /// Unweighted mean of the per-category scores.
    pub mean_max_f1_pixel: f64,
    pub metadata: RunMetadata,
}

impl EvalReport {
    pub fn new(dataset: &str, categories: Vec<CategoryScore>, metadata: RunMetadata) -> Self {
        let mean = if categories.is_empty() {
            0.0
        } else {
            categories.iter().map(|c| c.max_f1_pixel).sum::<f64>() / categories.len() as f64
        };
        EvalReport {
            dataset: dataset.to_string(),
            categories,
            mean_max_f1_pixel: mean,
            metadata,
        }
    }

    pub fn category(&self, name: &str) -> Option<&CategoryScore> {
        self.categories.iter().find(|c| c.category == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self
            .categories
            .iter()
            .map(|c| c.category.len())
            .chain([8])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dataset {}  mode {}  profile {}",
            self.dataset, self.metadata.mode, self.metadata.profile_hash
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>9}  {:>10}  {:>12}  {:>12}",
            "category", "images", "F_p (%)", "threshold", "positives", "pixels"
        );
        for c in &self.categories {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>9.2}  {:>10.4}  {:>12}  {:>12}",
                c.category,
                c.images,
                c.max_f1_pixel * 100.0,
                c.threshold,
                c.positive_pixels,
                c.total_pixels
            );
        }
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>9.2}", "mean", "", self.mean_max_f1_pixel * 100.0);
        out
    }

    /// One row per category plus a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,images,max_f1_pixel,threshold,positive_pixels,total_pixels\n");
        for c in &self.categories {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{},{}",
                c.category, c.images, c.max_f1_pixel, c.threshold, c.positive_pixels, c.total_pixels
            );
        }
        let _ = writeln!(out, "mean,,{:.6},,,", self.mean_max_f1_pixel);
        out
    }

    /// Dataset-by-method summary: `Dataset,<METHOD>` then one value in %.
    pub fn to_summary_csv(&self) -> String {
        let method = match self.metadata.mode {
            Mode::Saa => "SAA",
            Mode::SaaPlus => "SAA+",
        };
        format!("Dataset,{method}\n{},{:.2}\n", self.dataset, self.mean_max_f1_pixel * 100.0)
    }
}

pub const FULL_MODEL_LABEL: &str = "Full Model (SAA+)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped: Option<PromptFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The error came from a model backend rather than local input.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub backend_failure: bool,
}

impl AblationRow {
    pub fn score(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.mean_max_f1_pixel)
    }
}

/// Rows ordered: each single drop (language, property, saliency,
/// confidence), then the full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn full(&self) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.dropped.is_none())
    }

    pub fn row(&self, family: PromptFamily) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.dropped == Some(family))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("Model Variants,{}\n", self.dataset);
        for r in &self.rows {
            match r.score() {
                Some(s) => {
                    let _ = writeln!(out, "{},{:.2}", r.label, s * 100.0);
                }
                None => {
                    let _ = writeln!(out, "{},", r.label);
                }
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
        let mut out = format!("{:<width$}  {:>9}\n", "Model Variants", format!("{} (%)", self.dataset));
        for r in &self.rows {
            let value = match (&r.report, &r.error) {
                (Some(rep), _) => format!("{:.2}", rep.mean_max_f1_pixel * 100.0),
                (None, Some(e)) => format!("error: {e}"),
                _ => String::from("-"),
            };
            let _ = writeln!(out, "{:<width$}  {:>9}", r.label, value);
        }
        out
    }
}
