//! Normalized-distance evaluation, reports, and planted synthetic data.

mod distractors;
mod synthetic;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aog::SemanticPartAOG;
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::parser::parse;
use crate::tensor_store::{Dataset, Split};

pub use distractors::{
    inject_distractors, outside_box_regions, run_distractor_experiment, DistractorExperiment,
    DISTRACTOR_FRACTION,
};
pub use synthetic::{
    generate_synthetic, write_synthetic, GroundTruth, PlantedImage, PlantedPattern, PlantedTemplate,
    SyntheticConfig, SyntheticDataset,
};

/// Distance between prediction and ground truth over the object-box diagonal.
pub fn normalized_distance(pred: Point, gt: Point, object_box: &Rect) -> Result<f64> {
    let diag = object_box.diagonal();
    if !(diag.is_finite() && diag > 0.0) {
        return Err(Error::DegenerateBox(format!(
            "{}x{} box has no positive diagonal",
            object_box.w, object_box.h
        )));
    }
    Ok(pred.distance(&gt) / diag)
}

/// One test image. Failed parses keep their error instead of a distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image_id: String,
    pub gt_center: Point,
    pub predicted_center: Option<Point>,
    pub chosen_template_id: Option<String>,
    pub normalized_distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub category: String,
    pub part: String,
    /// Images with a distance; failures are excluded.
    pub n_images: usize,
    pub n_failed: usize,
    pub mean_nd: Option<f64>,
    pub median_nd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by image id.
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<Aggregate>,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn mean(&self) -> Option<f64> {
        self.aggregates.first().and_then(|a| a.mean_nd)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,part,n_images,mean_nd,median_nd\n");
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                csv_field(&a.category),
                csv_field(&a.part),
                a.n_images,
                opt(a.mean_nd),
                opt(a.median_nd)
            );
        }
        out
    }

    /// Per-image rows, for inspection.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("image_id,chosen_template_id,pred_x,pred_y,gt_x,gt_y,normalized_distance,error\n");
        for r in &self.rows {
            let (px, py) = r
                .predicted_center
                .map_or((String::new(), String::new()), |p| (p.x.to_string(), p.y.to_string()));
            let _ = writeln!(
                out,
                "{},{},{px},{py},{},{},{},{}",
                csv_field(&r.image_id),
                csv_field(r.chosen_template_id.as_deref().unwrap_or("")),
                r.gt_center.x,
                r.gt_center.y,
                opt(r.normalized_distance),
                csv_field(r.error.as_deref().unwrap_or(""))
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| category | part | n_images | mean_nd | median_nd |\n|---|---|---:|---:|---:|\n");
        for a in &self.aggregates {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                a.category,
                a.part,
                a.n_images,
                f(a.mean_nd),
                f(a.median_nd)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mean and median of `values`, summed in the given order.
pub fn summarize(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    (Some(mean), Some(median))
}

/// Parse every test image and score the part center against its first annotation.
pub fn evaluate(aog: &SemanticPartAOG, data: &Dataset) -> Result<EvalReport> {
    let records: Vec<_> = data.manifest.records_in(Split::Test).collect();
    if records.is_empty() {
        return Err(Error::invalid("records", "no test-split images to evaluate"));
    }
    for (i, r) in records.iter().enumerate() {
        if r.part_annotations.is_empty() {
            return Err(Error::invalid(
                format!("records[{i}].part_annotations"),
                format!("test image `{}` has no ground-truth part", r.image_id),
            ));
        }
        data.features(&r.image_id)?;
    }
    let mut rows: Vec<EvalRow> = records
        .par_iter()
        .map(|r| {
            let gt = r.gt_part_center().expect("checked above");
            let outcome = data
                .features(&r.image_id)
                .and_then(|fm| parse(fm, aog, data.layers(), &r.frame()))
                .and_then(|t| Ok((normalized_distance(t.part_center, gt, &r.object_box)?, t)));
            match outcome {
                Ok((nd, t)) => EvalRow {
                    image_id: r.image_id.clone(),
                    gt_center: gt,
                    predicted_center: Some(t.part_center),
                    chosen_template_id: Some(t.chosen_template_id),
                    normalized_distance: Some(nd),
                    error: None,
                },
                Err(e) => EvalRow {
                    image_id: r.image_id.clone(),
                    gt_center: gt,
                    predicted_center: None,
                    chosen_template_id: None,
                    normalized_distance: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let nds: Vec<f64> = rows.iter().filter_map(|r| r.normalized_distance).collect();
    let (mean_nd, median_nd) = summarize(&nds);
    Ok(EvalReport {
        aggregates: vec![Aggregate {
            category: data.manifest.category.clone(),
            part: aog.part_name.clone(),
            n_images: nds.len(),
            n_failed: rows.len() - nds.len(),
            mean_nd,
            median_nd,
        }],
        rows,
        config: serde_json::json!({
            "part_name": aog.part_name,
            "templates": aog.templates.len(),
            "active_patterns": aog.active_pattern_count(),
            "constants": aog.constants,
            "metric": "center distance / object-box diagonal",
        }),
    })
}
