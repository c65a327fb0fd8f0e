use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};

pub const PARSE_TREE_VERSION: u32 = 1;

/// A CNN unit: one cell of one channel of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitRef {
    pub layer_id: String,
    pub channel: usize,
    pub x: usize,
    pub y: usize,
}

/// The unit a pattern selected, with its score decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternAssignment {
    pub pattern_id: String,
    pub unit: UnitRef,
    /// Image-plane position of the unit (pre-clip receptive-field center).
    pub unit_center: Point,
    /// Receptive field of the unit, clipped to the image.
    pub unit_region: Rect,
    pub response: f64,
    pub deform_penalty: f64,
    pub geo_penalty: f64,
    pub contribution: f64,
}

/// Result of parsing one image with an AOG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseTree {
    pub schema_version: u32,
    pub image_id: String,
    pub chosen_template_id: String,
    pub part_center: Point,
    pub part_region: Rect,
    pub total_score: f64,
    pub pattern_assignments: Vec<PatternAssignment>,
}

impl ParseTree {
    pub fn assignment(&self, pattern_id: &str) -> Option<&PatternAssignment> {
        self.pattern_assignments
            .iter()
            .find(|a| a.pattern_id == pattern_id)
    }

    /// Largest deviation between `total_score` and the sum of contributions,
    /// and between each contribution and its terms.
    pub fn decomposition_error(&self) -> f64 {
        let sum: f64 = self.pattern_assignments.iter().map(|a| a.contribution).sum();
        let per = self
            .pattern_assignments
            .iter()
            .map(|a| (a.response - a.deform_penalty - a.geo_penalty - a.contribution).abs())
            .fold(0.0, f64::max);
        (self.total_score - sum).abs().max(per)
    }
}
