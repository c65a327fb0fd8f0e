//! The four-level And-Or graph of one semantic part:
//! part (OR over templates) -> template (AND over patterns) -> pattern (OR over
//! units in its deformation range) -> CNN units.
//!
//! Values here are plain data. Pruning flips a flag and returns a new
//! snapshot, so a session can always undo.

mod tree;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Offset};
use crate::tensor_store::LayerSet;

pub use tree::{ParseTree, PatternAssignment, UnitRef, PARSE_TREE_VERSION};

pub const AOG_VERSION: u32 = 1;

/// Weight of the squared deformation (cells) in the local term.
pub const LAMBDA_DEF: f64 = 1.0 / 3.0;
/// Weight of the squared geometric residual (finest-stride units).
pub const LAMBDA_GEO: f64 = 5.0;

/// OR node bound to one channel of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPattern {
    pub pattern_id: String,
    pub layer_id: String,
    pub channel: usize,
    /// Center of the deformation range, in cells.
    pub deform_center: Cell,
    /// Half side of the (square) deformation range, in cells.
    pub deform_half_extent: usize,
    /// Expected offset from the pattern's unit position to the part center, in pixels.
    pub displacement: Offset,
    pub active: bool,
}

impl LatentPattern {
    /// Deformation range clipped to a `grid_w x grid_h` grid, as inclusive
    /// `(x_lo, x_hi, y_lo, y_hi)` cell bounds.
    pub fn deformation_range(&self, grid_w: usize, grid_h: usize) -> (usize, usize, usize, usize) {
        let e = self.deform_half_extent;
        let c = self.deform_center;
        (
            c.x.saturating_sub(e),
            (c.x + e).min(grid_w.saturating_sub(1)),
            c.y.saturating_sub(e),
            (c.y + e).min(grid_h.saturating_sub(1)),
        )
    }

    pub fn in_range(&self, cell: Cell, grid_w: usize, grid_h: usize) -> bool {
        let (x0, x1, y0, y1) = self.deformation_range(grid_w, grid_h);
        (x0..=x1).contains(&cell.x) && (y0..=y1).contains(&cell.y)
    }
}

/// Part-box size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSize {
    pub w_px: f64,
    pub h_px: f64,
}

/// AND node: one appearance variant of the part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartTemplate {
    pub template_id: String,
    pub patterns: Vec<LatentPattern>,
    pub canonical_box: BoxSize,
}

impl PartTemplate {
    pub fn active_patterns(&self) -> impl Iterator<Item = &LatentPattern> {
        self.patterns.iter().filter(|p| p.active)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConstants {
    pub lambda_def: f64,
    pub lambda_geo: f64,
}

impl Default for ScoreConstants {
    fn default() -> Self {
        Self {
            lambda_def: LAMBDA_DEF,
            lambda_geo: LAMBDA_GEO,
        }
    }
}

/// Root OR node over part templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticPartAOG {
    pub aog_version: u32,
    pub part_name: String,
    pub templates: Vec<PartTemplate>,
    pub constants: ScoreConstants,
    /// Snapshot of how the graph was built (miner name and configuration).
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl SemanticPartAOG {
    pub fn new(part_name: impl Into<String>, templates: Vec<PartTemplate>) -> Self {
        Self {
            aog_version: AOG_VERSION,
            part_name: part_name.into(),
            templates,
            constants: ScoreConstants::default(),
            provenance: serde_json::Value::Null,
        }
    }

    pub fn patterns(&self) -> impl Iterator<Item = &LatentPattern> {
        self.templates.iter().flat_map(|t| t.patterns.iter())
    }

    pub fn active_pattern_count(&self) -> usize {
        self.patterns().filter(|p| p.active).count()
    }

    pub fn find_pattern(&self, pattern_id: &str) -> Option<(&PartTemplate, &LatentPattern)> {
        self.templates.iter().find_map(|t| {
            t.patterns
                .iter()
                .find(|p| p.pattern_id == pattern_id)
                .map(|p| (t, p))
        })
    }

    fn pattern_mut(&mut self, pattern_id: &str) -> Result<&mut LatentPattern> {
        self.templates
            .iter_mut()
            .flat_map(|t| t.patterns.iter_mut())
            .find(|p| p.pattern_id == pattern_id)
            .ok_or_else(|| Error::UnknownPattern(pattern_id.to_string()))
    }

    /// Structural invariants that need no layer geometry.
    pub fn validate(&self) -> Result<()> {
        if self.aog_version != AOG_VERSION {
            return Err(Error::invalid(
                "aog_version",
                format!("unsupported version {}", self.aog_version),
            ));
        }
        if self.templates.is_empty() {
            return Err(Error::invalid("templates", "at least one template required"));
        }
        let ScoreConstants {
            lambda_def,
            lambda_geo,
        } = self.constants;
        if !(lambda_def.is_finite() && lambda_def > 0.0) {
            return Err(Error::invalid("constants.lambda_def", "must be positive"));
        }
        if !(lambda_geo.is_finite() && lambda_geo > 0.0) {
            return Err(Error::invalid("constants.lambda_geo", "must be positive"));
        }
        let mut template_ids = BTreeSet::new();
        // Pattern ids are the handle for pruning, so they are unique graph-wide.
        let mut pattern_ids = BTreeSet::new();
        for (ti, t) in self.templates.iter().enumerate() {
            let tf = format!("templates[{ti}]");
            if t.template_id.is_empty() {
                return Err(Error::invalid(format!("{tf}.template_id"), "must be nonempty"));
            }
            if !template_ids.insert(t.template_id.as_str()) {
                return Err(Error::invalid(
                    format!("{tf}.template_id"),
                    format!("duplicate template id `{}`", t.template_id),
                ));
            }
            let b = t.canonical_box;
            if !(b.w_px.is_finite() && b.h_px.is_finite() && b.w_px > 0.0 && b.h_px > 0.0) {
                return Err(Error::invalid(format!("{tf}.canonical_box"), "must be positive"));
            }
            for (pi, p) in t.patterns.iter().enumerate() {
                let pf = format!("{tf}.patterns[{pi}]");
                if !pattern_ids.insert(p.pattern_id.as_str()) {
                    return Err(Error::invalid(
                        format!("{pf}.pattern_id"),
                        format!("duplicate pattern id `{}`", p.pattern_id),
                    ));
                }
                if !(p.displacement.dx.is_finite() && p.displacement.dy.is_finite()) {
                    return Err(Error::invalid(format!("{pf}.displacement"), "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Invariants that depend on layer geometry: known layer, channel in
    /// range, deformation center inside the grid.
    pub fn validate_against(&self, layers: &LayerSet) -> Result<()> {
        self.validate()?;
        for (ti, t) in self.templates.iter().enumerate() {
            for (pi, p) in t.patterns.iter().enumerate() {
                let pf = format!("templates[{ti}].patterns[{pi}]");
                let g = layers
                    .get(&p.layer_id)
                    .map_err(|_| Error::invalid(format!("{pf}.layer_id"), format!("unknown layer `{}`", p.layer_id)))?;
                if p.channel >= g.channels {
                    return Err(Error::invalid(format!("{pf}.channel"), "channel out of range"));
                }
                if !g.contains(p.deform_center) {
                    return Err(Error::invalid(format!("{pf}.deform_center"), "outside the grid"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let aog: SemanticPartAOG = serde_json::from_str(text)?;
        aog.validate()?;
        Ok(aog)
    }
}

pub fn save_aog(aog: &SemanticPartAOG, path: impl AsRef<Path>) -> Result<()> {
    aog.validate()?;
    let path = path.as_ref();
    fs::write(path, aog.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_aog(path: impl AsRef<Path>) -> Result<SemanticPartAOG> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SemanticPartAOG::from_json(&text)
}

/// Deactivate a pattern. Pruning an already-pruned pattern is a no-op.
pub fn prune_pattern(aog: &SemanticPartAOG, pattern_id: &str) -> Result<SemanticPartAOG> {
    let mut next = aog.clone();
    next.pattern_mut(pattern_id)?.active = false;
    Ok(next)
}

pub fn restore_pattern(aog: &SemanticPartAOG, pattern_id: &str) -> Result<SemanticPartAOG> {
    let mut next = aog.clone();
    next.pattern_mut(pattern_id)?.active = true;
    Ok(next)
}
