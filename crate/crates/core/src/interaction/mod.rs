//! Human-in-the-loop pruning.
//!
//! A person marks image regions that should not drive localization. A
//! pattern of the parsed template is proposed for removal when the center of
//! its parsed region lies inside the marked union and its saliency mass inside
//! the union exceeds the mass outside. Proposals are suggestions; the caller
//! confirms them with [`InteractionSession::apply_prunes`].

mod saliency;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aog::{prune_pattern, ParseTree, PatternAssignment, SemanticPartAOG};
use crate::error::{Error, Result};
use crate::geometry::{ImageFrame, Point, Rect};
use crate::parser::parse;
use crate::tensor_store::{Dataset, GroupKind};

pub use saliency::{
    fallback_saliency, mass_split, InMemorySaliency, NoSaliency, SaliencyMap, SaliencyProvider,
};

pub const SESSION_VERSION: u32 = 1;

/// Regions a person marked as irrelevant for one image, targeting one layer group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedRegionSet {
    pub image_id: String,
    pub rectangles: Vec<Rect>,
    /// `background` targets the high group, `outside_part_box` the low group.
    pub layer_group_scope: GroupKind,
}

impl AnnotatedRegionSet {
    pub fn validate(&self, frame: &ImageFrame) -> Result<()> {
        if self.rectangles.is_empty() {
            return Err(Error::invalid("rectangles", "at least one rectangle required"));
        }
        let bounds = frame.bounds();
        for (i, r) in self.rectangles.iter().enumerate() {
            if !r.is_finite() || r.w < 0.0 || r.h < 0.0 || !bounds.contains_rect(r) {
                return Err(Error::invalid(
                    format!("rectangles[{i}]"),
                    "must lie within the image bounds",
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        self.rectangles.iter().any(|r| r.contains_point(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencySource {
    Supplied,
    /// Uniform mass over the parsed receptive field.
    Fallback,
}

/// Evidence for one pattern evaluated by [`InteractionSession::propose_prunes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvidence {
    pub pattern_id: String,
    pub layer_id: String,
    pub group: GroupKind,
    pub region: Rect,
    pub region_center: Point,
    /// Containment rule used for the region test.
    pub containment: String,
    pub center_inside: bool,
    pub inside_mass: f64,
    pub outside_mass: f64,
    pub saliency: SaliencySource,
    pub proposed: bool,
}

/// The two-part pruning test for one parsed pattern.
pub fn evaluate_pattern(
    assignment: &PatternAssignment,
    regions: &AnnotatedRegionSet,
    map: &SaliencyMap,
) -> (bool, f64, f64) {
    let center_inside = regions.contains(assignment.unit_region.center());
    let (inside, outside) = mass_split(map, &regions.rectangles);
    (center_inside, inside, outside)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOp {
    /// Logical timestamp: position in the session's operation sequence.
    pub seq: u64,
    pub pattern_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotatedRegionSet>,
}

/// Undoable editing state: a base AOG plus a stack of prunes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSession {
    pub session_version: u32,
    pub session_id: String,
    pub base_aog: SemanticPartAOG,
    pub ops: Vec<PruneOp>,
    pub next_seq: u64,
    /// Current parse of every working image.
    pub parses: BTreeMap<String, ParseTree>,
    #[serde(skip)]
    current: Option<SemanticPartAOG>,
}

impl InteractionSession {
    pub fn new(session_id: impl Into<String>, base_aog: SemanticPartAOG) -> Result<Self> {
        base_aog.validate()?;
        Ok(Self {
            session_version: SESSION_VERSION,
            session_id: session_id.into(),
            current: Some(base_aog.clone()),
            base_aog,
            ops: Vec::new(),
            next_seq: 0,
            parses: BTreeMap::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Restore a serialized session; the current AOG is rebuilt by replay.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut s: InteractionSession = serde_json::from_str(text)?;
        if s.session_version != SESSION_VERSION {
            return Err(Error::invalid("session_version", "unsupported version"));
        }
        s.base_aog.validate()?;
        s.current = Some(s.replay()?);
        Ok(s)
    }

    /// Base AOG with every recorded prune applied.
    pub fn replay(&self) -> Result<SemanticPartAOG> {
        self.ops
            .iter()
            .try_fold(self.base_aog.clone(), |aog, op| prune_pattern(&aog, &op.pattern_id))
    }

    pub fn current_aog(&self) -> &SemanticPartAOG {
        self.current.as_ref().expect("current AOG is set on construction")
    }

    pub fn parse_of(&self, image_id: &str) -> Result<&ParseTree> {
        self.parses
            .get(image_id)
            .ok_or_else(|| Error::NoParse(image_id.to_string()))
    }

    /// Parse an image with the current AOG and keep it as a working image.
    pub fn parse_image(&mut self, data: &Dataset, image_id: &str) -> Result<&ParseTree> {
        let record = data.manifest.record(image_id)?;
        let tree = parse(data.features(image_id)?, self.current_aog(), data.layers(), &record.frame())?;
        self.parses.insert(image_id.to_string(), tree);
        Ok(&self.parses[image_id])
    }

    /// Evaluate every active pattern of the parsed template that belongs to
    /// the annotation's layer group.
    pub fn propose_prunes(
        &self,
        data: &Dataset,
        regions: &AnnotatedRegionSet,
        saliency: &dyn SaliencyProvider,
    ) -> Result<Vec<PruneEvidence>> {
        let record = data.manifest.record(&regions.image_id)?;
        let frame = record.frame();
        regions.validate(&frame)?;
        let tree = self.parse_of(&regions.image_id)?;
        let groups = &data.manifest.layer_groups;
        let mut out = Vec::new();
        for a in &tree.pattern_assignments {
            let group = groups
                .group_of(&a.unit.layer_id)
                .ok_or_else(|| Error::UnknownLayer(a.unit.layer_id.clone()))?;
            if group != regions.layer_group_scope {
                continue;
            }
            let (map, source) = match saliency.saliency(&regions.image_id, &a.pattern_id)? {
                Some(m) => {
                    m.check_frame(&frame)?;
                    (m, SaliencySource::Supplied)
                }
                None => (
                    fallback_saliency(&regions.image_id, a, &frame),
                    SaliencySource::Fallback,
                ),
            };
            let (center_inside, inside, outside) = evaluate_pattern(a, regions, &map);
            out.push(PruneEvidence {
                pattern_id: a.pattern_id.clone(),
                layer_id: a.unit.layer_id.clone(),
                group,
                region: a.unit_region,
                region_center: a.unit_region.center(),
                containment: "center".into(),
                center_inside,
                inside_mass: inside,
                outside_mass: outside,
                saliency: source,
                proposed: center_inside && inside > outside,
            });
        }
        Ok(out)
    }

    /// Prune confirmed patterns and re-parse every working image.
    pub fn apply_prunes(
        &mut self,
        data: &Dataset,
        pattern_ids: &[String],
        annotation: Option<&AnnotatedRegionSet>,
    ) -> Result<()> {
        let current = self.current_aog();
        let mut seen = BTreeSet::new();
        for id in pattern_ids {
            match current.find_pattern(id) {
                None => return Err(Error::UnknownPattern(id.clone())),
                Some((_, p)) if !p.active => return Err(Error::AlreadyPruned(id.clone())),
                _ => {}
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid("pattern_ids", format!("`{id}` listed twice")));
            }
        }
        let mut next = current.clone();
        for id in pattern_ids {
            next = prune_pattern(&next, id)?;
            self.ops.push(PruneOp {
                seq: self.next_seq,
                pattern_id: id.clone(),
                annotation: annotation.cloned(),
            });
            self.next_seq += 1;
        }
        self.current = Some(next);
        self.reparse(data);
        Ok(())
    }

    /// Revert the last `k` prunes.
    pub fn undo(&mut self, data: &Dataset, k: usize) -> Result<()> {
        if k > self.ops.len() {
            return Err(Error::UndoUnderflow {
                requested: k,
                available: self.ops.len(),
            });
        }
        self.ops.truncate(self.ops.len() - k);
        self.current = Some(self.replay()?);
        self.reparse(data);
        Ok(())
    }

    // Images that no longer parse (e.g. every pattern pruned) lose their tree.
    fn reparse(&mut self, data: &Dataset) {
        let ids: Vec<String> = self.parses.keys().cloned().collect();
        self.parses.clear();
        for id in ids {
            let _ = self.parse_image(data, &id);
        }
    }
}

#[cfg(test)]
mod tests;
