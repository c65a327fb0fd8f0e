//! Distractor injection and the prune-with-ground-truth-regions experiment.

use std::collections::BTreeSet;

use crate::aog::SemanticPartAOG;
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::interaction::{AnnotatedRegionSet, InteractionSession, NoSaliency};
use crate::miner::{build_pattern, channel_peaks, observations, Scope};
use crate::tensor_store::{Dataset, Split};

use super::{evaluate, EvalReport};

/// Share of injected patterns relative to each template's mined patterns.
pub const DISTRACTOR_FRACTION: f64 = 0.3;

/// Add `round(fraction * n)` (at least one) patterns per template, built from
/// the given distractor channels the same way the miner builds patterns, with
/// object-box scope. Returns the new AOG and the injected pattern ids.
pub fn inject_distractors(
    aog: &SemanticPartAOG,
    data: &Dataset,
    channels: &[(String, usize)],
    fraction: f64,
) -> Result<(SemanticPartAOG, Vec<String>)> {
    if channels.is_empty() {
        return Err(Error::invalid("channels", "no distractor channels"));
    }
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Error::invalid("fraction", "must be positive"));
    }
    let manifest = &data.manifest;
    let mut next = aog.clone();
    let mut injected = Vec::new();
    for (ti, t) in next.templates.iter_mut().enumerate() {
        let obs = observations(manifest, &t.template_id);
        if obs.is_empty() {
            return Err(Error::NoAnnotations(t.template_id.clone()));
        }
        let n = t.patterns.len();
        let count = ((fraction * n as f64).round() as usize).clamp(1, channels.len());
        for k in 0..count {
            let (layer_id, c) = &channels[(ti + k) % channels.len()];
            let g = manifest.layer_geometries.get(layer_id)?;
            let peaks = channel_peaks(data, g, *c, &obs, Scope::ObjectBox)?;
            let mut id = format!("{}/{layer_id}/c{c}", t.template_id);
            if t.patterns.iter().any(|p| p.pattern_id == id) {
                id.push_str("/distractor");
            }
            t.patterns.push(build_pattern(id.clone(), g, *c, &obs, &peaks, None));
            injected.push(id);
        }
    }
    next.validate_against(&manifest.layer_geometries)?;
    Ok((next, injected))
}

/// The image minus `part_box`, as up to four disjoint rectangles.
pub fn outside_box_regions(width: f64, height: f64, part_box: &Rect) -> Vec<Rect> {
    let b = Rect::new(0.0, 0.0, width, height).intersect(part_box);
    let candidates = [
        Rect::new(0.0, 0.0, width, b.y),
        Rect::new(0.0, b.bottom(), width, height - b.bottom()),
        Rect::new(0.0, b.y, b.x, b.h),
        Rect::new(b.right(), b.y, width - b.right(), b.h),
    ];
    candidates.into_iter().filter(|r| r.w > 0.0 && r.h > 0.0).collect()
}

#[derive(Debug, Clone)]
pub struct DistractorExperiment {
    pub injected: Vec<String>,
    /// Distractors confirmed through proposals, in confirmation order.
    pub pruned: Vec<String>,
    /// Proposals the simulated annotator declined (not distractors).
    pub declined: Vec<String>,
    /// Images whose parse was used for proposals.
    pub images_used: Vec<String>,
    pub unpruned: EvalReport,
    pub pruned_report: EvalReport,
    pub pruned_aog: SemanticPartAOG,
}

impl DistractorExperiment {
    pub fn all_pruned(&self) -> bool {
        let a: BTreeSet<_> = self.injected.iter().collect();
        let b: BTreeSet<_> = self.pruned.iter().collect();
        a == b
    }
}

/// Simulated interaction: for each image (train split first, then test, in
/// id order) parse with the current AOG, annotate everything outside the
/// ground-truth part box for every group that holds a distractor, and confirm
/// only proposals that are injected distractors. Stops once all are pruned.
pub fn run_distractor_experiment(
    data: &Dataset,
    aog_with_distractors: &SemanticPartAOG,
    injected: &[String],
) -> Result<DistractorExperiment> {
    let manifest = &data.manifest;
    let mut session = InteractionSession::new("distractor-experiment", aog_with_distractors.clone())?;
    let targets: BTreeSet<&str> = injected.iter().map(String::as_str).collect();
    let mut scopes = BTreeSet::new();
    for id in injected {
        let (_, p) = aog_with_distractors
            .find_pattern(id)
            .ok_or_else(|| Error::UnknownPattern(id.clone()))?;
        let group = manifest
            .layer_groups
            .group_of(&p.layer_id)
            .ok_or_else(|| Error::UnknownLayer(p.layer_id.clone()))?;
        scopes.insert(group);
    }
    let mut pruned: Vec<String> = Vec::new();
    let mut declined: Vec<String> = Vec::new();
    let mut images_used = Vec::new();
    let order = manifest
        .records_in(Split::Train)
        .chain(manifest.records_in(Split::Test));
    for r in order {
        if pruned.len() == targets.len() {
            break;
        }
        let Some(ann) = r.part_annotations.first() else {
            continue;
        };
        let rects = outside_box_regions(r.width_px as f64, r.height_px as f64, &ann.part_box);
        if rects.is_empty() {
            continue;
        }
        session.parse_image(data, &r.image_id)?;
        images_used.push(r.image_id.clone());
        for &scope in &scopes {
            let regions = AnnotatedRegionSet {
                image_id: r.image_id.clone(),
                rectangles: rects.clone(),
                layer_group_scope: scope,
            };
            let evidence = session.propose_prunes(data, &regions, &NoSaliency)?;
            let mut confirm = Vec::new();
            for e in evidence.into_iter().filter(|e| e.proposed) {
                if targets.contains(e.pattern_id.as_str()) {
                    confirm.push(e.pattern_id);
                } else if !declined.contains(&e.pattern_id) {
                    declined.push(e.pattern_id);
                }
            }
            if !confirm.is_empty() {
                session.apply_prunes(data, &confirm, Some(&regions))?;
                pruned.extend(confirm);
            }
            if session.parse_of(&r.image_id).is_err() {
                break;
            }
        }
    }
    let pruned_aog = session.current_aog().clone();
    Ok(DistractorExperiment {
        injected: injected.to_vec(),
        pruned,
        declined,
        images_used,
        unpruned: evaluate(aog_with_distractors, data)?,
        pruned_report: evaluate(&pruned_aog, data)?,
        pruned_aog,
    })
}
