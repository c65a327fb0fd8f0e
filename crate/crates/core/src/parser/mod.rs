//! Part parsing.
//!
//! A unit `T` of pattern `V` scores
//!
//! ```text
//! response(T) - λdef·|cell(T) - p(R_V)|² - λgeo·|(p(T) + Δ_VU - center) / s|²
//! ```
//!
//! with cell distances in cells and `s` the finest layer stride. A pattern
//! takes its best unit in `R_V`, a template sums its active patterns, and the
//! parse takes the best template and part center over the search grid.
//!
//! Ties resolve deterministically: units by smallest `(y, x)`; parses by
//! higher score, then lower template index, then smallest center `(y, x)`.

mod brute;
mod search;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aog::{
    LatentPattern, ParseTree, PartTemplate, PatternAssignment, ScoreConstants, SemanticPartAOG,
    UnitRef, PARSE_TREE_VERSION,
};
use crate::error::{Error, Result};
use crate::geometry::{Cell, ImageFrame, Point, Rect};
use crate::tensor_store::{unit_field, FeatureMapSet, LayerGeometry, LayerSet, LayerTensor};

pub use brute::{brute_force_parse, enumeration_size, DEFAULT_ENUMERATION_CAP};
pub use search::SearchGrid;

/// Score decomposition of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitScore {
    pub response: f64,
    pub deform_penalty: f64,
    pub geo_penalty: f64,
    pub contribution: f64,
}

/// Everything needed to score units of one image.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub fm: &'a FeatureMapSet,
    pub layers: &'a LayerSet,
    pub constants: ScoreConstants,
    /// Pixel length of one unit of geometric residual (the finest stride).
    pub geo_unit_px: f64,
}

impl<'a> Scorer<'a> {
    pub fn new(fm: &'a FeatureMapSet, layers: &'a LayerSet, constants: ScoreConstants) -> Self {
        Self {
            fm,
            layers,
            constants,
            geo_unit_px: layers.finest().stride_px as f64,
        }
    }

    fn resolve(&self, pattern: &LatentPattern) -> Result<(&'a LayerGeometry, &'a LayerTensor)> {
        let g = self.layers.get(&pattern.layer_id)?;
        let t = self.fm.layer(&pattern.layer_id)?;
        if t.shape() != (g.grid_h, g.grid_w, g.channels) {
            return Err(Error::ShapeMismatch {
                layer: g.layer_id.clone(),
                detail: "feature tensor does not match geometry".into(),
            });
        }
        if pattern.channel >= g.channels {
            return Err(Error::OutOfRange(format!(
                "pattern `{}` channel {} >= {}",
                pattern.pattern_id, pattern.channel, g.channels
            )));
        }
        if !g.contains(pattern.deform_center) {
            return Err(Error::OutOfRange(format!(
                "pattern `{}` deformation center outside the grid",
                pattern.pattern_id
            )));
        }
        Ok((g, t))
    }
}

#[inline]
fn deform_penalty(lambda_def: f64, cell: Cell, center: Cell) -> f64 {
    let dx = cell.x as f64 - center.x as f64;
    let dy = cell.y as f64 - center.y as f64;
    lambda_def * (dx * dx + dy * dy)
}

#[inline]
fn residual(unit_pos: f64, displacement: f64, part: f64, unit_px: f64) -> f64 {
    let e = (unit_pos + displacement - part) / unit_px;
    e * e
}

/// Score one unit of a pattern against a candidate part center.
pub fn score_unit(
    scorer: &Scorer<'_>,
    pattern: &LatentPattern,
    cell: Cell,
    part_center: Point,
) -> Result<UnitScore> {
    let (g, t) = scorer.resolve(pattern)?;
    if !pattern.in_range(cell, g.grid_w, g.grid_h) {
        return Err(Error::OutsideDeformationRange {
            pattern: pattern.pattern_id.clone(),
            x: cell.x,
            y: cell.y,
        });
    }
    let response = t.at(cell.x, cell.y, pattern.channel) as f64;
    let deform = deform_penalty(scorer.constants.lambda_def, cell, pattern.deform_center);
    let pos = g.cell_center(cell);
    let exx = residual(pos.x, pattern.displacement.dx, part_center.x, scorer.geo_unit_px);
    let eyy = residual(pos.y, pattern.displacement.dy, part_center.y, scorer.geo_unit_px);
    let geo = scorer.constants.lambda_geo * (exx + eyy);
    Ok(UnitScore {
        response,
        deform_penalty: deform,
        geo_penalty: geo,
        contribution: response - deform - geo,
    })
}

/// A pattern's selected unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternChoice {
    pub cell: Cell,
    pub score: UnitScore,
}

/// Per-image precomputation for one pattern: `response - deform` over the
/// clipped deformation range.
struct PatternPlan<'a> {
    pattern: &'a LatentPattern,
    geometry: &'a LayerGeometry,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    local: Vec<f64>,
    max_local: f64,
    lambda_geo: f64,
    unit_px: f64,
}

impl<'a> PatternPlan<'a> {
    fn new(scorer: &Scorer<'a>, pattern: &'a LatentPattern) -> Result<Self> {
        let (g, t) = scorer.resolve(pattern)?;
        let (x0, x1, y0, y1) = pattern.deformation_range(g.grid_w, g.grid_h);
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut local = Vec::with_capacity(w * h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cell = Cell::new(x, y);
                let response = t.at(x, y, pattern.channel) as f64;
                local.push(response - deform_penalty(scorer.constants.lambda_def, cell, pattern.deform_center));
            }
        }
        let max_local = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            pattern,
            geometry: g,
            x0,
            y0,
            w,
            h,
            local,
            max_local,
            lambda_geo: scorer.constants.lambda_geo,
            unit_px: scorer.geo_unit_px,
        })
    }

    #[inline]
    fn exx(&self, x: usize, part: f64) -> f64 {
        let pos = self.geometry.offset_px + x as f64 * self.geometry.stride_px as f64;
        residual(pos, self.pattern.displacement.dx, part, self.unit_px)
    }

    #[inline]
    fn eyy(&self, y: usize, part: f64) -> f64 {
        let pos = self.geometry.offset_px + y as f64 * self.geometry.stride_px as f64;
        residual(pos, self.pattern.displacement.dy, part, self.unit_px)
    }

    #[inline]
    fn contribution(&self, x: usize, y: usize, part: Point) -> f64 {
        let geo = self.lambda_geo * (self.exx(x, part.x) + self.eyy(y, part.y));
        self.local[(y - self.y0) * self.w + (x - self.x0)] - geo
    }

    /// Best unit for a part center. The result is identical to a full
    /// `(y, x)` scan keeping strict improvements: rows and cells are skipped
    /// only when their upper bound is strictly below a contribution that is
    /// known to be attained.
    fn best(&self, part: Point) -> (Cell, f64) {
        let g = self.geometry;
        let s = g.stride_px as f64;
        let clamp = |v: f64, lo: usize, n: usize| -> usize {
            let r = v.round();
            if r <= lo as f64 {
                lo
            } else {
                (r as usize).min(lo + n - 1)
            }
        };
        let nx = clamp((part.x - self.pattern.displacement.dx - g.offset_px) / s, self.x0, self.w);
        let ny = clamp((part.y - self.pattern.displacement.dy - g.offset_px) / s, self.y0, self.h);
        let floor = self.contribution(nx, ny, part);

        let mut best: Option<(Cell, f64)> = None;
        for y in self.y0..self.y0 + self.h {
            let eyy = self.eyy(y, part.y);
            let bar = best.map_or(floor, |(_, b)| b.max(floor));
            if self.max_local - self.lambda_geo * eyy < bar {
                continue;
            }
            let row = &self.local[(y - self.y0) * self.w..(y - self.y0 + 1) * self.w];
            for (i, &local) in row.iter().enumerate() {
                let x = self.x0 + i;
                let c = local - self.lambda_geo * (self.exx(x, part.x) + eyy);
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((Cell::new(x, y), c));
                }
            }
        }
        best.expect("the nearest cell always survives the bound")
    }
}

/// Best unit of a pattern for a candidate part center.
pub fn score_pattern(scorer: &Scorer<'_>, pattern: &LatentPattern, part_center: Point) -> Result<PatternChoice> {
    let plan = PatternPlan::new(scorer, pattern)?;
    let (cell, _) = plan.best(part_center);
    Ok(PatternChoice {
        cell,
        score: score_unit(scorer, pattern, cell, part_center)?,
    })
}

/// Template score at a fixed part center, with per-pattern assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateScore {
    pub score: f64,
    pub part_region: Rect,
    pub assignments: Vec<PatternAssignment>,
}

pub fn score_template(
    scorer: &Scorer<'_>,
    template: &PartTemplate,
    part_center: Point,
    frame: &ImageFrame,
) -> Result<TemplateScore> {
    let mut score = 0.0;
    let mut assignments = Vec::new();
    for p in template.active_patterns() {
        let choice = score_pattern(scorer, p, part_center)?;
        score += choice.score.contribution;
        assignments.push(assignment(scorer, p, choice, frame)?);
    }
    Ok(TemplateScore {
        score,
        part_region: part_region(template, part_center, frame),
        assignments,
    })
}

fn assignment(
    scorer: &Scorer<'_>,
    p: &LatentPattern,
    choice: PatternChoice,
    frame: &ImageFrame,
) -> Result<PatternAssignment> {
    let g = scorer.layers.get(&p.layer_id)?;
    let rf = unit_field(g, choice.cell, frame);
    Ok(PatternAssignment {
        pattern_id: p.pattern_id.clone(),
        unit: UnitRef {
            layer_id: p.layer_id.clone(),
            channel: p.channel,
            x: choice.cell.x,
            y: choice.cell.y,
        },
        unit_center: rf.center,
        unit_region: rf.region,
        response: choice.score.response,
        deform_penalty: choice.score.deform_penalty,
        geo_penalty: choice.score.geo_penalty,
        contribution: choice.score.contribution,
    })
}

pub(crate) fn part_region(template: &PartTemplate, center: Point, frame: &ImageFrame) -> Rect {
    frame.clip(&Rect::centered(
        center,
        template.canonical_box.w_px,
        template.canonical_box.h_px,
    ))
}

pub(crate) fn check_inputs(fm: &FeatureMapSet, aog: &SemanticPartAOG, layers: &LayerSet) -> Result<()> {
    aog.validate_against(layers)?;
    if aog.active_pattern_count() == 0 {
        return Err(Error::EmptyAog);
    }
    fm.validate(layers)
}

/// Best template and part center for one image.
pub fn parse(
    fm: &FeatureMapSet,
    aog: &SemanticPartAOG,
    layers: &LayerSet,
    frame: &ImageFrame,
) -> Result<ParseTree> {
    check_inputs(fm, aog, layers)?;
    let scorer = Scorer::new(fm, layers, aog.constants);
    let grid = SearchGrid::new(layers, frame);

    // (score, template index, center index); tie keys favour lower indices.
    let mut best: Option<(f64, usize, usize)> = None;
    for (ti, template) in aog.templates.iter().enumerate() {
        let plans = template
            .active_patterns()
            .map(|p| PatternPlan::new(&scorer, p))
            .collect::<Result<Vec<_>>>()?;
        let local_best = (0..grid.len())
            .into_par_iter()
            .map(|ci| {
                let center = grid.point(ci);
                let score = plans.iter().fold(0.0, |acc, plan| acc + plan.best(center).1);
                (score, ci)
            })
            .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
            .expect("search grid is never empty");
        if best.is_none_or(|(s, _, _)| local_best.0 > s) {
            best = Some((local_best.0, ti, local_best.1));
        }
    }
    let (_, ti, ci) = best.expect("AOG has at least one template");
    let template = &aog.templates[ti];
    let center = grid.point(ci);
    let ts = score_template(&scorer, template, center, frame)?;
    Ok(ParseTree {
        schema_version: PARSE_TREE_VERSION,
        image_id: fm.image_id.clone(),
        chosen_template_id: template.template_id.clone(),
        part_center: center,
        part_region: ts.part_region,
        total_score: ts.score,
        pattern_assignments: ts.assignments,
    })
}

#[cfg(test)]
mod tests;
