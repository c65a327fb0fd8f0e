//! Exhaustive parse over every (template, center, unit tuple). Test oracle
//! for [`super::parse`]; shares only input validation and the search grid.

use crate::aog::{ParseTree, PatternAssignment, SemanticPartAOG, UnitRef, PARSE_TREE_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{ImageFrame, Point, Rect};
use crate::tensor_store::{FeatureMapSet, LayerSet};

use super::{check_inputs, part_region, SearchGrid};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

struct Candidate {
    layer_id: String,
    channel: usize,
    x: usize,
    y: usize,
    center: Point,
    region: Rect,
    response: f64,
    deform: f64,
}

/// Number of (template, center, unit tuple) configurations.
pub fn enumeration_size(aog: &SemanticPartAOG, layers: &LayerSet, frame: &ImageFrame) -> Result<u128> {
    let centers = SearchGrid::new(layers, frame).len() as u128;
    let mut total = 0u128;
    for t in &aog.templates {
        let mut tuples = 1u128;
        for p in t.active_patterns() {
            let g = layers.get(&p.layer_id)?;
            let (x0, x1, y0, y1) = p.deformation_range(g.grid_w, g.grid_h);
            tuples = tuples.saturating_mul(((x1 - x0 + 1) * (y1 - y0 + 1)) as u128);
        }
        total = total.saturating_add(centers.saturating_mul(tuples));
    }
    Ok(total)
}

pub fn brute_force_parse(
    fm: &FeatureMapSet,
    aog: &SemanticPartAOG,
    layers: &LayerSet,
    frame: &ImageFrame,
    cap: u128,
) -> Result<ParseTree> {
    check_inputs(fm, aog, layers)?;
    let size = enumeration_size(aog, layers, frame)?;
    if size > cap {
        return Err(Error::EnumerationCap { size, cap });
    }
    let lambda_def = aog.constants.lambda_def;
    let lambda_geo = aog.constants.lambda_geo;
    let unit = layers.finest().stride_px as f64;
    let grid = SearchGrid::new(layers, frame);

    let mut best: Option<(f64, ParseTree)> = None;
    for t in &aog.templates {
        // Candidate units of every active pattern, in (y, x) order.
        let mut cands: Vec<(&crate::aog::LatentPattern, Vec<Candidate>)> = Vec::new();
        for p in t.active_patterns() {
            let g = layers.get(&p.layer_id)?;
            let tensor = fm.layer(&p.layer_id)?;
            let mut v = Vec::new();
            for y in 0..g.grid_h {
                for x in 0..g.grid_w {
                    let dx = x as i64 - p.deform_center.x as i64;
                    let dy = y as i64 - p.deform_center.y as i64;
                    let e = p.deform_half_extent as i64;
                    if dx.abs() > e || dy.abs() > e {
                        continue;
                    }
                    let s = g.stride_px as f64;
                    let center = Point::new(g.offset_px + x as f64 * s, g.offset_px + y as f64 * s);
                    let side = g.rf_size_px as f64;
                    let region = Rect::new(center.x - side / 2.0, center.y - side / 2.0, side, side);
                    let (ddx, ddy) = (dx as f64, dy as f64);
                    v.push(Candidate {
                        layer_id: p.layer_id.clone(),
                        channel: p.channel,
                        x,
                        y,
                        center,
                        region: frame.clip(&region),
                        response: tensor.data()[(y * g.grid_w + x) * g.channels + p.channel] as f64,
                        deform: lambda_def * (ddx * ddx + ddy * ddy),
                    });
                }
            }
            cands.push((p, v));
        }

        for center in grid.points() {
            // contribution table per pattern per candidate
            let table: Vec<Vec<(f64, f64)>> = cands
                .iter()
                .map(|(p, v)| {
                    v.iter()
                        .map(|c| {
                            let ex = (c.center.x + p.displacement.dx - center.x) / unit;
                            let ey = (c.center.y + p.displacement.dy - center.y) / unit;
                            let geo = lambda_geo * (ex * ex + ey * ey);
                            (geo, c.response - c.deform - geo)
                        })
                        .collect()
                })
                .collect();

            // Odometer over tuples; pattern 0 is the most significant digit.
            let mut idx = vec![0usize; table.len()];
            let mut best_tuple: Option<(f64, Vec<usize>)> = None;
            loop {
                let total = idx
                    .iter()
                    .enumerate()
                    .fold(0.0, |acc, (k, &i)| acc + table[k][i].1);
                if best_tuple.as_ref().is_none_or(|(b, _)| total > *b) {
                    best_tuple = Some((total, idx.clone()));
                }
                let mut k = table.len();
                let exhausted = loop {
                    if k == 0 {
                        break true;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < table[k].len() {
                        break false;
                    }
                    idx[k] = 0;
                };
                if exhausted {
                    break;
                }
            }
            let (total, tuple) = best_tuple.expect("at least one tuple");
            if best.as_ref().is_none_or(|(b, _)| total > *b) {
                let assignments = tuple
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let (p, v) = &cands[k];
                        let c = &v[i];
                        let (geo, contribution) = table[k][i];
                        PatternAssignment {
                            pattern_id: p.pattern_id.clone(),
                            unit: UnitRef {
                                layer_id: c.layer_id.clone(),
                                channel: c.channel,
                                x: c.x,
                                y: c.y,
                            },
                            unit_center: c.center,
                            unit_region: c.region,
                            response: c.response,
                            deform_penalty: c.deform,
                            geo_penalty: geo,
                            contribution,
                        }
                    })
                    .collect();
                best = Some((
                    total,
                    ParseTree {
                        schema_version: PARSE_TREE_VERSION,
                        image_id: fm.image_id.clone(),
                        chosen_template_id: t.template_id.clone(),
                        part_center: center,
                        part_region: part_region(t, center, frame),
                        total_score: total,
                        pattern_assignments: assignments,
                    },
                ));
            }
        }
    }
    Ok(best.expect("AOG has at least one template").1)
}
