//! Pattern visualization by receptive-field splatting.
//!
//! Each pattern's assigned unit and its neighbours within the layer's
//! `viz_window` are projected back onto the image: every such cell paints its
//! response over its clipped receptive field, and overlapping paints keep the
//! max. Everything else contributes zero.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::aog::{LatentPattern, ParseTree, PatternAssignment, SemanticPartAOG, UnitRef};
use crate::error::{Error, Result};
use crate::geometry::{Cell, ImageFrame, Point, Rect};
use crate::tensor_store::{unit_field, FeatureMapSet, GroupKind, LayerGroups, LayerSet};

pub const LAYOUT_VERSION: u32 = 1;

/// Weight of the heat layer when blending over a base image.
pub const HEAT_ALPHA: f32 = 0.6;

/// Image-resolution grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub pattern_id: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl Heatmap {
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

/// Heatmaps of one layer group for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapLayer {
    pub image_id: String,
    pub group: GroupKind,
    pub width: usize,
    pub height: usize,
    pub heatmaps: Vec<Heatmap>,
    /// Pointwise max over `heatmaps` (all zero when there are none).
    pub composite: Vec<f32>,
}

/// Splat the responses around a pattern's assigned unit.
pub fn pattern_heatmap(
    fm: &FeatureMapSet,
    pattern: &LatentPattern,
    parse: &ParseTree,
    layers: &LayerSet,
    frame: &ImageFrame,
) -> Result<Heatmap> {
    let a = parse
        .assignment(&pattern.pattern_id)
        .ok_or_else(|| Error::MissingAssignment(pattern.pattern_id.clone()))?;
    let g = layers.get(&pattern.layer_id)?;
    let t = fm.layer(&pattern.layer_id)?;
    if t.shape() != (g.grid_h, g.grid_w, g.channels) || pattern.channel >= g.channels {
        return Err(Error::ShapeMismatch {
            layer: g.layer_id.clone(),
            detail: "feature tensor does not match geometry".into(),
        });
    }
    let (w, h) = (frame.width_px as usize, frame.height_px as usize);
    let mut values = vec![0.0f32; w * h];
    let win = g.viz_window() as usize;
    let (ax, ay) = (a.unit.x, a.unit.y);
    for y in ay.saturating_sub(win)..=(ay + win).min(g.grid_h - 1) {
        for x in ax.saturating_sub(win)..=(ax + win).min(g.grid_w - 1) {
            let v = t.at(x, y, pattern.channel).max(0.0);
            if v == 0.0 {
                continue;
            }
            let rf = unit_field(g, Cell::new(x, y), frame).region;
            let cols = rf.pixel_cols(w);
            for py in rf.pixel_rows(h) {
                for px in cols.clone() {
                    let slot = &mut values[py * w + px];
                    *slot = slot.max(v);
                }
            }
        }
    }
    Ok(Heatmap {
        pattern_id: pattern.pattern_id.clone(),
        width: w,
        height: h,
        values,
    })
}

/// Pointwise max; errors when the maps disagree on dimensions.
pub fn composite(width: usize, height: usize, heatmaps: &[Heatmap]) -> Result<Vec<f32>> {
    let mut out = vec![0.0f32; width * height];
    for m in heatmaps {
        if (m.width, m.height) != (width, height) || m.values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "heatmap `{}` is {}x{}, expected {width}x{height}",
                m.pattern_id, m.width, m.height
            )));
        }
        for (o, &v) in out.iter_mut().zip(&m.values) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// Heatmaps of every parsed pattern whose layer belongs to `group`.
pub fn heatmap_layer(
    fm: &FeatureMapSet,
    aog: &SemanticPartAOG,
    parse: &ParseTree,
    layers: &LayerSet,
    groups: &LayerGroups,
    frame: &ImageFrame,
    group: GroupKind,
) -> Result<HeatmapLayer> {
    let mut heatmaps = Vec::new();
    for a in &parse.pattern_assignments {
        if groups.group_of(&a.unit.layer_id) != Some(group) {
            continue;
        }
        let (_, p) = aog
            .find_pattern(&a.pattern_id)
            .ok_or_else(|| Error::UnknownPattern(a.pattern_id.clone()))?;
        heatmaps.push(pattern_heatmap(fm, p, parse, layers, frame)?);
    }
    let (w, h) = (frame.width_px as usize, frame.height_px as usize);
    Ok(HeatmapLayer {
        image_id: parse.image_id.clone(),
        group,
        width: w,
        height: h,
        composite: composite(w, h, &heatmaps)?,
        heatmaps,
    })
}

/// Per-pattern entry of the overlay layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutPattern {
    pub pattern_id: String,
    pub layer_id: String,
    pub group: Option<GroupKind>,
    pub unit: UnitRef,
    /// Image-plane position of the assigned unit.
    pub peak: Point,
    pub contribution: f64,
    /// Whether this pattern's heatmap is part of the rendered composite.
    pub in_overlay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayLayout {
    pub schema_version: u32,
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub group: Option<GroupKind>,
    pub chosen_template_id: String,
    pub part_center: Point,
    pub part_box: Rect,
    pub total_score: f64,
    pub patterns: Vec<LayoutPattern>,
}

impl OverlayLayout {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub png: Vec<u8>,
    pub layout: OverlayLayout,
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Composite the heatmaps (responses clamped to [0, 1]) and outline the part box.
///
/// With a base image the heat is alpha-blended over it at [`HEAT_ALPHA`].
pub fn render_overlay(
    image_id: &str,
    heatmaps: &[Heatmap],
    parse: &ParseTree,
    frame: &ImageFrame,
    groups: &LayerGroups,
    base: Option<&GrayImage>,
) -> Result<Overlay> {
    let (w, h) = (frame.width_px as usize, frame.height_px as usize);
    let heat = composite(w, h, heatmaps)?;
    if let Some(b) = base {
        if (b.width, b.height) != (w, h) || b.pixels.len() != w * h {
            return Err(Error::DimensionMismatch(format!(
                "base image is {}x{}, expected {w}x{h}",
                b.width, b.height
            )));
        }
    }
    let mut pixels: Vec<u8> = heat
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let hv = v.clamp(0.0, 1.0) * 255.0;
            let out = match base {
                Some(b) => (1.0 - HEAT_ALPHA) * b.pixels[i] as f32 + HEAT_ALPHA * hv,
                None => hv,
            };
            out.round() as u8
        })
        .collect();
    outline(&mut pixels, w, h, &parse.part_region);

    let shown: Vec<&str> = heatmaps.iter().map(|m| m.pattern_id.as_str()).collect();
    let layout = OverlayLayout {
        schema_version: LAYOUT_VERSION,
        image_id: image_id.to_string(),
        width: w,
        height: h,
        group: None,
        chosen_template_id: parse.chosen_template_id.clone(),
        part_center: parse.part_center,
        part_box: parse.part_region,
        total_score: parse.total_score,
        patterns: parse
            .pattern_assignments
            .iter()
            .map(|a| layout_entry(a, groups, shown.contains(&a.pattern_id.as_str())))
            .collect(),
    };
    Ok(Overlay {
        png: encode_gray_png(&GrayImage {
            width: w,
            height: h,
            pixels,
        })?,
        layout,
    })
}

/// Render one group's heatmaps; the layout still lists every parsed pattern.
pub fn render_group(layer: &HeatmapLayer, parse: &ParseTree, frame: &ImageFrame, groups: &LayerGroups) -> Result<Overlay> {
    let mut o = render_overlay(&layer.image_id, &layer.heatmaps, parse, frame, groups, None)?;
    o.layout.group = Some(layer.group);
    Ok(o)
}

/// Overlay of one group, or of every group when `group` is `None`.
pub fn render_parse(
    fm: &FeatureMapSet,
    aog: &SemanticPartAOG,
    parse: &ParseTree,
    layers: &LayerSet,
    groups: &LayerGroups,
    frame: &ImageFrame,
    group: Option<GroupKind>,
) -> Result<Overlay> {
    match group {
        Some(g) => render_group(&heatmap_layer(fm, aog, parse, layers, groups, frame, g)?, parse, frame, groups),
        None => {
            let mut maps = Vec::new();
            for g in GroupKind::ALL {
                maps.extend(heatmap_layer(fm, aog, parse, layers, groups, frame, g)?.heatmaps);
            }
            render_overlay(&parse.image_id, &maps, parse, frame, groups, None)
        }
    }
}

fn layout_entry(a: &PatternAssignment, groups: &LayerGroups, in_overlay: bool) -> LayoutPattern {
    LayoutPattern {
        pattern_id: a.pattern_id.clone(),
        layer_id: a.unit.layer_id.clone(),
        group: groups.group_of(&a.unit.layer_id),
        unit: a.unit.clone(),
        peak: a.unit_center,
        contribution: a.contribution,
        in_overlay,
    }
}

// One-pixel white border along the pixels covered by `r`.
fn outline(pixels: &mut [u8], w: usize, h: usize, r: &Rect) {
    let (cols, rows) = (r.pixel_cols(w), r.pixel_rows(h));
    if cols.is_empty() || rows.is_empty() {
        return;
    }
    for x in cols.clone() {
        pixels[rows.start * w + x] = 255;
        pixels[(rows.end - 1) * w + x] = 255;
    }
    for y in rows {
        pixels[y * w + cols.start] = 255;
        pixels[y * w + cols.end - 1] = 255;
    }
}

pub fn encode_gray_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&img.pixels)
            .map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(buf)
}

/// Decode a PNG into 8-bit grayscale (color inputs are averaged).
pub fn decode_gray_png(bytes: &[u8]) -> Result<GrayImage> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let color = match info.color_type {
        png::ColorType::GrayscaleAlpha | png::ColorType::Rgba => channels - 1,
        _ => channels,
    };
    let pixels = buf[..info.line_size * h]
        .chunks(info.line_size)
        .flat_map(|row| {
            row[..w * channels].chunks(channels).map(move |px| {
                (px[..color].iter().map(|&v| v as u32).sum::<u32>() / color as u32) as u8
            })
        })
        .collect();
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

#[cfg(test)]
mod tests;
