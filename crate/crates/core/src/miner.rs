//! Building an AOG from a few part-annotated images.
//!
//! [`GreedyChannelMiner`] picks, per template and layer, the channels that
//! respond most strongly inside the scope region (the part box for low layers,
//! the object box otherwise) and turns each into one latent pattern. Alternate
//! miners plug in through [`PatternMiner`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aog::{BoxSize, LatentPattern, PartTemplate, SemanticPartAOG};
use crate::error::{Error, Result};
use crate::geometry::{Cell, Offset, Point, Rect};
use crate::tensor_store::{Dataset, DatasetManifest, GroupKind, ImageRecord, LayerGeometry, Split};

pub const DEFAULT_PATTERNS_PER_LAYER: usize = 8;

/// Region whose unit centers are eligible when scoring a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PartBox,
    ObjectBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    pub part_name: String,
    /// Patterns kept per layer (n_k) when the layer has no entry in `per_layer`.
    pub patterns_per_layer: usize,
    pub per_layer: BTreeMap<String, usize>,
    /// Scope for the low layer group.
    pub low_layer_scope: Scope,
    /// Scope for the mid and high layer groups.
    pub high_layer_scope: Scope,
    pub deform_half_extent: Option<usize>,
    /// Templates to build, in order. Defaults to every annotated template in
    /// order of first appearance.
    pub templates: Option<Vec<String>>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            part_name: "part".into(),
            patterns_per_layer: DEFAULT_PATTERNS_PER_LAYER,
            per_layer: BTreeMap::new(),
            low_layer_scope: Scope::PartBox,
            high_layer_scope: Scope::ObjectBox,
            deform_half_extent: None,
            templates: None,
        }
    }
}

impl MinerConfig {
    pub fn n_k(&self, layer_id: &str) -> usize {
        self.per_layer
            .get(layer_id)
            .copied()
            .unwrap_or(self.patterns_per_layer)
    }

    fn validate(&self) -> Result<()> {
        if self.patterns_per_layer == 0 {
            return Err(Error::invalid("patterns_per_layer", "must be >= 1"));
        }
        if let Some((k, _)) = self.per_layer.iter().find(|(_, &v)| v == 0) {
            return Err(Error::invalid(format!("per_layer.{k}"), "must be >= 1"));
        }
        Ok(())
    }

    fn scope_for(&self, group: Option<GroupKind>) -> Scope {
        match group {
            Some(GroupKind::Low) => self.low_layer_scope,
            _ => self.high_layer_scope,
        }
    }
}

pub trait PatternMiner {
    fn name(&self) -> &'static str;
    fn mine(&self, data: &Dataset, config: &MinerConfig) -> Result<SemanticPartAOG>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyChannelMiner;

/// One annotated part instance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Observation<'a> {
    pub record: &'a ImageRecord,
    pub part_box: Rect,
}

/// Per-image argmax of one channel within the scope region.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChannelPeak {
    pub cell: Cell,
    pub value: f32,
}

pub fn mine(data: &Dataset, config: &MinerConfig) -> Result<SemanticPartAOG> {
    GreedyChannelMiner.mine(data, config)
}

impl PatternMiner for GreedyChannelMiner {
    fn name(&self) -> &'static str {
        "greedy-channel"
    }

    fn mine(&self, data: &Dataset, config: &MinerConfig) -> Result<SemanticPartAOG> {
        config.validate()?;
        let manifest = &data.manifest;
        let mut templates = Vec::new();
        for template_id in template_ids(manifest, config) {
            let obs = observations(manifest, &template_id);
            if obs.is_empty() {
                return Err(Error::NoAnnotations(template_id));
            }
            let mut patterns = Vec::new();
            for g in manifest.layer_geometries.iter() {
                let scope = config.scope_for(manifest.layer_groups.group_of(&g.layer_id));
                let peaks = (0..g.channels)
                    .map(|c| channel_peaks(data, g, c, &obs, scope))
                    .collect::<Result<Vec<_>>>()?;
                for c in top_channels(&peaks, config.n_k(&g.layer_id)) {
                    patterns.push(build_pattern(
                        format!("{template_id}/{}/c{c}", g.layer_id),
                        g,
                        c,
                        &obs,
                        &peaks[c],
                        config.deform_half_extent,
                    ));
                }
            }
            templates.push(PartTemplate {
                canonical_box: mean_box(&obs),
                template_id,
                patterns,
            });
        }
        let mut aog = SemanticPartAOG::new(config.part_name.clone(), templates);
        aog.provenance = serde_json::json!({
            "miner": self.name(),
            "config": config,
        });
        aog.validate_against(&manifest.layer_geometries)?;
        Ok(aog)
    }
}

fn template_ids(manifest: &DatasetManifest, config: &MinerConfig) -> Vec<String> {
    if let Some(t) = &config.templates {
        return t.clone();
    }
    let mut out: Vec<String> = Vec::new();
    for r in manifest.records_in(Split::Train) {
        for a in &r.part_annotations {
            if !out.contains(&a.template_id) {
                out.push(a.template_id.clone());
            }
        }
    }
    out
}

pub(crate) fn observations<'a>(manifest: &'a DatasetManifest, template_id: &str) -> Vec<Observation<'a>> {
    manifest
        .records_in(Split::Train)
        .flat_map(|r| {
            r.part_annotations
                .iter()
                .filter(|a| a.template_id == template_id)
                .map(move |a| Observation {
                    record: r,
                    part_box: a.part_box,
                })
        })
        .collect()
}

/// Argmax of channel `c` among units whose center lies in the scope region,
/// for every observation.
pub(crate) fn channel_peaks(
    data: &Dataset,
    g: &LayerGeometry,
    c: usize,
    obs: &[Observation<'_>],
    scope: Scope,
) -> Result<Vec<ChannelPeak>> {
    obs.iter()
        .map(|o| {
            let fm = data.features(&o.record.image_id)?;
            let t = fm.layer(&g.layer_id)?;
            let region = match scope {
                Scope::PartBox => o.part_box,
                Scope::ObjectBox => o.record.object_box,
            };
            t.channel_argmax(c, |cell| region.contains_point(g.cell_center(cell)))
                .map(|(cell, value)| ChannelPeak { cell, value })
                .ok_or_else(|| Error::EmptyScope {
                    layer: g.layer_id.clone(),
                    image: o.record.image_id.clone(),
                })
        })
        .collect()
}

/// Channels ranked by mean peak response (ties: lower channel index).
fn top_channels(peaks: &[Vec<ChannelPeak>], n_k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = peaks
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let sum: f64 = p.iter().map(|pk| pk.value as f64).sum();
            (sum / p.len() as f64, c)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(n_k).map(|(_, c)| c).collect()
}

/// Round to the nearest integer, halves toward the lower value.
fn round_half_down(v: f64) -> usize {
    (v - 0.5).ceil().max(0.0) as usize
}

pub(crate) fn build_pattern(
    pattern_id: String,
    g: &LayerGeometry,
    channel: usize,
    obs: &[Observation<'_>],
    peaks: &[ChannelPeak],
    half_extent: Option<usize>,
) -> LatentPattern {
    let n = peaks.len() as f64;
    let mean_x = peaks.iter().map(|p| p.cell.x as f64).sum::<f64>() / n;
    let mean_y = peaks.iter().map(|p| p.cell.y as f64).sum::<f64>() / n;
    let (mut dx, mut dy) = (0.0, 0.0);
    for (o, p) in obs.iter().zip(peaks) {
        let part: Point = o.part_box.center();
        let unit = g.cell_center(p.cell);
        dx += part.x - unit.x;
        dy += part.y - unit.y;
    }
    LatentPattern {
        pattern_id,
        layer_id: g.layer_id.clone(),
        channel,
        deform_center: Cell::new(
            round_half_down(mean_x).min(g.grid_w - 1),
            round_half_down(mean_y).min(g.grid_h - 1),
        ),
        deform_half_extent: half_extent.unwrap_or_else(|| g.default_half_extent()),
        displacement: Offset {
            dx: dx / n,
            dy: dy / n,
        },
        active: true,
    }
}

fn mean_box(obs: &[Observation<'_>]) -> BoxSize {
    let n = obs.len() as f64;
    BoxSize {
        w_px: obs.iter().map(|o| o.part_box.w).sum::<f64>() / n,
        h_px: obs.iter().map(|o| o.part_box.h).sum::<f64>() / n,
    }
}

/// Recompute every template's canonical box from the current annotations.
pub fn rebuild_template_box(aog: &SemanticPartAOG, manifest: &DatasetManifest) -> Result<SemanticPartAOG> {
    let mut next = aog.clone();
    for t in &mut next.templates {
        let obs = observations(manifest, &t.template_id);
        if obs.is_empty() {
            return Err(Error::NoAnnotations(t.template_id.clone()));
        }
        t.canonical_box = mean_box(&obs);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::{
        FeatureMapSet, LayerGroups, LayerSet, LayerTensor, PartAnnotation,
    };
    use std::path::PathBuf;

    fn record(id: &str, part_box: Rect, template: &str) -> ImageRecord {
        ImageRecord {
            image_id: id.into(),
            width_px: 16,
            height_px: 16,
            object_box: Rect::new(0.0, 0.0, 16.0, 16.0),
            part_annotations: vec![PartAnnotation {
                template_id: template.into(),
                part_box,
            }],
            split: Split::Train,
        }
    }

    // One 4x4x2 layer, stride 4, offset 2: cell centers at 2, 6, 10, 14.
    fn dataset(records: Vec<ImageRecord>, tensors: Vec<LayerTensor>) -> Dataset {
        let manifest = DatasetManifest {
            category: "cat".into(),
            layer_geometries: LayerSet::new(vec![LayerGeometry::new("conv", 4, 4, 2, 4, 8, 2.0)]).unwrap(),
            layer_groups: LayerGroups {
                low: vec!["conv".into()],
                ..Default::default()
            },
            feature_paths: records
                .iter()
                .map(|r| (r.image_id.clone(), PathBuf::from(format!("{}.fmap", r.image_id))))
                .collect(),
            records,
            saliency_paths: vec![],
            normalize: false,
            base_dir: PathBuf::new(),
        };
        let features = manifest
            .records
            .iter()
            .zip(tensors)
            .map(|(r, t)| (r.image_id.clone(), FeatureMapSet::new(r.image_id.clone()).with_layer("conv", t)))
            .collect();
        Dataset::from_parts(manifest, features)
    }

    #[test]
    fn dominant_channel_inside_part_box_wins() {
        let mut t = LayerTensor::zeros(4, 4, 2);
        t.set(1, 1, 0, 0.9);
        t.set(3, 3, 1, 1.0); // outside the part box
        let data = dataset(vec![record("a", Rect::new(0.0, 0.0, 8.0, 8.0), "front")], vec![t]);
        let cfg = MinerConfig {
            patterns_per_layer: 1,
            ..Default::default()
        };
        let aog = mine(&data, &cfg).unwrap();
        let p = &aog.templates[0].patterns;
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].channel, 0);
        assert_eq!(p[0].deform_center, Cell::new(1, 1));
        // part center (4, 4) - unit (6, 6)
        assert_eq!(p[0].displacement, Offset { dx: -2.0, dy: -2.0 });
        assert_eq!(p[0].deform_half_extent, 0);
        assert_eq!(aog.templates[0].canonical_box, BoxSize { w_px: 8.0, h_px: 8.0 });
        assert_eq!(aog.provenance["miner"], "greedy-channel");
    }

    #[test]
    fn deformation_center_is_mean_of_peaks() {
        let mut a = LayerTensor::zeros(4, 4, 2);
        a.set(1, 1, 0, 1.0);
        let mut b = LayerTensor::zeros(4, 4, 2);
        b.set(3, 1, 0, 1.0);
        let full = Rect::new(0.0, 0.0, 16.0, 16.0);
        let data = dataset(vec![record("a", full, "t"), record("b", full, "t")], vec![a, b]);
        let cfg = MinerConfig {
            patterns_per_layer: 1,
            ..Default::default()
        };
        let aog = mine(&data, &cfg).unwrap();
        assert_eq!(aog.templates[0].patterns[0].deform_center, Cell::new(2, 1));
    }

    #[test]
    fn half_cells_round_toward_lower_index() {
        assert_eq!(round_half_down(1.5), 1);
        assert_eq!(round_half_down(1.51), 2);
        assert_eq!(round_half_down(0.5), 0);
        assert_eq!(round_half_down(2.0), 2);
    }

    #[test]
    fn ties_prefer_lower_channel_and_topk_is_monotone() {
        let t = LayerTensor::zeros(4, 4, 2);
        let data = dataset(vec![record("a", Rect::new(0.0, 0.0, 16.0, 16.0), "t")], vec![t]);
        let one = mine(&data, &MinerConfig { patterns_per_layer: 1, ..Default::default() }).unwrap();
        assert_eq!(one.templates[0].patterns[0].channel, 0);
        let two = mine(&data, &MinerConfig { patterns_per_layer: 2, ..Default::default() }).unwrap();
        assert_eq!(two.templates[0].patterns.len(), 2);
        assert_eq!(two.templates[0].patterns[0], one.templates[0].patterns[0]);
    }

    #[test]
    fn missing_annotations_and_empty_scope_are_errors() {
        let t = LayerTensor::zeros(4, 4, 2);
        let data = dataset(vec![record("a", Rect::new(0.0, 0.0, 16.0, 16.0), "t")], vec![t.clone()]);
        let cfg = MinerConfig {
            templates: Some(vec!["t".into(), "ghost".into()]),
            ..Default::default()
        };
        assert!(matches!(mine(&data, &cfg), Err(Error::NoAnnotations(id)) if id == "ghost"));

        // a 1x1 part box between cell centers holds no unit center
        let data = dataset(vec![record("a", Rect::new(3.0, 3.0, 1.0, 1.0), "t")], vec![t]);
        assert!(matches!(
            mine(&data, &MinerConfig::default()),
            Err(Error::EmptyScope { layer, .. }) if layer == "conv"
        ));
    }

    #[test]
    fn canonical_box_is_mean_of_annotations() {
        let t = LayerTensor::zeros(4, 4, 2);
        let data = dataset(
            vec![
                record("a", Rect::new(0.0, 0.0, 8.0, 6.0), "t"),
                record("b", Rect::new(0.0, 0.0, 12.0, 10.0), "t"),
            ],
            vec![t.clone(), t],
        );
        let aog = mine(&data, &MinerConfig::default()).unwrap();
        assert_eq!(aog.templates[0].canonical_box, BoxSize { w_px: 10.0, h_px: 8.0 });
    }

    #[test]
    fn rebuild_box_from_annotations() {
        let t = LayerTensor::zeros(4, 4, 2);
        let data = dataset(vec![record("a", Rect::new(0.0, 0.0, 16.0, 16.0), "t")], vec![t.clone()]);
        let mut aog = mine(&data, &MinerConfig::default()).unwrap();
        let mut manifest = data.manifest.clone();
        manifest.records[0].part_annotations[0].part_box = Rect::new(0.0, 0.0, 40.0, 30.0);
        let rebuilt = rebuild_template_box(&aog, &manifest).unwrap();
        assert_eq!(rebuilt.templates[0].canonical_box, BoxSize { w_px: 40.0, h_px: 30.0 });

        let mut two = manifest.clone();
        two.records.push(record("b", Rect::new(0.0, 0.0, 60.0, 50.0), "t"));
        assert_eq!(
            rebuild_template_box(&aog, &two).unwrap().templates[0].canonical_box,
            BoxSize { w_px: 50.0, h_px: 40.0 }
        );

        aog.templates[0].template_id = "orphan".into();
        assert!(matches!(rebuild_template_box(&aog, &manifest), Err(Error::NoAnnotations(_))));
    }
}
