//! Seeded planted-ground-truth datasets.
//!
//! Each template plants Gaussian blobs in its own channels at
//! `part_center - displacement` (converted to grid coordinates). Distractor
//! channels of the low group peak away from the part, at one of a few random
//! background sites (recurring clutter). Every channel gets uniform
//! background noise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Offset, Point, Rect};
use crate::tensor_store::{
    write_feature_set, Dataset, DatasetManifest, FeatureMapSet, ImageRecord, LayerGeometry, LayerGroups,
    LayerSet, LayerTensor, PartAnnotation, Split,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub category: String,
    pub width_px: u32,
    pub height_px: u32,
    /// Channels beyond the planted ones hold only noise, which per-channel
    /// max normalization stretches to full scale; keep counts tight.
    pub layers: Vec<LayerGeometry>,
    pub layer_groups: LayerGroups,
    pub templates: usize,
    /// Planted patterns per template in every layer.
    pub patterns_per_layer: usize,
    pub blob_amplitude: f32,
    /// Gaussian sigma in cells.
    pub blob_sigma_cells: f64,
    /// Background noise is uniform in `[0, noise_amplitude)`.
    pub noise_amplitude: f32,
    /// Distractor channels in each low-group layer.
    pub distractor_channels: usize,
    /// Background sites per distractor channel; each image fires one of them
    /// (one clear of the part). 0 draws a fresh random site per image.
    pub distractor_sites: usize,
    /// Annotated training images per template.
    pub train_per_template: usize,
    pub test_images: usize,
    pub part_box_px: f64,
    /// Per-template base part centers are drawn from this box (snapped to the
    /// finest lattice) ...
    pub center_region: Rect,
    /// ... and each test image moves its part by up to this many pixels per axis.
    pub jitter_px: f64,
    /// Jitter training images too. Off by default: annotated images show the
    /// canonical pose, which keeps mined geometry on the search lattice.
    pub jitter_train: bool,
    /// Maximum planted displacement per axis, per group (low, mid, high).
    pub displacement_px: [f64; 3],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            category: "synthetic".into(),
            width_px: 128,
            height_px: 128,
            layers: vec![
                LayerGeometry::new("low", 32, 32, 8, 4, 12, 2.0),
                LayerGeometry::new("mid", 16, 16, 6, 8, 28, 4.0),
                LayerGeometry::new("high", 8, 8, 6, 16, 60, 8.0),
            ],
            layer_groups: LayerGroups {
                low: vec!["low".into()],
                mid: vec!["mid".into()],
                high: vec!["high".into()],
            },
            templates: 3,
            patterns_per_layer: 2,
            blob_amplitude: 1.0,
            blob_sigma_cells: 0.8,
            noise_amplitude: 0.25,
            distractor_channels: 2,
            distractor_sites: 3,
            train_per_template: 1,
            test_images: 50,
            part_box_px: 32.0,
            center_region: Rect::new(48.0, 48.0, 32.0, 32.0),
            jitter_px: 6.0,
            jitter_train: false,
            displacement_px: [10.0, 16.0, 32.0],
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("templates", self.templates),
            ("patterns_per_layer", self.patterns_per_layer),
            ("train_per_template", self.train_per_template),
            ("test_images", self.test_images),
        ];
        for (field, n) in counts {
            if n == 0 {
                return Err(Error::invalid(field, "must be >= 1"));
            }
        }
        let layers = LayerSet::new(self.layers.clone())?;
        // Group membership is checked through a throwaway manifest.
        let probe = DatasetManifest {
            category: self.category.clone(),
            layer_geometries: layers.clone(),
            layer_groups: self.layer_groups.clone(),
            records: vec![],
            feature_paths: BTreeMap::new(),
            saliency_paths: vec![],
            normalize: true,
            base_dir: PathBuf::new(),
        };
        probe.validate()?;
        for (i, g) in layers.iter().enumerate() {
            let low = self.layer_groups.low.contains(&g.layer_id);
            let need = self.templates * self.patterns_per_layer + if low { self.distractor_channels } else { 0 };
            if g.channels < need {
                return Err(Error::invalid(
                    format!("layers[{i}].channels"),
                    format!("{} channels cannot hold {need} planted channels", g.channels),
                ));
            }
        }
        let checks = [
            ("blob_amplitude", self.blob_amplitude as f64 > 0.0),
            ("blob_sigma_cells", self.blob_sigma_cells > 0.0),
            ("noise_amplitude", self.noise_amplitude >= 0.0),
            ("jitter_px", self.jitter_px >= 0.0),
            ("part_box_px", self.part_box_px > 0.0),
            ("displacement_px", self.displacement_px.iter().all(|d| *d >= 0.0)),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::invalid(field, "out of range"));
            }
        }
        Ok(())
    }

    fn group_index(&self, layer_id: &str) -> usize {
        if self.layer_groups.low.iter().any(|l| l == layer_id) {
            0
        } else if self.layer_groups.mid.iter().any(|l| l == layer_id) {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPattern {
    pub layer_id: String,
    pub channel: usize,
    /// Offset from the planted unit to the part center, in pixels.
    pub displacement: Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTemplate {
    pub template_id: String,
    pub base_center: Point,
    pub patterns: Vec<PlantedPattern>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedImage {
    pub image_id: String,
    pub template_id: String,
    pub part_center: Point,
    /// `(layer_id, channel, peak)` of each distractor, peak in image pixels.
    pub distractor_peaks: Vec<(String, usize, Point)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub templates: Vec<PlantedTemplate>,
    /// `(layer_id, channel)` of every distractor channel.
    pub distractor_channels: Vec<(String, usize)>,
    pub images: Vec<PlantedImage>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    /// Paths point at `features/<image_id>.fmap`.
    pub manifest: DatasetManifest,
    /// Raw (unnormalized) features.
    pub features: BTreeMap<String, FeatureMapSet>,
    pub ground_truth: GroundTruth,
}

impl SyntheticDataset {
    /// Normalized in-memory dataset, identical to loading the written files.
    pub fn dataset(&self) -> Dataset {
        Dataset::from_parts(self.manifest.clone(), self.features.clone())
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let layers = LayerSet::new(config.layers.clone())?;
    let finest = layers.finest().clone();
    let (w, h) = (config.width_px as f64, config.height_px as f64);

    let templates: Vec<PlantedTemplate> = (0..config.templates)
        .map(|t| {
            let r = config.center_region;
            let snap = |v: f64| finest.offset_px + ((v - finest.offset_px) / finest.stride_px as f64).round() * finest.stride_px as f64;
            let base_center = Point::new(
                snap(rng.random_range(r.x..=r.right())),
                snap(rng.random_range(r.y..=r.bottom())),
            );
            let mut patterns = Vec::new();
            for g in layers.iter() {
                let d = config.displacement_px[config.group_index(&g.layer_id)];
                for k in 0..config.patterns_per_layer {
                    patterns.push(PlantedPattern {
                        layer_id: g.layer_id.clone(),
                        channel: t * config.patterns_per_layer + k,
                        displacement: Offset {
                            dx: if d > 0.0 { rng.random_range(-d..=d) } else { 0.0 },
                            dy: if d > 0.0 { rng.random_range(-d..=d) } else { 0.0 },
                        },
                    });
                }
            }
            PlantedTemplate {
                template_id: format!("t{t}"),
                base_center,
                patterns,
            }
        })
        .collect();
    let distractor_channels: Vec<(String, usize)> = layers
        .iter()
        .filter(|g| config.layer_groups.low.contains(&g.layer_id))
        .flat_map(|g| {
            (0..config.distractor_channels)
                .map(move |j| (g.layer_id.clone(), config.templates * config.patterns_per_layer + j))
        })
        .collect();

    let site_pools: Vec<Vec<Point>> = distractor_channels
        .iter()
        .map(|(layer_id, _)| {
            let g = layers.get(layer_id)?;
            Ok((0..config.distractor_sites)
                .map(|_| g.cell_center(Cell::new(rng.random_range(0..g.grid_w), rng.random_range(0..g.grid_h))))
                .collect())
        })
        .collect::<Result<_>>()?;

    // Train images cycle through templates; test templates are random.
    let mut plan: Vec<(String, usize, Split)> = Vec::new();
    for i in 0..config.templates * config.train_per_template {
        plan.push((format!("train_{i:03}"), i % config.templates, Split::Train));
    }
    for i in 0..config.test_images {
        plan.push((format!("test_{i:03}"), rng.random_range(0..config.templates), Split::Test));
    }

    let mut records = Vec::new();
    let mut features = BTreeMap::new();
    let mut images = Vec::new();
    let object_box = Rect::new(0.0, 0.0, w, h);
    for (image_id, t, split) in plan {
        let tpl = &templates[t];
        let j = if split == Split::Train && !config.jitter_train { 0.0 } else { config.jitter_px };
        let jit = |rng: &mut ChaCha8Rng| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
        let center = Point::new(
            (tpl.base_center.x + jit(&mut rng)).clamp(0.0, w),
            (tpl.base_center.y + jit(&mut rng)).clamp(0.0, h),
        );
        let part_box = object_box.intersect(&Rect::centered(center, config.part_box_px, config.part_box_px));

        let mut tensors: BTreeMap<String, LayerTensor> = BTreeMap::new();
        for g in layers.iter() {
            let data = (0..g.len())
                .map(|_| {
                    if config.noise_amplitude > 0.0 {
                        rng.random_range(0.0..config.noise_amplitude)
                    } else {
                        0.0
                    }
                })
                .collect();
            tensors.insert(g.layer_id.clone(), LayerTensor::from_vec(g.grid_h, g.grid_w, g.channels, data)?);
        }
        for p in &tpl.patterns {
            let g = layers.get(&p.layer_id)?;
            let pos = Point::new(center.x - p.displacement.dx, center.y - p.displacement.dy);
            plant(tensors.get_mut(&p.layer_id).unwrap(), g, p.channel, pos, config, &image_id)?;
        }
        let mut distractor_peaks = Vec::new();
        for ((layer_id, c), pool) in distractor_channels.iter().zip(&site_pools) {
            let g = layers.get(layer_id)?;
            let pos = off_part_position(&mut rng, g, &part_box, pool, &image_id)?;
            plant(tensors.get_mut(layer_id).unwrap(), g, *c, pos, config, &image_id)?;
            distractor_peaks.push((layer_id.clone(), *c, pos));
        }

        let mut fm = FeatureMapSet::new(image_id.clone());
        fm.layers = tensors;
        features.insert(image_id.clone(), fm);
        records.push(ImageRecord {
            image_id: image_id.clone(),
            width_px: config.width_px,
            height_px: config.height_px,
            object_box,
            part_annotations: vec![PartAnnotation {
                template_id: tpl.template_id.clone(),
                part_box,
            }],
            split,
        });
        images.push(PlantedImage {
            image_id,
            template_id: tpl.template_id.clone(),
            part_center: center,
            distractor_peaks,
        });
    }

    let manifest = DatasetManifest {
        category: config.category.clone(),
        layer_geometries: layers,
        layer_groups: config.layer_groups.clone(),
        feature_paths: records
            .iter()
            .map(|r| (r.image_id.clone(), PathBuf::from(format!("features/{}.fmap", r.image_id))))
            .collect(),
        records,
        saliency_paths: vec![],
        normalize: true,
        base_dir: PathBuf::new(),
    };
    manifest.validate()?;
    Ok(SyntheticDataset {
        config: config.clone(),
        manifest,
        features,
        ground_truth: GroundTruth {
            seed: config.seed,
            templates,
            distractor_channels,
            images,
        },
    })
}

// Adds a Gaussian centered on the cell nearest to `pos`.
fn plant(
    t: &mut LayerTensor,
    g: &LayerGeometry,
    channel: usize,
    pos: Point,
    config: &SyntheticConfig,
    image_id: &str,
) -> Result<()> {
    let (gx, gy) = g.nearest_cell_coords(pos);
    let max_x = (g.grid_w - 1) as f64;
    let max_y = (g.grid_h - 1) as f64;
    if !(0.0..=max_x).contains(&gx) || !(0.0..=max_y).contains(&gy) {
        return Err(Error::BlobOutsideGrid(format!(
            "image `{image_id}`, layer `{}`, channel {channel}: grid position ({gx:.2}, {gy:.2})",
            g.layer_id
        )));
    }
    let s2 = 2.0 * config.blob_sigma_cells * config.blob_sigma_cells;
    for y in 0..g.grid_h {
        for x in 0..g.grid_w {
            let d2 = (x as f64 - gx).powi(2) + (y as f64 - gy).powi(2);
            let v = config.blob_amplitude as f64 * (-d2 / s2).exp();
            let cur = t.at(x, y, channel);
            t.set(x, y, channel, cur + v as f32);
        }
    }
    Ok(())
}

// A unit center whose receptive field stays clear of the part box, from the
// site pool when one of its sites qualifies.
fn off_part_position(
    rng: &mut ChaCha8Rng,
    g: &LayerGeometry,
    part_box: &Rect,
    pool: &[Point],
    image_id: &str,
) -> Result<Point> {
    let margin = g.rf_size_px as f64 / 2.0 + g.stride_px as f64;
    let keep_out = Rect::new(
        part_box.x - margin,
        part_box.y - margin,
        part_box.w + 2.0 * margin,
        part_box.h + 2.0 * margin,
    );
    let sites: Vec<Point> = pool.iter().copied().filter(|p| !keep_out.contains_point(*p)).collect();
    if !sites.is_empty() {
        return Ok(sites[rng.random_range(0..sites.len())]);
    }
    let candidates: Vec<Point> = (0..g.grid_h)
        .flat_map(|y| (0..g.grid_w).map(move |x| (x, y)))
        .map(|(x, y)| g.cell_center(Cell::new(x, y)))
        .filter(|p| !keep_out.contains_point(*p))
        .collect();
    if candidates.is_empty() {
        return Err(Error::BlobOutsideGrid(format!(
            "image `{image_id}`: no room for a distractor in layer `{}`",
            g.layer_id
        )));
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Write `manifest.json`, `features/*.fmap`, `ground_truth.json` and
/// `config.json` under `dir`; returns the manifest path.
pub fn write_synthetic(set: &SyntheticDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let feat_dir = dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    for (id, fm) in &set.features {
        write_feature_set(fm, feat_dir.join(format!("{id}.fmap")))?;
    }
    let manifest_path = dir.join("manifest.json");
    set.manifest.save(&manifest_path)?;
    for (name, value) in [
        ("ground_truth.json", serde_json::to_string_pretty(&set.ground_truth)?),
        ("config.json", serde_json::to_string_pretty(&set.config)?),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, value).map_err(|e| Error::io(&p, e))?;
    }
    Ok(manifest_path)
}
