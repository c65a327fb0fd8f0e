//! Seeded random parsing instances for property tests and oracle checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aog::{BoxSize, LatentPattern, PartTemplate, SemanticPartAOG};
use crate::geometry::{Cell, ImageFrame, Offset};
use crate::parser::enumeration_size;
use crate::tensor_store::{FeatureMapSet, LayerGeometry, LayerSet, LayerTensor};

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct InstanceLimits {
    pub max_templates: usize,
    pub max_patterns: usize,
    pub max_grid: usize,
    pub max_channels: usize,
    pub max_layers: usize,
    /// Resample deformation ranges until the brute-force size fits.
    pub max_enumeration: u128,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        Self {
            max_templates: 3,
            max_patterns: 4,
            max_grid: 8,
            max_channels: 6,
            max_layers: 2,
            max_enumeration: 400_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub layers: LayerSet,
    pub fm: FeatureMapSet,
    pub aog: SemanticPartAOG,
    pub frame: ImageFrame,
}

pub fn random_instance(seed: u64, limits: InstanceLimits) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = rng.random_range(1..=limits.max_layers);
    let base_stride = rng.random_range(2..=6u32);
    let mut geoms = Vec::new();
    for l in 0..n_layers {
        let stride = base_stride * (1 << l);
        let grid_h = rng.random_range(2..=limits.max_grid);
        let grid_w = rng.random_range(2..=limits.max_grid);
        let channels = rng.random_range(1..=limits.max_channels);
        let rf = stride * rng.random_range(1..=3u32);
        let offset = stride as f64 / 2.0;
        geoms.push(LayerGeometry::new(format!("conv{l}"), grid_h, grid_w, channels, stride, rf, offset));
    }
    let width = geoms
        .iter()
        .map(|g| g.grid_w as u32 * g.stride_px)
        .max()
        .unwrap();
    let height = geoms
        .iter()
        .map(|g| g.grid_h as u32 * g.stride_px)
        .max()
        .unwrap();
    let frame = ImageFrame::full(width, height);

    let mut fm = FeatureMapSet::new(format!("rand{seed}"));
    for g in &geoms {
        let data = (0..g.len()).map(|_| rng.random::<f32>()).collect();
        fm.layers.insert(
            g.layer_id.clone(),
            LayerTensor::from_vec(g.grid_h, g.grid_w, g.channels, data).unwrap(),
        );
    }
    let layers = LayerSet::new(geoms).unwrap();

    let n_templates = rng.random_range(1..=limits.max_templates);
    let mut templates = Vec::new();
    for t in 0..n_templates {
        let n_patterns = rng.random_range(1..=limits.max_patterns);
        let patterns = (0..n_patterns)
            .map(|p| {
                let g = &layers.as_slice()[rng.random_range(0..layers.as_slice().len())];
                LatentPattern {
                    pattern_id: format!("t{t}/p{p}"),
                    layer_id: g.layer_id.clone(),
                    channel: rng.random_range(0..g.channels),
                    deform_center: Cell::new(rng.random_range(0..g.grid_w), rng.random_range(0..g.grid_h)),
                    deform_half_extent: rng.random_range(0..=2),
                    displacement: Offset {
                        dx: rng.random_range(-(width as f64) / 3.0..width as f64 / 3.0),
                        dy: rng.random_range(-(height as f64) / 3.0..height as f64 / 3.0),
                    },
                    active: true,
                }
            })
            .collect();
        templates.push(PartTemplate {
            template_id: format!("t{t}"),
            patterns,
            canonical_box: BoxSize {
                w_px: rng.random_range(1.0..=width as f64),
                h_px: rng.random_range(1.0..=height as f64),
            },
        });
    }
    let mut aog = SemanticPartAOG::new("part", templates);
    while enumeration_size(&aog, &layers, &frame).unwrap() > limits.max_enumeration {
        let (ti, pi) = loop {
            let ti = rng.random_range(0..aog.templates.len());
            let pi = rng.random_range(0..aog.templates[ti].patterns.len());
            if aog.templates[ti].patterns[pi].deform_half_extent > 0 {
                break (ti, pi);
            }
        };
        aog.templates[ti].patterns[pi].deform_half_extent -= 1;
    }
    Instance {
        layers,
        fm,
        aog,
        frame,
    }
}
