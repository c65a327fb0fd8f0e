use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aog::PatternAssignment;
use crate::error::{Error, Result};
use crate::geometry::{ImageFrame, Rect};
use crate::tensor_store::{fmap, DatasetManifest};

/// Per-pixel magnitude of a pattern score's sensitivity, at image resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub image_id: String,
    pub pattern_id: String,
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` values.
    pub values: Vec<f32>,
}

impl SaliencyMap {
    pub fn new(
        image_id: impl Into<String>,
        pattern_id: impl Into<String>,
        width: usize,
        height: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} saliency values for a {width}x{height} image",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                format!("saliency.values[{i}]"),
                "must be finite and nonnegative",
            ));
        }
        Ok(Self {
            image_id: image_id.into(),
            pattern_id: pattern_id.into(),
            width,
            height,
            values,
        })
    }

    /// Read an FMAP container holding one `height x width x 1` layer.
    pub fn load(path: impl AsRef<Path>, image_id: &str, pattern_id: &str) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_fmap_bytes(&bytes, image_id, pattern_id)
    }

    pub fn from_fmap_bytes(bytes: &[u8], image_id: &str, pattern_id: &str) -> Result<Self> {
        let mut layers = fmap::decode(bytes)?;
        if layers.len() != 1 || layers[0].1.channels != 1 {
            return Err(Error::MalformedContainer(
                "saliency container must hold exactly one single-channel layer".into(),
            ));
        }
        let (_, t) = layers.pop().unwrap();
        Self::new(image_id, pattern_id, t.grid_w, t.grid_h, t.data().to_vec())
    }

    pub fn to_fmap_bytes(&self) -> Result<Vec<u8>> {
        let t = crate::tensor_store::LayerTensor::from_vec(self.height, self.width, 1, self.values.clone())?;
        fmap::encode([("saliency", &t)])
    }

    pub fn check_frame(&self, frame: &ImageFrame) -> Result<()> {
        if (self.width, self.height) != (frame.width_px as usize, frame.height_px as usize) {
            return Err(Error::DimensionMismatch(format!(
                "saliency for `{}` is {}x{} but the image is {}x{}",
                self.pattern_id, self.width, self.height, frame.width_px, frame.height_px
            )));
        }
        Ok(())
    }
}

/// Uniform mass over the pixels of the pattern's parsed region, zero
/// elsewhere. Stands in for pixel gradients when no map is supplied.
pub fn fallback_saliency(image_id: &str, assignment: &PatternAssignment, frame: &ImageFrame) -> SaliencyMap {
    let (w, h) = (frame.width_px as usize, frame.height_px as usize);
    let mut values = vec![0.0f32; w * h];
    let r = &assignment.unit_region;
    let (cols, rows) = (r.pixel_cols(w), r.pixel_rows(h));
    let n = cols.len() * rows.len();
    if n > 0 {
        let v = 1.0 / n as f32;
        for y in rows {
            values[y * w + cols.start..y * w + cols.end].fill(v);
        }
    }
    SaliencyMap {
        image_id: image_id.to_string(),
        pattern_id: assignment.pattern_id.clone(),
        width: w,
        height: h,
        values,
    }
}

/// Saliency mass inside the union of `rects` and outside it.
pub fn mass_split(map: &SaliencyMap, rects: &[Rect]) -> (f64, f64) {
    let mut inside_mask = vec![false; map.width * map.height];
    for r in rects {
        let cols = r.pixel_cols(map.width);
        for y in r.pixel_rows(map.height) {
            inside_mask[y * map.width + cols.start..y * map.width + cols.end].fill(true);
        }
    }
    let (mut inside, mut outside) = (0.0f64, 0.0f64);
    for (&v, &m) in map.values.iter().zip(&inside_mask) {
        if m {
            inside += v as f64;
        } else {
            outside += v as f64;
        }
    }
    (inside, outside)
}

/// Source of supplied saliency maps. `Ok(None)` selects the fallback.
pub trait SaliencyProvider {
    fn saliency(&self, image_id: &str, pattern_id: &str) -> Result<Option<SaliencyMap>>;
}

/// Always falls back to receptive-field mass.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSaliency;

impl SaliencyProvider for NoSaliency {
    fn saliency(&self, _: &str, _: &str) -> Result<Option<SaliencyMap>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Default)]
pub struct InMemorySaliency(pub BTreeMap<(String, String), SaliencyMap>);

impl InMemorySaliency {
    pub fn insert(&mut self, map: SaliencyMap) {
        self.0
            .insert((map.image_id.clone(), map.pattern_id.clone()), map);
    }
}

impl SaliencyProvider for InMemorySaliency {
    fn saliency(&self, image_id: &str, pattern_id: &str) -> Result<Option<SaliencyMap>> {
        Ok(self
            .0
            .get(&(image_id.to_string(), pattern_id.to_string()))
            .cloned())
    }
}

/// Maps listed in a manifest's `saliency_paths`.
impl SaliencyProvider for DatasetManifest {
    fn saliency(&self, image_id: &str, pattern_id: &str) -> Result<Option<SaliencyMap>> {
        self.saliency_path(image_id, pattern_id)
            .map(|p| SaliencyMap::load(p, image_id, pattern_id))
            .transpose()
    }
}
