use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageFrame, Rect};

use super::features::{normalize, ChannelMaxima, FeatureMapSet};
use super::fmap::load_feature_set;
use super::layer::LayerSet;

/// Which side of the train/test split a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// Annotated images used for mining.
    #[default]
    Train,
    /// Held-out images whose annotations are only used as ground truth.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartAnnotation {
    pub template_id: String,
    pub part_box: Rect,
}

/// One (cropped) object image. After cropping, `object_box` is the full image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub object_box: Rect,
    #[serde(default)]
    pub part_annotations: Vec<PartAnnotation>,
    #[serde(default)]
    pub split: Split,
}

impl ImageRecord {
    pub fn frame(&self) -> ImageFrame {
        ImageFrame {
            width_px: self.width_px,
            height_px: self.height_px,
            object_box: self.object_box,
        }
    }

    /// Center of the first annotated part box, used as ground truth.
    pub fn gt_part_center(&self) -> Option<crate::geometry::Point> {
        self.part_annotations.first().map(|a| a.part_box.center())
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::invalid(format!("{field}.width_px"), "image must be nonempty"));
        }
        let bounds = Rect::new(0.0, 0.0, self.width_px as f64, self.height_px as f64);
        let ob = &self.object_box;
        if !ob.is_finite() || ob.w <= 0.0 || ob.h <= 0.0 || !bounds.contains_rect(ob) {
            return Err(Error::invalid(
                format!("{field}.object_box"),
                "must be a positive box within the image bounds",
            ));
        }
        for (i, a) in self.part_annotations.iter().enumerate() {
            let pb = &a.part_box;
            if !pb.is_finite() || pb.w <= 0.0 || pb.h <= 0.0 || !ob.contains_rect(pb) {
                return Err(Error::invalid(
                    format!("{field}.part_annotations[{i}].part_box"),
                    "must be a positive box within the object box",
                ));
            }
        }
        Ok(())
    }
}

/// Ordered partition of layer ids into low / mid / high groups.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerGroups {
    #[serde(default)]
    pub low: Vec<String>,
    #[serde(default)]
    pub mid: Vec<String>,
    #[serde(default)]
    pub high: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    /// Detail layers; annotations here mark regions outside the part box.
    #[serde(alias = "outside_part_box")]
    Low,
    Mid,
    /// Context layers; annotations here mark background.
    #[serde(alias = "background")]
    High,
}

impl GroupKind {
    pub const ALL: [GroupKind; 3] = [GroupKind::Low, GroupKind::Mid, GroupKind::High];

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupKind::Low => "low",
            GroupKind::Mid => "mid",
            GroupKind::High => "high",
        }
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "outside_part_box" => Ok(GroupKind::Low),
            "mid" => Ok(GroupKind::Mid),
            "high" | "background" => Ok(GroupKind::High),
            _ => Err(Error::invalid("group", format!("unknown layer group `{s}`"))),
        }
    }
}

impl LayerGroups {
    pub fn members(&self, kind: GroupKind) -> &[String] {
        match kind {
            GroupKind::Low => &self.low,
            GroupKind::Mid => &self.mid,
            GroupKind::High => &self.high,
        }
    }

    pub fn group_of(&self, layer_id: &str) -> Option<GroupKind> {
        GroupKind::ALL
            .into_iter()
            .find(|k| self.members(*k).iter().any(|l| l == layer_id))
    }

    fn validate(&self, layers: &LayerSet) -> Result<()> {
        let mut seen = BTreeSet::new();
        for kind in GroupKind::ALL {
            for (i, id) in self.members(kind).iter().enumerate() {
                let field = format!("layer_groups.{}[{i}]", kind.as_str());
                if layers.get(id).is_err() {
                    return Err(Error::invalid(field, format!("unknown layer `{id}`")));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::invalid(field, format!("layer `{id}` listed twice")));
                }
            }
        }
        if let Some(g) = layers.iter().find(|g| !seen.contains(g.layer_id.as_str())) {
            return Err(Error::invalid(
                "layer_groups",
                format!("layer `{}` is not assigned to a group", g.layer_id),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyEntry {
    pub image_id: String,
    pub pattern_id: String,
    pub path: PathBuf,
}

fn default_true() -> bool {
    true
}

/// Dataset description. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub category: String,
    pub layer_geometries: LayerSet,
    pub layer_groups: LayerGroups,
    pub records: Vec<ImageRecord>,
    pub feature_paths: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub saliency_paths: Vec<SaliencyEntry>,
    /// Per-channel max normalization at ingestion.
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_geometries.validate()?;
        self.layer_groups.validate(&self.layer_geometries)?;
        let mut ids = BTreeSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let field = format!("records[{i}]");
            r.validate(&field)?;
            if !ids.insert(r.image_id.as_str()) {
                return Err(Error::invalid(
                    format!("{field}.image_id"),
                    format!("duplicate image id `{}`", r.image_id),
                ));
            }
            if !self.feature_paths.contains_key(&r.image_id) {
                return Err(Error::invalid(
                    format!("feature_paths.{}", r.image_id),
                    "record has no feature path",
                ));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn record(&self, image_id: &str) -> Result<&ImageRecord> {
        self.records
            .iter()
            .find(|r| r.image_id == image_id)
            .ok_or_else(|| Error::MissingFeatures(image_id.to_string()))
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn saliency_path(&self, image_id: &str, pattern_id: &str) -> Option<PathBuf> {
        self.saliency_paths
            .iter()
            .find(|e| e.image_id == image_id && e.pattern_id == pattern_id)
            .map(|e| self.resolve(&e.path))
    }
}

/// A manifest together with every image's (optionally normalized) features.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub features: BTreeMap<String, FeatureMapSet>,
}

impl Dataset {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let mut features = BTreeMap::new();
        for r in &manifest.records {
            let p = manifest.resolve(&manifest.feature_paths[&r.image_id]);
            let mut fm = load_feature_set(&p, &manifest.layer_geometries)?;
            fm.image_id = r.image_id.clone();
            features.insert(r.image_id.clone(), fm);
        }
        Ok(Self::from_parts(manifest, features))
    }

    /// Assemble from in-memory features, applying dataset-wide normalization
    /// when the manifest enables it.
    pub fn from_parts(manifest: DatasetManifest, mut features: BTreeMap<String, FeatureMapSet>) -> Self {
        if manifest.normalize {
            let maxima = ChannelMaxima::compute(features.values());
            for fm in features.values_mut() {
                normalize(fm, &maxima);
            }
        }
        Self { manifest, features }
    }

    pub fn layers(&self) -> &LayerSet {
        &self.manifest.layer_geometries
    }

    pub fn features(&self, image_id: &str) -> Result<&FeatureMapSet> {
        self.features
            .get(image_id)
            .ok_or_else(|| Error::MissingFeatures(image_id.to_string()))
    }
}
