//! Feature tensors, dataset manifests and receptive-field geometry.

mod features;
pub mod fmap;
mod layer;
mod manifest;

pub use features::{normalize, unit_response, ChannelMaxima, FeatureMapSet, LayerTensor};
pub use fmap::{load_feature_set, load_feature_set_normalized, write_feature_set};
pub use layer::{receptive_field, LayerGeometry, LayerSet, ReceptiveField};
pub(crate) use layer::unit_field;
pub use manifest::{
    Dataset, DatasetManifest, GroupKind, ImageRecord, LayerGroups, PartAnnotation, SaliencyEntry,
    Split,
};
