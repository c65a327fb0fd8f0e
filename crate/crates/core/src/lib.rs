//! And-Or graph part localization over pre-computed CNN feature maps.
//!
//! A semantic part is modelled as a four-level And-Or graph (part, templates,
//! latent patterns, CNN units). The crate mines such a graph from a handful of
//! part annotations, parses new images with a deformable-part scoring rule,
//! lets a person prune patterns that fire on irrelevant regions, and measures
//! localization with the normalized center distance.
//!
//! Modules:
//! - [`tensor_store`]: FMAP feature containers, manifests, receptive fields.
//! - [`aog`]: graph types, JSON persistence, soft pruning.
//! - [`miner`]: builds a graph from annotated images.
//! - [`parser`]: part parsing and its brute-force oracle.
//! - [`interaction`]: pruning proposals, sessions with undo.
//! - [`viz`]: receptive-field heatmaps and overlays.
//! - [`eval`]: metric, batch reports, synthetic planted datasets.

pub mod aog;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod interaction;
pub mod miner;
pub mod parser;
pub mod tensor_store;
pub mod testkit;
pub mod viz;

pub use error::{Error, Result};
