use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::Cell;

use super::layer::{LayerGeometry, LayerSet};

/// Dense `grid_h x grid_w x channels` activations, row-major with the channel
/// index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensor {
    pub grid_h: usize,
    pub grid_w: usize,
    pub channels: usize,
    data: Vec<f32>,
}

impl LayerTensor {
    pub fn zeros(grid_h: usize, grid_w: usize, channels: usize) -> Self {
        Self {
            grid_h,
            grid_w,
            channels,
            data: vec![0.0; grid_h * grid_w * channels],
        }
    }

    pub fn from_vec(grid_h: usize, grid_w: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid_h * grid_w * channels {
            return Err(Error::ShapeMismatch {
                layer: String::new(),
                detail: format!(
                    "{} values for a {grid_h}x{grid_w}x{channels} tensor",
                    data.len()
                ),
            });
        }
        Ok(Self {
            grid_h,
            grid_w,
            channels,
            data,
        })
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.grid_w + x) * self.channels + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> Option<f32> {
        (x < self.grid_w && y < self.grid_h && c < self.channels)
            .then(|| self.data[self.index(x, y, c)])
    }

    /// Unchecked in release builds; callers pass in-grid coordinates.
    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        debug_assert!(x < self.grid_w && y < self.grid_h && c < self.channels);
        self.data[self.index(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.grid_h, self.grid_w, self.channels)
    }

    /// Argmax of one channel over the cells accepted by `keep`, ties broken by
    /// smallest `(y, x)`.
    pub fn channel_argmax(&self, c: usize, mut keep: impl FnMut(Cell) -> bool) -> Option<(Cell, f32)> {
        let mut best: Option<(Cell, f32)> = None;
        for y in 0..self.grid_h {
            for x in 0..self.grid_w {
                let cell = Cell::new(x, y);
                if !keep(cell) {
                    continue;
                }
                let v = self.at(x, y, c);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((cell, v));
                }
            }
        }
        best
    }

    pub(crate) fn check_against(&self, g: &LayerGeometry) -> Result<()> {
        if self.shape() != (g.grid_h, g.grid_w, g.channels) {
            return Err(Error::ShapeMismatch {
                layer: g.layer_id.clone(),
                detail: format!(
                    "tensor is {}x{}x{} but geometry declares {}x{}x{}",
                    self.grid_h, self.grid_w, self.channels, g.grid_h, g.grid_w, g.channels
                ),
            });
        }
        self.check_finite(&g.layer_id)
    }

    pub(crate) fn check_finite(&self, layer: &str) -> Result<()> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            let c = i % self.channels;
            let cell = i / self.channels;
            return Err(Error::NonFinite {
                layer: layer.to_string(),
                channel: c,
                x: cell % self.grid_w,
                y: cell / self.grid_w,
            });
        }
        Ok(())
    }
}

/// Per-image activations for every layer. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    pub image_id: String,
    pub layers: BTreeMap<String, LayerTensor>,
}

impl FeatureMapSet {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            layers: BTreeMap::new(),
        }
    }

    pub fn with_layer(mut self, layer_id: impl Into<String>, t: LayerTensor) -> Self {
        self.layers.insert(layer_id.into(), t);
        self
    }

    pub fn layer(&self, layer_id: &str) -> Result<&LayerTensor> {
        self.layers
            .get(layer_id)
            .ok_or_else(|| Error::UnknownLayer(layer_id.to_string()))
    }

    /// Every geometry has a tensor of matching shape with finite values.
    pub fn validate(&self, layers: &LayerSet) -> Result<()> {
        for g in layers {
            let t = self.layers.get(&g.layer_id).ok_or_else(|| Error::ShapeMismatch {
                layer: g.layer_id.clone(),
                detail: format!("image `{}` has no tensor for this layer", self.image_id),
            })?;
            t.check_against(g)?;
        }
        Ok(())
    }
}

/// Stored activation of one unit.
pub fn unit_response(
    fm: &FeatureMapSet,
    layer_id: &str,
    channel: usize,
    x: usize,
    y: usize,
) -> Result<f32> {
    let t = fm.layer(layer_id)?;
    t.get(x, y, channel).ok_or_else(|| {
        Error::OutOfRange(format!(
            "unit ({x}, {y}, c{channel}) outside {}x{}x{} layer `{layer_id}`",
            t.grid_w, t.grid_h, t.channels
        ))
    })
}

/// Dataset-wide maximum of every channel, per layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelMaxima(BTreeMap<String, Vec<f32>>);

impl ChannelMaxima {
    pub fn compute<'a>(sets: impl IntoIterator<Item = &'a FeatureMapSet>) -> Self {
        let mut out: BTreeMap<String, Vec<f32>> = BTreeMap::new();
        for fm in sets {
            for (id, t) in &fm.layers {
                let maxima = out
                    .entry(id.clone())
                    .or_insert_with(|| vec![0.0; t.channels]);
                if maxima.len() < t.channels {
                    maxima.resize(t.channels, 0.0);
                }
                for cell in t.data.chunks_exact(t.channels) {
                    for (m, &v) in maxima.iter_mut().zip(cell) {
                        *m = m.max(v);
                    }
                }
            }
        }
        Self(out)
    }

    pub fn get(&self, layer_id: &str) -> Option<&[f32]> {
        self.0.get(layer_id).map(Vec::as_slice)
    }
}

/// Divide each channel by its dataset-wide maximum. Negative activations are
/// clamped to zero first; channels whose maximum is zero stay zero.
pub fn normalize(fm: &mut FeatureMapSet, maxima: &ChannelMaxima) {
    for (id, t) in fm.layers.iter_mut() {
        let Some(m) = maxima.get(id) else { continue };
        let channels = t.channels;
        for cell in t.data.chunks_exact_mut(channels) {
            for (v, &max) in cell.iter_mut().zip(m) {
                *v = if max > 0.0 { v.max(0.0) / max } else { 0.0 };
            }
        }
    }
}
