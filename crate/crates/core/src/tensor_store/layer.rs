use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, ImageFrame, Point, Rect};

/// Grid geometry of one conv-layer (or merged conv-slice group) and its
/// mapping to the image plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub layer_id: String,
    pub grid_h: usize,
    pub grid_w: usize,
    pub channels: usize,
    /// Pixels between adjacent cell centers.
    pub stride_px: u32,
    /// Receptive-field side in pixels.
    pub rf_size_px: u32,
    /// Pixel position of the center of cell (0, 0) on both axes.
    pub offset_px: f64,
    /// Half-window (in cells) used when masking activations for visualization.
    /// Absent means the default: 3 for grids of side >= 56, 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viz_window: Option<u32>,
}

/// Image-plane footprint of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceptiveField {
    /// Pre-clip center, the unit's image-plane position.
    pub center: Point,
    /// Receptive-field box clipped to the image.
    pub region: Rect,
}

impl LayerGeometry {
    pub fn new(
        layer_id: impl Into<String>,
        grid_h: usize,
        grid_w: usize,
        channels: usize,
        stride_px: u32,
        rf_size_px: u32,
        offset_px: f64,
    ) -> Self {
        Self {
            layer_id: layer_id.into(),
            grid_h,
            grid_w,
            channels,
            stride_px,
            rf_size_px,
            offset_px,
            viz_window: None,
        }
    }

    pub fn with_viz_window(mut self, w: u32) -> Self {
        self.viz_window = Some(w);
        self
    }

    pub fn viz_window(&self) -> u32 {
        self.viz_window
            .unwrap_or(if self.grid_side() >= 56 { 3 } else { 1 })
    }

    /// The shorter grid side.
    pub fn grid_side(&self) -> usize {
        self.grid_h.min(self.grid_w)
    }

    /// Default half extent of a deformation range: the range side is
    /// `round(grid_side / 3)`, so the half extent is half of that, floored.
    pub fn default_half_extent(&self) -> usize {
        let side = (self.grid_side() as f64 / 3.0).round() as usize;
        side / 2
    }

    pub fn len(&self) -> usize {
        self.grid_h * self.grid_w * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.grid_w && cell.y < self.grid_h
    }

    /// Image-plane position of a cell center, before any clipping.
    pub fn cell_center(&self, cell: Cell) -> Point {
        let s = self.stride_px as f64;
        Point::new(
            self.offset_px + cell.x as f64 * s,
            self.offset_px + cell.y as f64 * s,
        )
    }

    /// Nearest cell to an image-plane position (may fall outside the grid).
    pub fn nearest_cell_coords(&self, p: Point) -> (f64, f64) {
        let s = self.stride_px as f64;
        (
            ((p.x - self.offset_px) / s).round(),
            ((p.y - self.offset_px) / s).round(),
        )
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.layer_id.is_empty() {
            return Err(Error::invalid(format!("{field}.layer_id"), "must be nonempty"));
        }
        for (name, v) in [
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("channels", self.channels),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{field}.{name}"), "must be >= 1"));
            }
        }
        if self.stride_px == 0 {
            return Err(Error::invalid(format!("{field}.stride_px"), "must be >= 1"));
        }
        if self.rf_size_px < self.stride_px {
            return Err(Error::invalid(
                format!("{field}.rf_size_px"),
                "must be >= stride_px",
            ));
        }
        if !self.offset_px.is_finite() {
            return Err(Error::invalid(format!("{field}.offset_px"), "must be finite"));
        }
        Ok(())
    }
}

/// Receptive field of cell `(x, y)`: a square of side `rf_size_px` centered on
/// the cell's image-plane position, clipped to the image.
pub fn receptive_field(
    g: &LayerGeometry,
    x: usize,
    y: usize,
    frame: &ImageFrame,
) -> Result<ReceptiveField> {
    if x >= g.grid_w || y >= g.grid_h {
        return Err(Error::OutOfRange(format!(
            "cell ({x}, {y}) outside {}x{} grid of layer `{}`",
            g.grid_w, g.grid_h, g.layer_id
        )));
    }
    Ok(unit_field(g, Cell::new(x, y), frame))
}

// Infallible variant for callers that already hold an in-grid cell.
pub(crate) fn unit_field(g: &LayerGeometry, cell: Cell, frame: &ImageFrame) -> ReceptiveField {
    let center = g.cell_center(cell);
    let side = g.rf_size_px as f64;
    ReceptiveField {
        center,
        region: frame.clip(&Rect::centered(center, side, side)),
    }
}

/// Ordered set of layer geometries with lookup by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerSet(Vec<LayerGeometry>);

impl LayerSet {
    pub fn new(layers: Vec<LayerGeometry>) -> Result<Self> {
        let set = Self(layers);
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::invalid("layer_geometries", "at least one layer required"));
        }
        for (i, g) in self.0.iter().enumerate() {
            g.validate(&format!("layer_geometries[{i}]"))?;
            if self.0[..i].iter().any(|o| o.layer_id == g.layer_id) {
                return Err(Error::invalid(
                    format!("layer_geometries[{i}].layer_id"),
                    format!("duplicate layer id `{}`", g.layer_id),
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, layer_id: &str) -> Result<&LayerGeometry> {
        self.0
            .iter()
            .find(|g| g.layer_id == layer_id)
            .ok_or_else(|| Error::UnknownLayer(layer_id.to_string()))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LayerGeometry> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[LayerGeometry] {
        &self.0
    }

    /// Layer with the smallest stride (first one on ties).
    pub fn finest(&self) -> &LayerGeometry {
        self.0
            .iter()
            .fold(None::<&LayerGeometry>, |best, g| match best {
                Some(b) if b.stride_px <= g.stride_px => Some(b),
                _ => Some(g),
            })
            .expect("LayerSet is never empty")
    }
}

impl<'a> IntoIterator for &'a LayerSet {
    type Item = &'a LayerGeometry;
    type IntoIter = std::slice::Iter<'a, LayerGeometry>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
