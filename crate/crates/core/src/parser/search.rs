use crate::geometry::{ImageFrame, Point};
use crate::tensor_store::LayerSet;

/// Candidate part centers: the finest layer's cell-center lattice restricted
/// to the object box, in `(y, x)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl SearchGrid {
    pub fn new(layers: &LayerSet, frame: &ImageFrame) -> Self {
        let g = layers.finest();
        Self::with_lattice(g.offset_px, g.stride_px as f64, frame)
    }

    pub fn with_lattice(offset: f64, step: f64, frame: &ImageFrame) -> Self {
        let b = frame.object_box;
        let axis = |lo: f64, hi: f64| {
            let k0 = ((lo - offset) / step).ceil() as i64;
            let mut out: Vec<f64> = (k0..)
                .map(|k| offset + k as f64 * step)
                .take_while(|&v| v <= hi)
                .collect();
            // A box narrower than one step still gets a candidate.
            if out.is_empty() {
                out.push((lo + hi) / 2.0);
            }
            out
        };
        Self {
            xs: axis(b.x, b.right()),
            ys: axis(b.y, b.bottom()),
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.ys
            .iter()
            .flat_map(move |&y| self.xs.iter().map(move |&x| Point::new(x, y)))
    }

    pub fn point(&self, i: usize) -> Point {
        Point::new(self.xs[i % self.xs.len()], self.ys[i / self.xs.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    #[test]
    fn lattice_covers_box_inclusive() {
        let frame = ImageFrame::full(16, 8);
        let g = SearchGrid::with_lattice(2.0, 4.0, &frame);
        assert_eq!(g.xs, vec![2.0, 6.0, 10.0, 14.0]);
        assert_eq!(g.ys, vec![2.0, 6.0]);
        assert_eq!(g.point(5), Point::new(6.0, 6.0));
    }

    #[test]
    fn tiny_box_still_has_a_candidate() {
        let frame = ImageFrame {
            width_px: 32,
            height_px: 32,
            object_box: Rect::new(3.0, 3.0, 0.5, 0.5),
        };
        let g = SearchGrid::with_lattice(0.0, 8.0, &frame);
        assert_eq!(g.len(), 1);
        assert_eq!(g.point(0), Point::new(3.25, 3.25));
    }
}
