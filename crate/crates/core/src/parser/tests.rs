use super::*;
use crate::aog::{prune_pattern, BoxSize, LAMBDA_DEF};
use crate::geometry::Offset;
use crate::testkit::{random_instance, InstanceLimits};

fn layer() -> LayerSet {
    LayerSet::new(vec![LayerGeometry::new("conv", 8, 8, 2, 8, 16, 4.0)]).unwrap()
}

fn frame() -> ImageFrame {
    ImageFrame::full(64, 64)
}

fn fm_with(values: &[(usize, usize, usize, f32)]) -> FeatureMapSet {
    let mut t = LayerTensor::zeros(8, 8, 2);
    for &(x, y, c, v) in values {
        t.set(x, y, c, v);
    }
    FeatureMapSet::new("img").with_layer("conv", t)
}

fn pattern(id: &str, channel: usize, center: (usize, usize), extent: usize, d: (f64, f64)) -> LatentPattern {
    LatentPattern {
        pattern_id: id.into(),
        layer_id: "conv".into(),
        channel,
        deform_center: Cell::new(center.0, center.1),
        deform_half_extent: extent,
        displacement: Offset { dx: d.0, dy: d.1 },
        active: true,
    }
}

fn template(id: &str, patterns: Vec<LatentPattern>) -> PartTemplate {
    PartTemplate {
        template_id: id.into(),
        patterns,
        canonical_box: BoxSize { w_px: 16.0, h_px: 12.0 },
    }
}

fn scorer<'a>(fm: &'a FeatureMapSet, layers: &'a LayerSet) -> Scorer<'a> {
    Scorer::new(fm, layers, ScoreConstants::default())
}

#[test]
fn unit_at_deformation_center_with_perfect_geometry() {
    let layers = layer();
    let fm = fm_with(&[(2, 2, 0, 1.0)]);
    let p = pattern("p", 0, (2, 2), 1, (3.0, -2.0));
    // unit center (20, 20)
    let s = score_unit(&scorer(&fm, &layers), &p, Cell::new(2, 2), Point::new(23.0, 18.0)).unwrap();
    assert_eq!(s.deform_penalty, 0.0);
    assert_eq!(s.geo_penalty, 0.0);
    assert_eq!(s.contribution, 1.0);
}

#[test]
fn one_cell_diagonal_deformation_costs_two_thirds() {
    let layers = layer();
    let fm = fm_with(&[(3, 3, 0, 1.0)]);
    let p = pattern("p", 0, (2, 2), 1, (0.0, 0.0));
    let s = score_unit(&scorer(&fm, &layers), &p, Cell::new(3, 3), Point::new(28.0, 28.0)).unwrap();
    assert_eq!(s.deform_penalty, LAMBDA_DEF * 2.0);
    assert_eq!(s.contribution, 1.0 - LAMBDA_DEF * 2.0);
    assert!((s.contribution - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn one_stride_geometric_residual_costs_five() {
    let layers = layer();
    let fm = fm_with(&[(2, 2, 0, 1.0)]);
    let p = pattern("p", 0, (2, 2), 1, (0.0, 0.0));
    let s = score_unit(&scorer(&fm, &layers), &p, Cell::new(2, 2), Point::new(28.0, 20.0)).unwrap();
    assert_eq!(s.geo_penalty, 5.0);
    assert_eq!(s.contribution, -4.0);
}

#[test]
fn unit_outside_range_is_rejected() {
    let layers = layer();
    let fm = fm_with(&[]);
    let p = pattern("p", 0, (2, 2), 1, (0.0, 0.0));
    let err = score_unit(&scorer(&fm, &layers), &p, Cell::new(4, 2), Point::new(0.0, 0.0));
    assert!(matches!(err, Err(Error::OutsideDeformationRange { .. })));
}

#[test]
fn flat_map_picks_the_deformation_center() {
    let layers = layer();
    let mut t = LayerTensor::zeros(8, 8, 2);
    t.data_mut().iter_mut().for_each(|v| *v = 0.5);
    let fm = FeatureMapSet::new("img").with_layer("conv", t);
    let p = pattern("p", 0, (4, 3), 2, (2.0, 1.0));
    let c = score_pattern(&scorer(&fm, &layers), &p, Point::new(38.0, 29.0)).unwrap();
    assert_eq!(c.cell, Cell::new(4, 3));
}

#[test]
fn equal_contributions_break_toward_smaller_row() {
    let layers = layer();
    // (y, x) = (1, 2) and (2, 1) tie; every unit in the range has the same
    // geometric residual at the midpoint center.
    let fm = fm_with(&[(2, 1, 0, 1.0), (1, 2, 0, 1.0)]);
    let p = pattern("p", 0, (1, 1), 1, (0.0, 0.0));
    let sc = scorer(&fm, &layers);
    let center = Point::new(16.0, 16.0);
    let a = score_unit(&sc, &p, Cell::new(2, 1), center).unwrap();
    let b = score_unit(&sc, &p, Cell::new(1, 2), center).unwrap();
    assert_eq!(a.contribution, b.contribution);
    let c = score_pattern(&sc, &p, center).unwrap();
    assert_eq!(c.cell, Cell::new(2, 1));
}

#[test]
fn template_sums_active_patterns() {
    let layers = layer();
    let fm = fm_with(&[(2, 2, 0, 0.5), (5, 5, 1, 0.25)]);
    let center = Point::new(30.0, 30.0);
    let t = template(
        "t",
        vec![
            pattern("a", 0, (2, 2), 0, (10.0, 10.0)),
            pattern("b", 1, (5, 5), 0, (-14.0, -14.0)),
        ],
    );
    let sc = scorer(&fm, &layers);
    let ts = score_template(&sc, &t, center, &frame()).unwrap();
    assert_eq!(ts.score, 0.75);
    assert_eq!(ts.assignments.len(), 2);
    assert_eq!(ts.part_region, Rect::new(22.0, 24.0, 16.0, 12.0));

    let mut pruned = t.clone();
    pruned.patterns[0].active = false;
    pruned.patterns[1].active = false;
    let empty = score_template(&sc, &pruned, center, &frame()).unwrap();
    assert_eq!(empty.score, 0.0);
    assert!(empty.assignments.is_empty());
}

#[test]
fn pruning_subtracts_exactly_that_contribution() {
    let layers = layer();
    let fm = fm_with(&[(2, 2, 0, 0.4), (5, 5, 1, 0.3), (3, 4, 0, 0.9)]);
    let center = Point::new(30.0, 30.0);
    let t = template(
        "t",
        vec![
            pattern("a", 0, (2, 2), 1, (9.0, 11.0)),
            pattern("b", 1, (5, 5), 1, (-13.0, -14.5)),
            pattern("c", 0, (3, 4), 1, (1.0, -5.0)),
        ],
    );
    let sc = scorer(&fm, &layers);
    let full = score_template(&sc, &t, center, &frame()).unwrap();
    for (i, p) in t.patterns.iter().enumerate() {
        let mut pruned = t.clone();
        pruned.patterns[i].active = false;
        let after = score_template(&sc, &pruned, center, &frame()).unwrap();
        let contrib = full.assignments.iter().find(|a| a.pattern_id == p.pattern_id).unwrap().contribution;
        assert!((full.score - contrib - after.score).abs() <= 1e-12);
    }
}

#[test]
fn parse_prefers_the_higher_scoring_template() {
    let layers = layer();
    let fm = fm_with(&[(2, 2, 0, 0.75), (5, 5, 1, 0.25)]);
    let aog = SemanticPartAOG::new(
        "head",
        vec![
            template("B", vec![pattern("b", 1, (5, 5), 0, (0.0, 0.0))]),
            template("A", vec![pattern("a", 0, (2, 2), 0, (0.0, 0.0))]),
        ],
    );
    let tree = parse(&fm, &aog, &layers, &frame()).unwrap();
    assert_eq!(tree.chosen_template_id, "A");
    assert_eq!(tree.total_score, 0.75);
    assert_eq!(tree.part_center, Point::new(20.0, 20.0));
}

#[test]
fn single_spike_localizes_at_spike_plus_displacement() {
    let layers = LayerSet::new(vec![LayerGeometry::new("conv", 8, 8, 1, 4, 8, 2.0)]).unwrap();
    let mut t = LayerTensor::zeros(8, 8, 1);
    t.set(5, 3, 0, 1.0);
    let fm = FeatureMapSet::new("img").with_layer("conv", t);
    let aog = SemanticPartAOG::new("head", vec![template("t", vec![pattern("p", 0, (5, 3), 2, (5.0, -3.0))])]);
    let tree = parse(&fm, &aog, &layers, &ImageFrame::full(32, 32)).unwrap();
    // spike at (22, 14); + displacement = (27, 11); nearest lattice point (26, 10)
    assert_eq!(tree.part_center, Point::new(26.0, 10.0));
    let a = &tree.pattern_assignments[0];
    assert_eq!((a.unit.x, a.unit.y), (5, 3));
    assert_eq!(tree.total_score, 1.0 - 0.625);
}

#[test]
fn fully_pruned_aog_is_an_error() {
    let layers = layer();
    let fm = fm_with(&[]);
    let aog = SemanticPartAOG::new("head", vec![template("t", vec![pattern("p", 0, (2, 2), 1, (0.0, 0.0))])]);
    let pruned = prune_pattern(&aog, "p").unwrap();
    assert!(matches!(parse(&fm, &pruned, &layers, &frame()), Err(Error::EmptyAog)));
    assert!(matches!(
        brute_force_parse(&fm, &pruned, &layers, &frame(), DEFAULT_ENUMERATION_CAP),
        Err(Error::EmptyAog)
    ));
}

#[test]
fn brute_force_respects_its_cap() {
    let inst = random_instance(3, InstanceLimits::default());
    let size = enumeration_size(&inst.aog, &inst.layers, &inst.frame).unwrap();
    assert!(matches!(
        brute_force_parse(&inst.fm, &inst.aog, &inst.layers, &inst.frame, size - 1),
        Err(Error::EnumerationCap { .. })
    ));
    assert!(brute_force_parse(&inst.fm, &inst.aog, &inst.layers, &inst.frame, size).is_ok());
}

#[test]
fn parse_matches_brute_force_on_random_instances() {
    for seed in 0..40 {
        let inst = random_instance(seed, InstanceLimits::default());
        let fast = parse(&inst.fm, &inst.aog, &inst.layers, &inst.frame).unwrap();
        let slow = brute_force_parse(&inst.fm, &inst.aog, &inst.layers, &inst.frame, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(fast, slow, "seed {seed}");
        assert!(fast.decomposition_error() <= 1e-9);
    }
}

#[test]
fn score_pattern_matches_exhaustive_scan() {
    for seed in 100..160 {
        let inst = random_instance(seed, InstanceLimits::default());
        let sc = Scorer::new(&inst.fm, &inst.layers, inst.aog.constants);
        for p in inst.aog.patterns() {
            let g = inst.layers.get(&p.layer_id).unwrap();
            for center in SearchGrid::new(&inst.layers, &inst.frame).points() {
                let mut best: Option<(Cell, f64)> = None;
                for y in 0..g.grid_h {
                    for x in 0..g.grid_w {
                        let cell = Cell::new(x, y);
                        if let Ok(s) = score_unit(&sc, p, cell, center) {
                            if best.is_none_or(|(_, b)| s.contribution > b) {
                                best = Some((cell, s.contribution));
                            }
                        }
                    }
                }
                let got = score_pattern(&sc, p, center).unwrap();
                assert_eq!((got.cell, got.score.contribution), best.unwrap(), "seed {seed}");
            }
        }
    }
}
