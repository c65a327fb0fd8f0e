use super::*;
use crate::aog::{BoxSize, PartTemplate};
use crate::geometry::Offset;
use crate::parser::parse;
use crate::tensor_store::{LayerGeometry, LayerTensor};
use crate::testkit::{random_instance, InstanceLimits};
use proptest::prelude::*;

fn setup(window: u32) -> (LayerSet, FeatureMapSet, SemanticPartAOG, ImageFrame) {
    let layers = LayerSet::new(vec![
        LayerGeometry::new("lo", 8, 8, 1, 4, 8, 2.0).with_viz_window(window),
    ])
    .unwrap();
    let mut t = LayerTensor::zeros(8, 8, 1);
    t.set(3, 4, 0, 0.5);
    let fm = FeatureMapSet::new("img").with_layer("lo", t);
    let aog = SemanticPartAOG::new(
        "head",
        vec![PartTemplate {
            template_id: "t".into(),
            patterns: vec![LatentPattern {
                pattern_id: "t/lo/c0".into(),
                layer_id: "lo".into(),
                channel: 0,
                deform_center: Cell::new(3, 4),
                deform_half_extent: 1,
                displacement: Offset::default(),
                active: true,
            }],
            canonical_box: BoxSize { w_px: 8.0, h_px: 8.0 },
        }],
    );
    (layers, fm, aog, ImageFrame::full(32, 32))
}

fn groups() -> LayerGroups {
    LayerGroups {
        low: vec!["lo".into()],
        ..Default::default()
    }
}

#[test]
fn single_spike_lights_exactly_its_receptive_field() {
    let (layers, fm, aog, frame) = setup(0);
    let tree = parse(&fm, &aog, &layers, &frame).unwrap();
    let m = pattern_heatmap(&fm, &aog.templates[0].patterns[0], &tree, &layers, &frame).unwrap();
    // Cell (3, 4): center (14, 18), rf 8 -> pixels x 10..18, y 14..22.
    for y in 0..32 {
        for x in 0..32 {
            let inside = (10..18).contains(&x) && (14..22).contains(&y);
            assert_eq!(m.at(x, y), if inside { 0.5 } else { 0.0 }, "({x}, {y})");
        }
    }
}

#[test]
fn zero_responses_give_zero_heatmap() {
    let (layers, mut fm, aog, frame) = setup(3);
    let tree = parse(&fm, &aog, &layers, &frame).unwrap();
    fm.layers.get_mut("lo").unwrap().data_mut().fill(0.0);
    let m = pattern_heatmap(&fm, &aog.templates[0].patterns[0], &tree, &layers, &frame).unwrap();
    assert!(m.values.iter().all(|&v| v == 0.0));
}

#[test]
fn missing_assignment_is_an_error() {
    let (layers, fm, aog, frame) = setup(0);
    let mut tree = parse(&fm, &aog, &layers, &frame).unwrap();
    tree.pattern_assignments.clear();
    assert!(matches!(
        pattern_heatmap(&fm, &aog.templates[0].patterns[0], &tree, &layers, &frame),
        Err(Error::MissingAssignment(_))
    ));
}

#[test]
fn empty_overlay_is_just_the_part_box() {
    let (layers, fm, aog, frame) = setup(0);
    let tree = parse(&fm, &aog, &layers, &frame).unwrap();
    let o = render_overlay("img", &[], &tree, &frame, &groups(), None).unwrap();
    let img = decode_gray_png(&o.png).unwrap();
    assert_eq!((img.width, img.height), (32, 32));
    let (cols, rows) = (tree.part_region.pixel_cols(32), tree.part_region.pixel_rows(32));
    for y in 0..32 {
        for x in 0..32 {
            let border = (cols.contains(&x) && (y == rows.start || y == rows.end - 1))
                || (rows.contains(&y) && (x == cols.start || x == cols.end - 1));
            assert_eq!(img.pixels[y * 32 + x], if border { 255 } else { 0 });
        }
    }
    assert!(!o.layout.patterns[0].in_overlay);
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let (layers, fm, aog, frame) = setup(0);
    let tree = parse(&fm, &aog, &layers, &frame).unwrap();
    let mut m = pattern_heatmap(&fm, &aog.templates[0].patterns[0], &tree, &layers, &frame).unwrap();
    m.width = 16;
    assert!(matches!(
        render_overlay("img", &[m], &tree, &frame, &groups(), None),
        Err(Error::DimensionMismatch(_))
    ));
    let base = GrayImage {
        width: 2,
        height: 2,
        pixels: vec![0; 4],
    };
    assert!(render_overlay("img", &[], &tree, &frame, &groups(), Some(&base)).is_err());
}

#[test]
fn base_image_is_blended() {
    let (layers, fm, aog, frame) = setup(0);
    let tree = parse(&fm, &aog, &layers, &frame).unwrap();
    let m = pattern_heatmap(&fm, &aog.templates[0].patterns[0], &tree, &layers, &frame).unwrap();
    let base = GrayImage {
        width: 32,
        height: 32,
        pixels: vec![100; 32 * 32],
    };
    let o = render_overlay("img", &[m], &tree, &frame, &groups(), Some(&base)).unwrap();
    let img = decode_gray_png(&o.png).unwrap();
    assert_eq!(img.pixels[0], 40); // 0.4 * 100
    assert_eq!(img.pixels[20 * 32 + 11], (0.4f32 * 100.0 + 0.6 * 127.5).round() as u8);
}

// Independent rasterization: pixel (px, py) is covered by cell (x, y) when its
// center lies in the clipped square of side rf around offset + stride * (x, y).
fn oracle_support(g: &LayerGeometry, frame: &ImageFrame, t: &LayerTensor, c: usize, ax: usize, ay: usize) -> Vec<bool> {
    let (w, h) = (frame.width_px as usize, frame.height_px as usize);
    let win = g.viz_window() as i64;
    let mut out = vec![false; w * h];
    for y in 0..g.grid_h as i64 {
        for x in 0..g.grid_w as i64 {
            if (x - ax as i64).abs() > win || (y - ay as i64).abs() > win {
                continue;
            }
            if t.at(x as usize, y as usize, c) <= 0.0 {
                continue;
            }
            let cx = g.offset_px + g.stride_px as f64 * x as f64;
            let cy = g.offset_px + g.stride_px as f64 * y as f64;
            let half = g.rf_size_px as f64 / 2.0;
            let (x0, x1) = ((cx - half).max(0.0), (cx + half).min(w as f64));
            let (y0, y1) = ((cy - half).max(0.0), (cy + half).min(h as f64));
            for py in 0..h {
                for px in 0..w {
                    let (qx, qy) = (px as f64 + 0.5, py as f64 + 0.5);
                    if qx >= x0 && qx < x1 && qy >= y0 && qy < y1 {
                        out[py * w + px] = true;
                    }
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn support_matches_rasterization_oracle(seed in 0u64..10_000, window in 0u32..3) {
        let mut inst = random_instance(seed, InstanceLimits { max_templates: 2, max_patterns: 3, ..Default::default() });
        let geoms: Vec<_> = inst.layers.iter().map(|g| g.clone().with_viz_window(window)).collect();
        inst.layers = LayerSet::new(geoms).unwrap();
        // Some zero responses so the support is a strict subset.
        for t in inst.fm.layers.values_mut() {
            for v in t.data_mut().iter_mut() {
                if *v < 0.3 {
                    *v = 0.0;
                }
            }
        }
        let tree = parse(&inst.fm, &inst.aog, &inst.layers, &inst.frame).unwrap();
        for a in &tree.pattern_assignments {
            let (_, p) = inst.aog.find_pattern(&a.pattern_id).unwrap();
            let m = pattern_heatmap(&inst.fm, p, &tree, &inst.layers, &inst.frame).unwrap();
            let g = inst.layers.get(&p.layer_id).unwrap();
            let t = inst.fm.layer(&p.layer_id).unwrap();
            let want = oracle_support(g, &inst.frame, t, p.channel, a.unit.x, a.unit.y);
            let got: Vec<bool> = m.values.iter().map(|&v| v > 0.0).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn composite_is_pointwise_max_and_layout_matches_parse(seed in 0u64..10_000) {
        let inst = random_instance(seed, InstanceLimits::default());
        let tree = parse(&inst.fm, &inst.aog, &inst.layers, &inst.frame).unwrap();
        let all = LayerGroups { low: inst.layers.iter().map(|g| g.layer_id.clone()).collect(), ..Default::default() };
        let hl = heatmap_layer(&inst.fm, &inst.aog, &tree, &inst.layers, &all, &inst.frame, GroupKind::Low).unwrap();
        for i in 0..hl.composite.len() {
            let m = hl.heatmaps.iter().map(|h| h.values[i]).fold(0.0f32, f32::max);
            prop_assert_eq!(hl.composite[i], m);
        }
        let o = render_group(&hl, &tree, &inst.frame, &all).unwrap();
        let (_, t) = inst.aog.templates.iter().enumerate().find(|(_, t)| t.template_id == tree.chosen_template_id).unwrap();
        let want: Vec<&str> = t.active_patterns().map(|p| p.pattern_id.as_str()).collect();
        let got: Vec<&str> = o.layout.patterns.iter().map(|p| p.pattern_id.as_str()).collect();
        prop_assert_eq!(got, want);
        prop_assert!(o.layout.patterns.iter().all(|p| p.in_overlay));
        let again = render_group(&hl, &tree, &inst.frame, &all).unwrap();
        prop_assert_eq!(again.layout.to_json().unwrap(), o.layout.to_json().unwrap());
        prop_assert_eq!(&again.png, &o.png);
        let img = decode_gray_png(&o.png).unwrap();
        prop_assert_eq!((img.width as u32, img.height as u32), (inst.frame.width_px, inst.frame.height_px));
    }
}
