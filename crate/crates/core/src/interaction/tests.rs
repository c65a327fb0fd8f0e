use std::path::PathBuf;

use super::*;
use crate::aog::{BoxSize, LatentPattern, PartTemplate};
use crate::geometry::{Cell, Offset};
use crate::tensor_store::{
    DatasetManifest, FeatureMapSet, ImageRecord, LayerGeometry, LayerGroups, LayerSet, LayerTensor, Split,
};

// 32x32 image. "lo": 8x8 stride 4 (centers 2, 6, ..., 30), "hi": 4x4 stride 8.
fn fixture() -> (Dataset, SemanticPartAOG) {
    let layers = LayerSet::new(vec![
        LayerGeometry::new("lo", 8, 8, 2, 4, 8, 2.0),
        LayerGeometry::new("hi", 4, 4, 1, 8, 16, 4.0),
    ])
    .unwrap();
    let records: Vec<ImageRecord> = ["a", "b"]
        .iter()
        .map(|id| ImageRecord {
            image_id: id.to_string(),
            width_px: 32,
            height_px: 32,
            object_box: Rect::new(0.0, 0.0, 32.0, 32.0),
            part_annotations: vec![],
            split: Split::Test,
        })
        .collect();
    let manifest = DatasetManifest {
        category: "cat".into(),
        layer_geometries: layers,
        layer_groups: LayerGroups {
            low: vec!["lo".into()],
            mid: vec![],
            high: vec!["hi".into()],
        },
        feature_paths: records
            .iter()
            .map(|r| (r.image_id.clone(), PathBuf::from(format!("{}.fmap", r.image_id))))
            .collect(),
        records,
        saliency_paths: vec![],
        normalize: false,
        base_dir: PathBuf::new(),
    };
    let mut features = BTreeMap::new();
    for id in ["a", "b"] {
        let mut lo = LayerTensor::zeros(8, 8, 2);
        lo.set(2, 2, 0, 1.0);
        lo.set(6, 6, 1, 1.0);
        let mut hi = LayerTensor::zeros(4, 4, 1);
        hi.set(1, 1, 0, 1.0);
        features.insert(
            id.to_string(),
            FeatureMapSet::new(id).with_layer("lo", lo).with_layer("hi", hi),
        );
    }
    let pattern = |id: &str, layer: &str, channel, cell: (usize, usize), d: f64| LatentPattern {
        pattern_id: id.into(),
        layer_id: layer.into(),
        channel,
        deform_center: Cell::new(cell.0, cell.1),
        deform_half_extent: 1,
        displacement: Offset { dx: d, dy: d },
        active: true,
    };
    let aog = SemanticPartAOG::new(
        "head",
        vec![PartTemplate {
            template_id: "t".into(),
            patterns: vec![
                pattern("t/lo/c0", "lo", 0, (2, 2), 0.0),
                pattern("t/lo/c1", "lo", 1, (6, 6), -16.0),
                pattern("t/hi/c0", "hi", 0, (1, 1), -2.0),
            ],
            canonical_box: BoxSize { w_px: 16.0, h_px: 16.0 },
        }],
    );
    (Dataset::from_parts(manifest, features), aog)
}

fn corner(scope: GroupKind) -> AnnotatedRegionSet {
    AnnotatedRegionSet {
        image_id: "a".into(),
        rectangles: vec![Rect::new(16.0, 16.0, 16.0, 16.0)],
        layer_group_scope: scope,
    }
}

fn ids(v: &[PruneEvidence]) -> Vec<&str> {
    v.iter().filter(|e| e.proposed).map(|e| e.pattern_id.as_str()).collect()
}

#[test]
fn proposes_only_patterns_of_the_scoped_group_inside_the_regions() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog).unwrap();
    s.parse_image(&data, "a").unwrap();
    let ev = s.propose_prunes(&data, &corner(GroupKind::Low), &NoSaliency).unwrap();
    assert_eq!(ev.len(), 2, "high-group pattern is out of scope");
    assert_eq!(ids(&ev), ["t/lo/c1"]);
    let d = ev.iter().find(|e| e.pattern_id == "t/lo/c1").unwrap();
    assert_eq!(d.saliency, SaliencySource::Fallback);
    assert!(d.center_inside);
    assert!((d.inside_mass - 1.0).abs() < 1e-6 && d.outside_mass == 0.0);

    let high = s.propose_prunes(&data, &corner(GroupKind::High), &NoSaliency).unwrap();
    assert_eq!(high.len(), 1);
    assert!(!high[0].proposed);
}

#[test]
fn supplied_saliency_overrides_the_fallback() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog).unwrap();
    s.parse_image(&data, "a").unwrap();
    // All mass in the top-left corner: outside the annotated region.
    let mut values = vec![0.0f32; 32 * 32];
    values[0] = 1.0;
    let mut sal = InMemorySaliency::default();
    sal.insert(SaliencyMap::new("a", "t/lo/c1", 32, 32, values).unwrap());
    let ev = s.propose_prunes(&data, &corner(GroupKind::Low), &sal).unwrap();
    let d = ev.iter().find(|e| e.pattern_id == "t/lo/c1").unwrap();
    assert_eq!(d.saliency, SaliencySource::Supplied);
    assert!(d.center_inside && !d.proposed);

    let mut wrong = InMemorySaliency::default();
    wrong.insert(SaliencyMap::new("a", "t/lo/c1", 16, 16, vec![0.0; 256]).unwrap());
    assert!(matches!(
        s.propose_prunes(&data, &corner(GroupKind::Low), &wrong),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn invalid_annotations_are_rejected() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog).unwrap();
    let mut r = corner(GroupKind::Low);
    assert!(matches!(s.propose_prunes(&data, &r, &NoSaliency), Err(Error::NoParse(_))));
    s.parse_image(&data, "a").unwrap();
    r.rectangles.clear();
    assert!(matches!(
        s.propose_prunes(&data, &r, &NoSaliency),
        Err(Error::Invalid { ref field, .. }) if field == "rectangles"
    ));
    r.rectangles = vec![Rect::new(20.0, 20.0, 20.0, 4.0)];
    assert!(matches!(
        s.propose_prunes(&data, &r, &NoSaliency),
        Err(Error::Invalid { ref field, .. }) if field == "rectangles[0]"
    ));
}

#[test]
fn prune_then_undo_restores_aog_and_parses() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog.clone()).unwrap();
    s.parse_image(&data, "a").unwrap();
    s.parse_image(&data, "b").unwrap();
    let before = s.parses.clone();
    s.apply_prunes(&data, &["t/lo/c1".into(), "t/hi/c0".into()], Some(&corner(GroupKind::Low)))
        .unwrap();
    assert_eq!(s.current_aog().active_pattern_count(), 1);
    assert_eq!(s.ops.iter().map(|o| o.seq).collect::<Vec<_>>(), [0, 1]);
    assert_eq!(s.parses["a"].pattern_assignments.len(), 1);
    s.undo(&data, 1).unwrap();
    assert_eq!(s.current_aog().active_pattern_count(), 2);
    s.undo(&data, 1).unwrap();
    assert_eq!(s.current_aog(), &aog);
    assert_eq!(s.parses, before);
    assert!(matches!(
        s.undo(&data, 1),
        Err(Error::UndoUnderflow { requested: 1, available: 0 })
    ));
    // Sequence numbers keep increasing after undo.
    s.apply_prunes(&data, &["t/lo/c1".into()], None).unwrap();
    assert_eq!(s.ops[0].seq, 2);
}

#[test]
fn bad_prune_requests_leave_state_untouched() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog).unwrap();
    let snapshot = s.clone();
    assert!(matches!(
        s.apply_prunes(&data, &["nope".into()], None),
        Err(Error::UnknownPattern(_))
    ));
    assert!(s.apply_prunes(&data, &["t/lo/c1".into(), "t/lo/c1".into()], None).is_err());
    assert_eq!(s, snapshot);
    s.apply_prunes(&data, &["t/lo/c1".into()], None).unwrap();
    assert!(matches!(
        s.apply_prunes(&data, &["t/lo/c1".into()], None),
        Err(Error::AlreadyPruned(_))
    ));
}

#[test]
fn pruning_everything_drops_parses() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog).unwrap();
    s.parse_image(&data, "a").unwrap();
    let all: Vec<String> = s.current_aog().patterns().map(|p| p.pattern_id.clone()).collect();
    s.apply_prunes(&data, &all, None).unwrap();
    assert!(s.parses.is_empty());
    assert!(matches!(s.parse_image(&data, "a"), Err(Error::EmptyAog)));
    s.undo(&data, 1).unwrap();
    assert!(s.parse_image(&data, "a").is_ok());
}

#[test]
fn session_json_resumes_identically() {
    let (data, aog) = fixture();
    let mut s = InteractionSession::new("s", aog).unwrap();
    s.parse_image(&data, "a").unwrap();
    s.apply_prunes(&data, &["t/lo/c1".into()], Some(&corner(GroupKind::Low))).unwrap();
    let back = InteractionSession::from_json(&s.to_json().unwrap()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.current_aog(), s.current_aog());

    let (mut x, mut y) = (s, back);
    x.apply_prunes(&data, &["t/hi/c0".into()], None).unwrap();
    y.apply_prunes(&data, &["t/hi/c0".into()], None).unwrap();
    assert_eq!(x, y);
}
