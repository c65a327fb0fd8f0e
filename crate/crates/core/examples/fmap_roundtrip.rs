//! Write a feature set as an FMAP container and read it back.
//!
//! cargo run --example fmap_roundtrip

use aoglab::tensor_store::{fmap, load_feature_set, write_feature_set, FeatureMapSet, LayerGeometry, LayerSet, LayerTensor};

fn main() -> aoglab::Result<()> {
    let layers = LayerSet::new(vec![
        LayerGeometry::new("conv3", 8, 8, 4, 8, 28, 4.0),
        LayerGeometry::new("conv5", 4, 4, 2, 16, 60, 8.0),
    ])?;
    let mut fm = FeatureMapSet::new("img_0001");
    for g in layers.iter() {
        let data = (0..g.grid_h * g.grid_w * g.channels).map(|i| (i as f32 * 0.37).sin().abs()).collect();
        fm = fm.with_layer(g.layer_id.clone(), LayerTensor::from_vec(g.grid_h, g.grid_w, g.channels, data)?);
    }

    let bytes = fmap::encode(fm.layers.iter().map(|(k, v)| (k.as_str(), v)))?;
    println!("encoded {} layers in {} bytes", fm.layers.len(), bytes.len());

    let path = std::env::temp_dir().join("img_0001.fmap");
    write_feature_set(&fm, &path)?;
    let back = load_feature_set(&path, &layers)?;
    println!("image id from file stem: {}", back.image_id);
    for (id, t) in &back.layers {
        let (h, w, c) = t.shape();
        println!("{id}: {h}x{w}x{c}, identical: {}", t == &fm.layers[id]);
    }

    // Undeclared layers are rejected.
    let narrow = LayerSet::new(vec![layers.as_slice()[0].clone()])?;
    match load_feature_set(&path, &narrow) {
        Ok(_) => println!("unexpected: loaded with a missing geometry"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
