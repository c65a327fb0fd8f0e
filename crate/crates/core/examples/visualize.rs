//! Render receptive-field heatmap overlays per layer group.
//!
//! cargo run --example visualize [OUT_DIR]

use std::path::PathBuf;

use aoglab::eval::{generate_synthetic, SyntheticConfig};
use aoglab::miner::{mine, MinerConfig};
use aoglab::parser::parse;
use aoglab::tensor_store::{GroupKind, Split};
use aoglab::viz::render_parse;

fn main() -> aoglab::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aoglab-viz"));
    std::fs::create_dir_all(&out).map_err(|e| aoglab::Error::io(&out, e))?;

    let config = SyntheticConfig::default();
    let data = generate_synthetic(&config)?.dataset();
    let aog = mine(&data, &MinerConfig { patterns_per_layer: config.patterns_per_layer, ..Default::default() })?;
    let record = data.manifest.records_in(Split::Test).next().expect("test images");
    let frame = record.frame();
    let fm = data.features(&record.image_id)?;
    let tree = parse(fm, &aog, data.layers(), &frame)?;
    let groups = &data.manifest.layer_groups;

    let mut jobs: Vec<(String, Option<GroupKind>)> = GroupKind::ALL.iter().map(|g| (g.as_str().to_string(), Some(*g))).collect();
    jobs.push(("all".into(), None));
    for (name, group) in jobs {
        let overlay = render_parse(fm, &aog, &tree, data.layers(), groups, &frame, group)?;
        let png = out.join(format!("{}_{name}.png", record.image_id));
        std::fs::write(&png, &overlay.png).map_err(|e| aoglab::Error::io(&png, e))?;
        let json = out.join(format!("{}_{name}.json", record.image_id));
        std::fs::write(&json, overlay.layout.to_json()?).map_err(|e| aoglab::Error::io(&json, e))?;
        let shown = overlay.layout.patterns.iter().filter(|p| p.in_overlay).count();
        println!("{name}: {shown} heatmaps, {} bytes -> {}", overlay.png.len(), png.display());
    }
    Ok(())
}
