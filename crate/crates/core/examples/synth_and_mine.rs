//! Generate a planted dataset on disk, load it back and mine an AOG.
//!
//! cargo run --example synth_and_mine [OUT_DIR]

use std::path::PathBuf;

use aoglab::aog::save_aog;
use aoglab::eval::{generate_synthetic, write_synthetic, SyntheticConfig};
use aoglab::miner::{mine, MinerConfig};
use aoglab::tensor_store::Dataset;

fn main() -> aoglab::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aoglab-synth"));

    let config = SyntheticConfig::default();
    let set = generate_synthetic(&config)?;
    let manifest = write_synthetic(&set, &out)?;
    println!("wrote {} images to {}", set.manifest.records.len(), out.display());

    // Normalization happens on load, so mine from the files.
    let data = Dataset::load(&manifest)?;
    let cfg = MinerConfig {
        patterns_per_layer: config.patterns_per_layer,
        ..Default::default()
    };
    let aog = mine(&data, &cfg)?;
    for t in &aog.templates {
        let ids: Vec<&str> = t.patterns.iter().map(|p| p.pattern_id.as_str()).collect();
        println!("{}: {} patterns {:?}", t.template_id, t.patterns.len(), ids);
    }

    // Planted channels per template, for comparison.
    for t in &set.ground_truth.templates {
        let planted: Vec<String> = t.patterns.iter().map(|p| format!("{}:{}", p.layer_id, p.channel)).collect();
        println!("planted {}: {}", t.template_id, planted.join(" "));
    }
    let aog_path = out.join("aog.json");
    save_aog(&aog, &aog_path)?;
    println!("aog -> {}", aog_path.display());
    Ok(())
}
