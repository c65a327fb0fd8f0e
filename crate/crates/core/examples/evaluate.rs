//! Batch evaluation with the normalized center distance.
//!
//! cargo run --example evaluate [OUT_CSV]

use aoglab::eval::{evaluate, generate_synthetic, SyntheticConfig};
use aoglab::miner::{mine, MinerConfig};

fn main() -> aoglab::Result<()> {
    let config = SyntheticConfig::default();
    let data = generate_synthetic(&config)?.dataset();
    let aog = mine(&data, &MinerConfig { patterns_per_layer: config.patterns_per_layer, ..Default::default() })?;
    let report = evaluate(&aog, &data)?;
    print!("{}", report.to_markdown());

    let worst = report
        .rows
        .iter()
        .filter_map(|r| r.normalized_distance.map(|d| (d, r)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((d, r)) = worst {
        println!("worst: {} at {d:.4} (template {})", r.image_id, r.chosen_template_id.as_deref().unwrap_or("-"));
    }
    if let Some(path) = std::env::args().nth(1) {
        report.write_csv(&path)?;
        println!("csv -> {path}");
    }
    Ok(())
}
