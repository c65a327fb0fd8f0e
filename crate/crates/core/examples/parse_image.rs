//! Parse one test image and check the result against the brute-force oracle.
//!
//! cargo run --example parse_image

use aoglab::eval::{generate_synthetic, normalized_distance, SyntheticConfig};
use aoglab::miner::{mine, MinerConfig};
use aoglab::parser::{brute_force_parse, enumeration_size, parse, DEFAULT_ENUMERATION_CAP};
use aoglab::tensor_store::Split;

fn main() -> aoglab::Result<()> {
    let config = SyntheticConfig::default();
    let data = generate_synthetic(&config)?.dataset();
    let aog = mine(&data, &MinerConfig { patterns_per_layer: config.patterns_per_layer, ..Default::default() })?;

    let record = data.manifest.records_in(Split::Test).next().expect("test images");
    let frame = record.frame();
    let fm = data.features(&record.image_id)?;
    let tree = parse(fm, &aog, data.layers(), &frame)?;

    println!("image {}: template {} at ({:.1}, {:.1}), score {:.4}",
        tree.image_id, tree.chosen_template_id, tree.part_center.x, tree.part_center.y, tree.total_score);
    for a in &tree.pattern_assignments {
        println!(
            "  {:<12} {}[{}] ({:>2},{:>2})  resp {:.3}  def {:.3}  geo {:.3}  -> {:+.3}",
            a.pattern_id, a.unit.layer_id, a.unit.channel, a.unit.x, a.unit.y,
            a.response, a.deform_penalty, a.geo_penalty, a.contribution
        );
    }
    if let Some(gt) = record.gt_part_center() {
        println!("normalized distance to ground truth: {:.4}", normalized_distance(tree.part_center, gt, &record.object_box)?);
    }

    // The oracle enumerates every assignment; only feasible on small graphs.
    let n = enumeration_size(&aog, data.layers(), &frame)?;
    if n <= DEFAULT_ENUMERATION_CAP {
        let slow = brute_force_parse(fm, &aog, data.layers(), &frame, DEFAULT_ENUMERATION_CAP)?;
        println!("brute force over {n} assignments agrees: {}", slow == tree);
    } else {
        println!("brute force skipped ({n} assignments)");
    }
    Ok(())
}
