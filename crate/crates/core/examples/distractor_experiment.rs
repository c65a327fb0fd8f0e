//! The simulated interaction experiment over several seeds: mine, inject 30%
//! distractors, prune them with ground-truth regions, compare ND.
//!
//! cargo run --release --example distractor_experiment [SEEDS]

use aoglab::eval::{generate_synthetic, inject_distractors, run_distractor_experiment, SyntheticConfig, DISTRACTOR_FRACTION};
use aoglab::miner::{mine, MinerConfig};

fn main() -> aoglab::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    println!("seed  unpruned  pruned  images  all_pruned");
    for seed in 0..seeds {
        let config = SyntheticConfig { seed, ..Default::default() };
        let set = generate_synthetic(&config)?;
        let data = set.dataset();
        let aog = mine(&data, &MinerConfig { patterns_per_layer: config.patterns_per_layer, ..Default::default() })?;
        let (dirty, ids) = inject_distractors(&aog, &data, &set.ground_truth.distractor_channels, DISTRACTOR_FRACTION)?;
        let exp = run_distractor_experiment(&data, &dirty, &ids)?;
        println!(
            "{seed:>4}  {:>8.4}  {:>6.4}  {:>6}  {}",
            exp.unpruned.mean().unwrap_or(f64::NAN),
            exp.pruned_report.mean().unwrap_or(f64::NAN),
            exp.images_used.len(),
            exp.all_pruned()
        );
    }
    Ok(())
}
