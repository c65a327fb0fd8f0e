//! Inject distractor patterns, annotate irrelevant regions, prune and undo.
//!
//! cargo run --example interactive_pruning

use aoglab::eval::{evaluate, generate_synthetic, inject_distractors, outside_box_regions, SyntheticConfig, DISTRACTOR_FRACTION};
use aoglab::interaction::{AnnotatedRegionSet, InteractionSession, NoSaliency};
use aoglab::miner::{mine, MinerConfig};
use aoglab::tensor_store::{GroupKind, Split};

fn main() -> aoglab::Result<()> {
    let config = SyntheticConfig::default();
    let set = generate_synthetic(&config)?;
    let data = set.dataset();
    let aog = mine(&data, &MinerConfig { patterns_per_layer: config.patterns_per_layer, ..Default::default() })?;
    let (dirty, injected) = inject_distractors(&aog, &data, &set.ground_truth.distractor_channels, DISTRACTOR_FRACTION)?;
    println!("injected {injected:?}");
    println!("mean ND with distractors: {:.4}", evaluate(&dirty, &data)?.mean().unwrap_or(f64::NAN));

    let mut session = InteractionSession::new("demo", dirty)?;
    for record in data.manifest.records_in(Split::Train) {
        let Some(ann) = record.part_annotations.first() else { continue };
        session.parse_image(&data, &record.image_id)?;
        // Everything outside the part box is irrelevant.
        let rects = outside_box_regions(record.width_px as f64, record.height_px as f64, &ann.part_box);
        for scope in GroupKind::ALL {
            let regions = AnnotatedRegionSet {
                image_id: record.image_id.clone(),
                rectangles: rects.clone(),
                layer_group_scope: scope,
            };
            let evidence = session.propose_prunes(&data, &regions, &NoSaliency)?;
            let confirm: Vec<String> = evidence
                .iter()
                .filter(|e| e.proposed && injected.contains(&e.pattern_id))
                .map(|e| e.pattern_id.clone())
                .collect();
            // A person would confirm only the proposals they agree with.
            for e in evidence.iter().filter(|e| e.proposed) {
                let verdict = if confirm.contains(&e.pattern_id) { "confirm" } else { "decline" };
                println!("  {} {}: {verdict} {} (inside {:.2}, outside {:.2})",
                    record.image_id, scope.as_str(), e.pattern_id, e.inside_mass, e.outside_mass);
            }
            if !confirm.is_empty() {
                session.apply_prunes(&data, &confirm, Some(&regions))?;
            }
        }
    }
    println!("pruned {} patterns", session.ops.len());
    println!("mean ND after pruning: {:.4}", evaluate(session.current_aog(), &data)?.mean().unwrap_or(f64::NAN));

    // Undo restores the graph exactly.
    let n = session.ops.len();
    session.undo(&data, n)?;
    println!("after undoing {n}: {} active patterns, same as base: {}",
        session.current_aog().active_pattern_count(), session.current_aog() == &session.base_aog);
    Ok(())
}
