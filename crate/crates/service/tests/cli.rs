mod common;

use std::process::Command;

use aoglab::aog::load_aog;
use aoglab::aog::ParseTree;
use aoglab::eval::evaluate;
use aoglab::tensor_store::Dataset;
use aoglab_service::commands::{run_evaluate, run_mine, run_parse, run_synth};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aoglab"))
}

#[test]
fn commands_chain_from_config_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&common::tiny_config()).unwrap()).unwrap();
    let out = dir.path().join("set");
    let manifest = run_synth(&cfg, &out).unwrap();
    assert_eq!(manifest, out.join("manifest.json"));

    let aog_path = dir.path().join("aog.json");
    run_mine(&manifest, &aog_path, Some(1), Some(1)).unwrap();
    let aog = load_aog(&aog_path).unwrap();
    assert!(aog.patterns().all(|p| p.deform_half_extent == 1));
    // One pattern per layer per template.
    assert_eq!(aog.templates.iter().map(|t| t.patterns.len()).collect::<Vec<_>>(), [2, 2]);

    let tree_path = dir.path().join("tree.json");
    run_parse(&manifest, &aog_path, "test_001", &tree_path).unwrap();
    let tree: ParseTree = serde_json::from_str(&std::fs::read_to_string(&tree_path).unwrap()).unwrap();
    assert_eq!(tree.image_id, "test_001");

    let csv = dir.path().join("report.csv");
    let report = run_evaluate(&manifest, &aog_path, &csv).unwrap();
    let data = Dataset::load(&manifest).unwrap();
    assert_eq!(report, evaluate(&aog, &data).unwrap());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("category,part,n_images,mean_nd,median_nd\n"));
    assert_eq!(text, report.to_csv());

    assert!(run_parse(&manifest, &aog_path, "nope", &tree_path).is_err());
    assert!(run_synth(&dir.path().join("missing.json"), &out).is_err());
}

#[test]
fn binary_exposes_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, serde_json::to_string(&common::tiny_config()).unwrap()).unwrap();
    let set = dir.path().join("set");
    let m = set.join("manifest.json");
    let aog = dir.path().join("aog.json");
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--config".into(), cfg.display().to_string(), "--out".into(), set.display().to_string()],
        vec!["mine".into(), "--manifest".into(), m.display().to_string(), "--out".into(), aog.display().to_string(), "--nk".into(), "1".into(), "--half-extent".into(), "1".into()],
        vec!["parse".into(), "--manifest".into(), m.display().to_string(), "--aog".into(), aog.display().to_string(), "--image".into(), "test_000".into(), "--out".into(), dir.path().join("t.json").display().to_string()],
        vec!["evaluate".into(), "--manifest".into(), m.display().to_string(), "--aog".into(), aog.display().to_string(), "--out".into(), dir.path().join("r.csv").display().to_string()],
    ];
    for args in steps {
        let o = bin().args(&args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(dir.path().join("r.csv").is_file());

    let help = bin().args(["serve", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("--port") && text.contains("--data-root") && text.contains("AOGLAB_DATA_ROOT"));

    let o = bin().args(["parse", "--manifest", "/nonexistent.json", "--aog", "a", "--image", "x", "--out", "y"]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("aoglab: "));
}
