//! File-to-file commands behind the `aoglab` binary.

use std::path::{Path, PathBuf};

use aoglab::aog::{load_aog, save_aog};
use aoglab::eval::{evaluate, generate_synthetic, write_synthetic, EvalReport, SyntheticConfig};
use aoglab::miner::{mine, MinerConfig};
use aoglab::parser::parse;
use aoglab::tensor_store::Dataset;
use aoglab::{Error, Result};

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Mine an AOG from the manifest's annotations and write it as JSON.
pub fn run_mine(manifest: &Path, out: &Path, nk: Option<usize>, half_extent: Option<usize>) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let mut cfg = MinerConfig::default();
    if let Some(k) = nk {
        cfg.patterns_per_layer = k;
    }
    cfg.deform_half_extent = half_extent;
    save_aog(&mine(&data, &cfg)?, out)
}

/// Parse one image and write its parse tree.
pub fn run_parse(manifest: &Path, aog: &Path, image_id: &str, out: &Path) -> Result<()> {
    let data = Dataset::load(manifest)?;
    let aog = load_aog(aog)?;
    let record = data.manifest.record(image_id)?;
    let tree = parse(data.features(image_id)?, &aog, data.layers(), &record.frame())?;
    let text = serde_json::to_string_pretty(&tree)?;
    std::fs::write(out, text).map_err(|e| io(out, e))
}

/// Evaluate the test split and write the aggregate CSV.
pub fn run_evaluate(manifest: &Path, aog: &Path, out: &Path) -> Result<EvalReport> {
    let data = Dataset::load(manifest)?;
    let report = evaluate(&load_aog(aog)?, &data)?;
    report.write_csv(out)?;
    Ok(report)
}

/// Generate a planted synthetic dataset from a JSON config; returns the
/// manifest path. Missing config fields take their defaults.
pub fn run_synth(config: &Path, out: &Path) -> Result<PathBuf> {
    let text = std::fs::read_to_string(config).map_err(|e| io(config, e))?;
    let cfg: SyntheticConfig = serde_json::from_str(&text)?;
    write_synthetic(&generate_synthetic(&cfg)?, out)
}
