use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aoglab_service::commands;

#[derive(Parser)]
#[command(name = "aoglab", version, about = "And-Or graph part localization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mine an AOG from a dataset's part annotations.
    Mine {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Patterns kept per layer.
        #[arg(long)]
        nk: Option<usize>,
        /// Deformation half-extent in cells (default: a third of the grid side).
        #[arg(long)]
        half_extent: Option<usize>,
    },
    /// Parse one image.
    Parse {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        aog: PathBuf,
        #[arg(long)]
        image: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalized-distance report over the test split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        aog: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a planted synthetic dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "AOGLAB_DATA_ROOT", default_value = ".")]
        data_root: PathBuf,
    },
}

fn main() -> ExitCode {
    let result: Result<(), Box<dyn std::error::Error>> = match Cli::parse().cmd {
        Cmd::Mine { manifest, out, nk, half_extent } => {
            commands::run_mine(&manifest, &out, nk, half_extent).map_err(Into::into)
        }
        Cmd::Parse { manifest, aog, image, out } => commands::run_parse(&manifest, &aog, &image, &out).map_err(Into::into),
        Cmd::Evaluate { manifest, aog, out } => commands::run_evaluate(&manifest, &aog, &out)
            .map(|r| print!("{}", r.to_markdown()))
            .map_err(Into::into),
        Cmd::Synth { config, out } => commands::run_synth(&config, &out)
            .map(|p| println!("{}", p.display()))
            .map_err(Into::into),
        Cmd::Serve { port, data_root } => tokio::runtime::Runtime::new()
            .map_err(Into::into)
            .and_then(|rt| rt.block_on(aoglab_service::serve(data_root, port))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aoglab: {e}");
            ExitCode::FAILURE
        }
    }
}
