use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmabeam_cli::experiments::{
    run_coverage, run_efficiency_sweep, run_export_codebook, run_ingest_sparams, run_pattern, run_steering, IngestOptions,
};
use dmabeam_cli::{CliError, CliResult, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "dmabeam", version, about = "Metasurface beamforming experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Far-field pattern and beamwidth of codewords in one layer.
    Pattern {
        #[arg(long)]
        layer: usize,
        /// Every codeword of the layer when omitted.
        #[arg(long)]
        codeword: Option<usize>,
    },
    /// Steering error of every last-layer codeword per variant.
    Steering,
    /// Coverage percentile curves per variant and layer.
    Coverage {
        /// Repeatable; the configured layers when omitted.
        #[arg(long)]
        layer: Vec<usize>,
    },
    /// Spectral and energy efficiency against input power.
    Sweep,
    /// Write the configured codebook as CSV.
    ExportCodebook,
    /// Build a tuning table from an S-parameter CSV.
    IngestSparams {
        /// S-parameter CSV: cap_pF,omega_rad_s,s11_re,s11_im,s21_re,s21_im.
        #[arg(long)]
        input: PathBuf,
        /// Angular frequency to extract, rad/s.
        #[arg(long)]
        omega: f64,
        /// Broad guide dimension, m.
        #[arg(long)]
        guide_a: f64,
        /// Narrow guide dimension, m.
        #[arg(long)]
        guide_b: f64,
        /// Guide propagation constant, rad/m; the config's when omitted.
        #[arg(long)]
        beta: Option<f64>,
        /// Smallest unsampled arc reported as a gap, rad.
        #[arg(long, default_value_t = 0.3)]
        gap_threshold: f64,
    },
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = cfg.output_dir.clone();
    pool.install(|| match cli.command {
        Command::Pattern { layer, codeword } => run_pattern(&cfg, layer, codeword, &out),
        Command::Steering => run_steering(&cfg, &out),
        Command::Coverage { layer } => {
            let layers = if layer.is_empty() { cfg.coverage_layers() } else { layer };
            run_coverage(&cfg, &layers, &out)
        }
        Command::Sweep => run_efficiency_sweep(&cfg, &out),
        Command::ExportCodebook => run_export_codebook(&cfg, &out),
        Command::IngestSparams {
            input,
            omega,
            guide_a,
            guide_b,
            beta,
            gap_threshold,
        } => {
            let opts = IngestOptions {
                input,
                omega_rad_s: omega,
                guide_a_m: guide_a,
                guide_b_m: guide_b,
                beta,
                gap_threshold_rad: gap_threshold,
            };
            run_ingest_sparams(&cfg, &opts, &out)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
