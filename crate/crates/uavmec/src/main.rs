//! Command-line front end: run seeded experiments from presets or TOML
//! configs, list presets, and emit preset configs for editing.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use uavmec::config::{load_config, preset, PRESET_NAMES};
use uavmec::engine::Approach;
use uavmec::output::run_experiment;

#[derive(Parser)]
#[command(
    name = "uavmec",
    about = "Two-tier UAV edge-computing simulator: task-field estimation, \
             latency-metric Voronoi partitioning, and distributed MCA repositioning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded experiment and write metrics, snapshots, and a summary.
    Run {
        /// Preset name or path to a TOML config file.
        #[arg(long, value_name = "PRESET|PATH")]
        scenario: String,
        /// Override the tumbling window length, seconds.
        #[arg(long, value_name = "SECONDS")]
        delta: Option<f64>,
        /// Approaches to run (baseline, ratemax, full); repeatable.
        /// Defaults to the approach in the config.
        #[arg(long, value_name = "NAME")]
        approach: Vec<Approach>,
        /// Base RNG seed; repetition r uses seed + r.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seeded repetitions per approach.
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Output directory for metrics, snapshot, and summary files.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out_dir: PathBuf,
    },
    /// List the built-in scenario presets.
    Presets,
    /// Print a preset's TOML config (redirect to a file to edit it).
    EmitConfig {
        /// Preset name.
        #[arg(long, value_name = "PRESET")]
        scenario: String,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { scenario, delta, approach, seed, repetitions, out_dir } => {
            let mut file = load_config(&scenario)?;
            if let Some(d) = delta {
                file.window_s = d;
            }
            let config = file.to_sim_config()?;
            let approaches = if approach.is_empty() { vec![config.approach] } else { approach };
            if repetitions == 0 {
                anyhow::bail!("--repetitions must be at least 1");
            }
            let result = run_experiment(&config, &approaches, repetitions, seed, &out_dir)?;
            println!(
                "{}",
                uavmec::output::summary_csv(&result.summary).trim_end()
            );
            println!("wrote {} metrics files and {}", result.metrics_files.len(),
                result.summary_file.display());
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
        Command::EmitConfig { scenario } => {
            let cfg = preset(&scenario).ok_or_else(|| {
                anyhow::anyhow!(
                    "unknown preset '{scenario}' (see `uavmec presets`)"
                )
            })?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}
