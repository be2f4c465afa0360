//! `rescan`: reconstruct LiDAR sequences into SDF grids and meshes,
//! re-simulate scans under virtual sensor profiles, and score the result.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rescan_core::error::Error;

/// Exit codes: 0 success, 2 input/config error, 3 numerical failure.
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rescan",
    about = "Reconstruct LiDAR point-cloud sequences into meshes and re-raycast them under virtual sensor profiles",
    version
)]
struct Cli {
    /// Worker threads (default: RESCAN_THREADS env var, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a sequence and reconstruct an SDF grid plus mesh.
    Reconstruct {
        /// Pipeline config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the reconstruction method: tsdf, volume-fit or both.
        #[arg(long)]
        method: Option<String>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cast simulated scans of a mesh under one or more sensor profiles.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Mesh to scan (PLY). Defaults to the reconstruct output in the
        /// output directory.
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Sensor profile: preset name or profile file. Overrides the
        /// config's target list.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score simulated scans against reference scans (truncated Chamfer
    /// distance and depth RMSE).
    Evaluate {
        /// Directory of reference scan PLYs.
        #[arg(long)]
        real: Option<PathBuf>,
        /// Directory of simulated scan PLYs.
        #[arg(long)]
        sim: Option<PathBuf>,
        /// Pairing file for multiple sequences: `id real_dir sim_dir`
        /// per line.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Chamfer truncation fraction.
        #[arg(long, default_value_t = 0.97)]
        truncation: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Object-size histograms and pairwise distribution divergences of
    /// label files.
    Stats {
        /// Label files (`class cx cy cz l w h yaw dyn` or exported
        /// `class l w h cx cy cz yaw` lines).
        #[arg(required = true)]
        labels: Vec<PathBuf>,
        /// Histogram bin width in meters.
        #[arg(long, default_value_t = 0.25)]
        bin_width: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the sensor preset table.
    Presets,
}

fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("RESCAN_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Diverged { .. }) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Some(n) = thread_count(cli.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let result = match cli.command {
        Command::Reconstruct {
            config,
            method,
            out,
            seed,
        } => commands::reconstruct::run(&config, method.as_deref(), out.as_deref(), seed),
        Command::Simulate {
            config,
            mesh,
            profile,
            out,
            seed,
        } => commands::simulate::run(&config, mesh.as_deref(), profile.as_deref(), out.as_deref(), seed),
        Command::Evaluate {
            real,
            sim,
            pairs,
            truncation,
            out,
        } => commands::evaluate::run(
            real.as_deref(),
            sim.as_deref(),
            pairs.as_deref(),
            truncation,
            out.as_deref(),
        ),
        Command::Stats {
            labels,
            bin_width,
            out,
        } => commands::stats::run(&labels, bin_width, out.as_deref()),
        Command::Presets => commands::presets::run(),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
