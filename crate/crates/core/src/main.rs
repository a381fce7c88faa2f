use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ntype_phd::io::{
    evaluate_files, load_config, run_tracking, write_atomic, write_detections, write_truth,
    DetectionFormat, InputFiles, IoError, Mode, RunConfig,
};
use ntype_phd::sim::{preset_names, simulate};

#[derive(Parser)]
#[command(
    name = "ntype-phd",
    version,
    about = "Multi-type GM-PHD tracking, simulation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario (football3, urban2, single).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write truth.csv, detections.csv and scenario.toml.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Add the provenance column to detections.csv.
        #[arg(long)]
        provenance: bool,
    },
    /// Track detections (simulated unless --detections is given).
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<DetectionFormat>,
        /// Ground truth for scoring file input.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Score an estimates file against a truth file.
    Evaluate {
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(name) = &common.preset {
        cfg.preset = Some(name.clone());
        cfg.scenario = None;
    }
    if cfg.preset.is_none() && cfg.scenario.is_none() {
        bail!(
            "no scenario: pass --preset ({}) or --config",
            preset_names().join(", ")
        );
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, provenance } => {
            let cfg = base_config(&common)?;
            cfg.validate()?;
            let scn = cfg.resolve_scenario()?;
            let sim = simulate(&scn)?;
            write_truth(&cfg.out.join("truth.csv"), &sim.truth)?;
            write_detections(&cfg.out.join("detections.csv"), &sim.detections, provenance)?;
            let inline = RunConfig {
                preset: None,
                scenario: Some(scn),
                seed: None,
                input: None,
                ..cfg.clone()
            };
            let text = inline.to_toml()?;
            write_atomic(&cfg.out.join("scenario.toml"), |w| {
                w.write_all(text.as_bytes())
                    .map_err(|e| IoError::Invalid(e.to_string()))
            })?;
            log::info!("wrote {} frames to {}", sim.truth.len(), cfg.out.display());
        }
        Command::Track {
            common,
            detections,
            format,
            truth,
            mode,
            replicates,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(path) = detections {
                cfg.input = Some(InputFiles {
                    detections: path,
                    format: format.unwrap_or(DetectionFormat::SimCsv),
                    truth,
                });
            } else if truth.is_some() || format.is_some() {
                bail!("--truth and --format only apply together with --detections");
            }
            let summary = run_tracking(&cfg)?;
            print!("{}", summary.table());
        }
        Command::Evaluate {
            estimates,
            truth,
            common,
        } => {
            let settings = match &common.config {
                Some(path) => load_config(path)?.metrics,
                None => Default::default(),
            };
            let out = common.out.unwrap_or_else(|| PathBuf::from("out"));
            let eval = evaluate_files(&estimates, &truth, &settings, &out)?;
            println!(
                "frames {}  ospa {:.3}  card_err {:.3}  disc_rate {:.4}",
                eval.summary.frames,
                eval.summary.mean_ospa,
                eval.summary.mean_card_err,
                eval.summary.disc_rate
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
