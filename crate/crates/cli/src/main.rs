use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairrobust::harness::{
    audit_files, emit, run_experiment, timings_to_csv, write_atomic, Approach, ExperimentConfig, Format,
};
use fairrobust::Error;

#[derive(Parser)]
#[command(name = "fairrobust", version, about = "Fair classification with noisy protected groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep hyperparameters over seeds and noise levels and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run a single approach.
        #[arg(long)]
        approach: Option<String>,
        /// Run a single noise level.
        #[arg(long)]
        noise: Option<f64>,
        /// Use seeds 0..k.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep a fixed random subset of this many rows.
        #[arg(long)]
        subsample: Option<usize>,
    },
    /// Score a saved model against observed groups and a noise model.
    Audit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// CSV of (true, observed) group-id pairs.
        #[arg(long = "noise-model")]
        noise_model: PathBuf,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_config_error() {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn run(
    config: PathBuf,
    approach: Option<String>,
    noise: Option<f64>,
    seeds: Option<u64>,
    out: Option<PathBuf>,
    subsample: Option<usize>,
) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(a) = approach {
        let a = Approach::parse(&a).ok_or_else(|| Error::Config {
            path: "--approach".into(),
            message: format!("unknown approach {a:?}"),
        })?;
        cfg.approaches = vec![a];
    }
    if let Some(g) = noise {
        cfg.noise = vec![g];
    }
    if let Some(k) = seeds {
        cfg.seeds = (0..k).collect();
    }
    if let Some(o) = out {
        cfg.out = o;
    } else if cfg.out.is_relative() {
        cfg.out = config.parent().unwrap_or(std::path::Path::new(".")).join(&cfg.out);
    }
    if subsample.is_some() {
        cfg.subsample = subsample;
    }
    cfg.validate()?;
    let exp = run_experiment(&cfg)?;
    emit(&exp.records, Format::Json, &cfg.out)?;
    emit(&exp.records, Format::Csv, &cfg.out)?;
    write_atomic(&cfg.out.join("timings.csv"), &timings_to_csv(&exp.timings)?)?;
    for m in &exp.models {
        write_atomic(&cfg.out.join("models").join(m.file_name()), &serde_json::to_vec_pretty(m)?)?;
    }
    println!("wrote {} records to {}", exp.records.len(), cfg.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            approach,
            noise,
            seeds,
            out,
            subsample,
        } => run(config, approach, noise, seeds, out, subsample),
        Command::Audit {
            model,
            data,
            noise_model,
        } => audit_files(&model, &data, &noise_model).and_then(|r| {
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
