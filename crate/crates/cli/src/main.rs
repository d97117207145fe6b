use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedcog::harness::{
    compare, generate, load_synthetic_spec, run_experiment, ExperimentConfig, RunRecord,
};
use fedcog::{Error, Result};

#[derive(Parser)]
#[command(
    name = "fedcog",
    version,
    about = "Fairness-aware federated cognitive diagnosis simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (logs.csv, qmatrix.csv, latents.csv).
    Generate {
        /// Synthetic spec, or an experiment config with a [data.synthetic] section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment for every configured seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds; replaces run.seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory; replaces run.out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted override such as federation.rounds=10. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Tabulate seed-averaged metrics of several run records.
    Compare {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { config, seed, out } => {
            let spec = load_synthetic_spec(&config)?;
            for p in generate(&spec, seed, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Run {
            config,
            seeds,
            out,
            mut overrides,
        } => {
            if let Some(s) = seeds {
                let list: Vec<String> = s.iter().map(u64::to_string).collect();
                overrides.push(format!("run.seeds=[{}]", list.join(",")));
            }
            if let Some(o) = out {
                let quoted = serde_json::to_string(&o.display().to_string())?;
                overrides.push(format!("run.out_dir={quoted}"));
            }
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let (record, path) = run_experiment(&cfg)?;
            for run in &record.runs {
                println!("{}", run.loss_trace.display());
                println!("{}", run.per_client_table.display());
            }
            println!("{}", path.display());
        }
        Command::Compare { records, out } => {
            let loaded = records
                .iter()
                .map(|p| RunRecord::load(p))
                .collect::<Result<Vec<_>>>()?;
            let table = compare(&loaded)?.to_csv()?;
            print!("{table}");
            if let Some(o) = out {
                std::fs::write(&o, &table).map_err(|e| Error::Io {
                    path: o.clone(),
                    source: e,
                })?;
                println!("{}", o.display());
            }
        }
    }
    Ok(())
}

fn error_line(e: &Error) -> String {
    let mut obj = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
    });
    let mut cur = e;
    while let Error::Stage { stage, source } = cur {
        obj["stage"] = (*stage).into();
        cur = source;
    }
    if let Error::Config { field, .. } = cur {
        obj["field"] = field.as_str().into();
    }
    obj.to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
