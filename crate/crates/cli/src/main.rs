//! `sjscc`: train, evaluate and sweep spiking joint source-channel codes.
//!
//! Exit status: 0 success, 1 rerun artifacts differ from the manifest,
//! 2 config or usage error, 3 numerical divergence, 4 I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spiking_jscc::error::{Error, Result};
use spiking_jscc::eval::format_snr;
use spiking_jscc::experiment::{
    gen_data, mismatch_matrix, parse_snr_list, rerun, run_eval, run_train, snr_sweep,
    ExperimentConfig, GenDataConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "sjscc",
    version,
    about = "Spiking joint source-channel coding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    PerSnr,
    Mismatch,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a model and write checkpoint, metrics and accuracy tables.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the config's test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test channel SNR in dB, or `inf` for noiseless.
        #[arg(long, allow_hyphen_values = true)]
        test_snr: Option<String>,
        /// Number of observed timesteps for the reported accuracy.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per SNR; test across SNRs in mismatch mode.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated SNRs in dB; `inf` for noiseless.
        #[arg(long, allow_hyphen_values = true)]
        snr_list: String,
        /// Test SNRs for the mismatch mode; defaults to `--snr-list`.
        #[arg(long, allow_hyphen_values = true)]
        test_snr_list: Option<String>,
        #[arg(long, value_enum, default_value = "per-snr")]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a JSONL dataset from a synthetic spec or CSV event files.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Overrides a synthetic spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a run from its manifest and compare artifact hashes.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(out: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    out.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Parameter("no output directory: pass --out or set output_dir".into()))
}

fn parse_single_snr(text: &str) -> Result<Option<f64>> {
    let list = parse_snr_list(text)?;
    match list.as_slice() {
        [snr] => Ok(*snr),
        _ => Err(Error::Parameter(format!(
            "--test-snr takes one value, got '{text}'"
        ))),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Train { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let out = out_dir(out, &cfg)?;
            let summary = run_train(&cfg, &out)?;
            println!(
                "trained {} iterations, test accuracy {:.4}, artifacts in {}",
                cfg.iterations,
                summary.final_accuracy,
                out.display()
            );
        }
        Cmd::Eval {
            config,
            checkpoint,
            test_snr,
            horizon,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            let out = out_dir(out, &cfg)?;
            let test_snr = test_snr.as_deref().map(parse_single_snr).transpose()?;
            let s = run_eval(&cfg, &checkpoint, test_snr, horizon, &out)?;
            println!(
                "test accuracy {:.4} (horizon {}: {:.4}) at snr {}",
                s.accuracy,
                s.horizon,
                s.accuracy_at_horizon,
                format_snr(s.snr_db)
            );
        }
        Cmd::Sweep {
            config,
            snr_list,
            test_snr_list,
            mode,
            jobs,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            let out = out_dir(out, &cfg)?;
            let train_snr = parse_snr_list(&snr_list)?;
            match mode {
                Mode::PerSnr => {
                    for p in snr_sweep(&cfg, &train_snr, jobs, &out)? {
                        println!(
                            "snr {}: test accuracy {:.4}",
                            format_snr(p.snr_db),
                            p.test_accuracy
                        );
                    }
                }
                Mode::Mismatch => {
                    let test_snr = match test_snr_list {
                        Some(t) => parse_snr_list(&t)?,
                        None => train_snr.clone(),
                    };
                    let m = mismatch_matrix(&cfg, &train_snr, &test_snr, jobs, &out)?;
                    for (train, row) in m.train_snr.iter().zip(&m.accuracy) {
                        let cells: Vec<String> = row.iter().map(|a| format!("{a:.4}")).collect();
                        println!("train snr {}: {}", format_snr(*train), cells.join(" "));
                    }
                }
            }
        }
        Cmd::GenData { config, seed, out } => {
            let text = fs::read_to_string(&config).map_err(|e| Error::Io {
                path: config.clone(),
                source: e,
            })?;
            let spec: GenDataConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
                field: "gen_data".into(),
                message: e.to_string(),
            })?;
            let summary = gen_data(&spec, seed, &out)?;
            println!("wrote {} examples to {}", summary.examples, out.display());
            for p in summary.empty {
                eprintln!("warning: no events retained from {}", p.display());
            }
        }
        Cmd::Rerun {
            manifest,
            out,
            jobs,
        } => {
            let report = rerun(&manifest, &out, jobs)?;
            for (name, ok) in &report.artifacts {
                println!("{} {name}", if *ok { "match" } else { "DIFFER" });
            }
            if !report.all_match() {
                eprintln!("error: rerun artifacts differ from the manifest");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
