use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rpl::harness::{self, ExportKind, RunConfig, DATA_ROOT_ENV};

#[derive(Parser)]
#[command(name = "rpl", version, about = "Open-set recognition with reciprocal points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on trial 0's split.
    Train {
        /// key=value run config
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config's out_dir
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a split's test data with a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to $RPL_DATA_ROOT
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// Split file, e.g. the split.txt written by train
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several split/train/eval trials and aggregate them.
    Trials {
        #[arg(long)]
        config: PathBuf,
        /// Number of trials; defaults to the config's `trials`
        #[arg(long)]
        n: Option<usize>,
        /// Output directory; defaults to the config's out_dir
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump score histograms or embeddings as CSV.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to $RPL_DATA_ROOT
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// hist or emb
        #[arg(long)]
        what: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    match flag.or_else(|| cfg.out_dir.clone()) {
        Some(p) => Ok(p),
        None => bail!("no --out given and the config has no out_dir"),
    }
}

fn data_root(flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    match flag.or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)) {
        Some(p) => Ok(p),
        None => bail!("no --data-root given and {DATA_ROOT_ENV} is not set"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut progress = |line: &str| eprintln!("{line}");
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let out = out_dir(out, &cfg)?;
            let outcome = harness::cmd_train(&cfg, &out, &mut progress)?;
            if let Some(last) = outcome.log.last() {
                println!("final_loss={:.6}", last.loss);
            }
            println!("checkpoint={}", out.join(harness::CHECKPOINT_FILE).display());
        }
        Command::Eval {
            checkpoint,
            data_root: root,
            split,
            out,
        } => {
            let report = harness::cmd_eval(&checkpoint, &data_root(root)?, &split, &out)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Trials { config, n, out } => {
            let cfg = load_config(&config, None)?;
            let out = out_dir(out, &cfg)?;
            let report = harness::cmd_trials(&cfg, n.unwrap_or(cfg.trials), &out, &mut progress)?;
            println!("closed_accuracy={:.4}±{:.4}", report.closed_accuracy.mean, report.closed_accuracy.std);
            if let Some(a) = report.auroc {
                println!("auroc={:.4}±{:.4}", a.mean, a.std);
            }
        }
        Command::Export {
            checkpoint,
            data_root: root,
            what,
            out,
        } => {
            let kind: ExportKind = what.parse()?;
            let path = harness::cmd_export(&checkpoint, &data_root(root)?, kind, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
