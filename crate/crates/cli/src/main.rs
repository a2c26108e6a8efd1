use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ppnn::commands::{self, CompareOutput};
use ppnn::config::KEYS;
use ppnn::{exit, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "ppnn", version, about = "PDE-preserving neural surrogates: generate data, train, compare rollouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the `out` key
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides any other key, e.g. `--set epochs=5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training and test datasets into the output directory
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the model selected by `pde_spec`; writes a checkpoint and a loss CSV
    Train {
        #[command(flatten)]
        common: Common,
        /// Training dataset
        #[arg(long)]
        dataset: PathBuf,
        /// Dataset evaluated after every epoch
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Continue from this checkpoint and its loss history
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Roll checkpoints out on a test set; writes report.csv and report.svg
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint to include (repeatable)
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Roll the coarse solver out alone, optionally next to checkpoints
    Coarse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// List the configuration keys
    Keys,
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&c.config).map_err(CliError::io(&c.config))?;
    let mut cfg = RunConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", c.config.display())))?;
    for o in &c.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(out: &CompareOutput) {
    for r in &out.reports {
        let at = |k: usize| r.mean_at(k).map_or("n/a".to_string(), |v| format!("{v:.4e}"));
        let h = r.horizon.min(r.n_steps());
        print!("{:<16} eps[1]={} eps[{h}]={} eps[{}]={}", r.model, at(1), at(h), r.n_steps(), at(r.n_steps()));
        match r.first_divergence() {
            Some(k) => println!("  first divergence at step {k}"),
            None => println!(),
        }
    }
    println!("wrote {} and {}", out.report_csv.display(), out.report_svg.display());
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            for s in commands::gen_data(&cfg)? {
                println!("{}: {} trajectories x {} snapshots, dt_learn = {}", s.path.display(), s.trajectories, s.snapshots, s.dt_learn);
            }
        }
        Command::Train { common, dataset, eval, resume } => {
            let cfg = load_config(&common)?;
            let out = commands::train(&cfg, &dataset, eval.as_deref(), resume.as_deref())?;
            if let Some(last) = out.history.records.last() {
                println!("epoch {} train_mse {:.4e}", last.epoch, last.train_mse);
            }
            println!("wrote {} and {}", out.checkpoint.display(), out.loss_csv.display());
        }
        Command::Compare { common, dataset, checkpoints } => {
            let cfg = load_config(&common)?;
            print_report(&commands::compare(&cfg, &checkpoints, &dataset)?);
        }
        Command::Coarse { common, dataset, checkpoints } => {
            let cfg = load_config(&common)?;
            print_report(&commands::coarse(&cfg, &checkpoints, Path::new(&dataset))?);
        }
        Command::Keys => {
            for (k, doc) in KEYS {
                println!("{k:<20} {doc}");
            }
        }
    }
    eprintln!("done in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
