//! `m3lcmf` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use m3lcmf::dataio::{gen_synthetic, load_dataset, save_dataset, SyntheticSpec};
use m3lcmf::harness::{
    ablate, evaluate, noise_study, sweep, sweep_to_csv, train, validate_csv, validated_json,
    write_file, Checkpoint, ExperimentConfig,
};
use m3lcmf::{Error, Level};

#[derive(Parser)]
#[command(name = "m3lcmf", version, about = "Train, evaluate and study bag/instance/label factorization models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON). Defaults apply to every missing key.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.rank=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model per partition seed; write checkpoints, traces and the
    /// resolved config.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score checkpoints on their test bags.
    Evaluate {
        /// One or more checkpoints from repeated partitions.
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        /// Dataset directory; defaults to the checkpoint's data source.
        #[arg(short, long)]
        dataset: Option<PathBuf>,
        #[arg(short, long, default_value = "bag")]
        level: String,
        /// Report JSON destination.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare the full model with each single-relation ablation.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Grid over lambda1 × lambda2, or over ranks when `sweep.ranks` is set.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Append row-shuffled bag-similarity views and report their weights.
    Noise {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overrides `noise.n_noisy`.
        #[arg(long)]
        n_noisy: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a planted synthetic dataset.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check a dataset directory and print a summary.
    Validate { dataset: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numerical { .. } => 3,
        _ => 2,
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let base = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io { path, source } => {
                Error::Config(format!("cannot read {}: {source}", path.display()))
            }
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.with_overrides(&args.overrides)?;
    Ok(cfg)
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Train { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let ds = cfg.load_data()?;
            write_file(&out.join("config.json"), &validated_json(&cfg)?)?;
            for run in train(&ds, &cfg)? {
                let seed = run.checkpoint.partition_seed;
                let trace = run.trace.to_csv();
                validate_csv(&trace)?;
                write_file(&out.join(format!("checkpoint_{seed}.json")), &validated_json(&run.checkpoint)?)?;
                write_file(&out.join(format!("trace_{seed}.csv")), &trace)?;
                println!(
                    "partition {seed}: {} iterations ({:?}), objective {:.6e}",
                    run.checkpoint.iterations, run.checkpoint.stop, run.checkpoint.objective
                );
            }
        }
        Command::Evaluate {
            checkpoints,
            dataset,
            level,
            out,
        } => {
            let level: Level = level.parse()?;
            let ckpts = checkpoints
                .iter()
                .map(|p| Checkpoint::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let ds = match &dataset {
                Some(dir) => load_dataset(dir)?,
                None => ckpts[0].config.load_data()?,
            };
            let report = evaluate(&ckpts, &ds, level)?;
            if let Some(out) = out {
                write_file(&out, &validated_json(&report)?)?;
            }
            print!("{}", report.table());
        }
        Command::Ablate { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let ds = cfg.load_data()?;
            let table = ablate(&ds, &cfg)?;
            let csv = table.to_csv();
            validate_csv(&csv)?;
            write_file(&out, &csv)?;
            print!("{csv}");
        }
        Command::Sweep { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let ds = cfg.load_data()?;
            let csv = sweep_to_csv(&sweep(&ds, &cfg)?);
            validate_csv(&csv)?;
            write_file(&out, &csv)?;
            println!("{} grid points written to {}", csv.lines().count() - 1, out.display());
        }
        Command::Noise { cfg, n_noisy, out } => {
            let mut cfg = load_config(&cfg)?;
            if let Some(n) = n_noisy {
                cfg.noise.n_noisy = n;
            }
            let ds = cfg.load_data()?;
            let report = noise_study(&ds, &cfg)?;
            write_file(&out, &validated_json(&report)?)?;
            println!("noisy alpha mass  {}", report.noisy_alpha_mass);
            println!("1-RankLoss clean  {}", report.clean);
            println!("1-RankLoss noisy  {}", report.noisy);
        }
        Command::Gen { cfg, out } => {
            let cfg = load_config(&cfg)?;
            let spec = cfg.synthetic.unwrap_or_else(SyntheticSpec::default);
            let (ds, planted) = gen_synthetic(&spec)?;
            save_dataset(&ds, &out)?;
            write_file(&out.join("planted.json"), &validated_json(&planted)?)?;
            println!(
                "{} bags, {} instances, {} labels, {} views written to {}",
                ds.n_bags(),
                ds.n_instances(),
                ds.n_labels(),
                ds.n_views(),
                out.display()
            );
        }
        Command::Validate { dataset } => {
            let ds = load_dataset(&dataset)?;
            summarize(&dataset, &ds);
        }
    }
    Ok(())
}

fn summarize(dir: &Path, ds: &m3lcmf::MultiViewMimlDataset) {
    let all: Vec<usize> = (0..ds.n_bags()).collect();
    println!("{}: ok", dir.display());
    println!("bags        {}", ds.n_bags());
    println!("instances   {}", ds.n_instances());
    println!("labels      {}", ds.n_labels());
    let dims: Vec<String> = ds.views().iter().map(|v| v.ncols().to_string()).collect();
    println!("views       {} (dims {})", ds.n_views(), dims.join(", "));
    println!("avg bag labels {:.3}", ds.label_cardinality(&all));
    println!(
        "instance labels {}",
        if ds.instance_labels().is_some() { "present" } else { "absent" }
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
