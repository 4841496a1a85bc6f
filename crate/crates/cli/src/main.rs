use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flsim_cli::config::resolve_data_dir;
use flsim_cli::data::{fetch, inspect, partition_report, DEFAULT_MIRROR};
use flsim_cli::gradcheck::run_gradcheck;
use flsim_cli::run::{load_data, make_partitions};
use flsim_cli::{parse_config, parse_flag_pairs, run_experiment, CliError, RunOptions};
use flsim_core::{ModelKind, Precision};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 configuration or usage error, 2 data error \
(missing, corrupt or checksum mismatch), 3 check failed (gradcheck), 4 I/O or internal error.";

const RUN_HELP: &str = "Options:
  --config <FILE>     JSON experiment config (unknown keys are rejected)
  --threads <N>       worker threads (default: all cores); never changes results
  --no-timing         write wallclock_ms as 0 for byte-exact comparisons
  --hist              also write hist_round_<t>.csv coordinate histograms
  --<key> <VALUE>     override any config key, dotted for nested ones,
                      e.g. --rounds 50 --scheme mub --attack.kind sign_flip

Outputs <out_dir>/metrics.csv and <out_dir>/config.json.";

#[derive(Parser, Debug)]
#[command(name = "flsim", version, about = "Deterministic federated-learning simulator", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment.
    #[command(after_help = RUN_HELP, disable_help_flag = true)]
    Run {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OPTIONS")]
        args: Vec<String>,
    },
    /// Compare backprop against central finite differences on random tiny networks.
    Gradcheck {
        #[arg(long, value_enum, default_value = "both")]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "double")]
        precision: PrecisionArg,
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Obtain or examine MNIST files.
    Data {
        #[command(subcommand)]
        action: DataCommand,
    },
    /// Print per-client partition sizes and label counts. Accepts the same
    /// `--config` and `--<key> <value>` options as `run`.
    #[command(name = "partition-report", disable_help_flag = true)]
    PartitionReport {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OPTIONS")]
        args: Vec<String>,
    },
}

#[derive(Subcommand, Debug)]
enum DataCommand {
    /// Download the four MNIST IDX files and verify their SHA-256.
    Fetch {
        /// http(s) base URL, file:// URL or directory holding the files (optionally .gz).
        #[arg(long, default_value = DEFAULT_MIRROR)]
        source: String,
        /// Destination directory (default: $FLSIM_DATA_DIR or data/mnist).
        #[arg(long)]
        dest: Option<PathBuf>,
    },
    /// Print the header of an IDX file.
    Inspect { file: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Mlp,
    Cnn,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

/// `run`-style arguments: process switches plus config overrides.
struct Invocation {
    config: Option<PathBuf>,
    overrides: Vec<(String, String)>,
    opts: RunOptions,
}

fn split_invocation(args: &[String]) -> Result<Invocation, CliError> {
    let mut inv = Invocation { config: None, overrides: Vec::new(), opts: RunOptions::default() };
    for (key, value) in parse_flag_pairs(args)? {
        let flag = |v: &str| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(CliError::Config(format!("--{key} takes no value"))),
        };
        match key.as_str() {
            "config" => inv.config = Some(PathBuf::from(value)),
            "threads" => {
                let n = value.parse().map_err(|_| CliError::Config(format!("threads: `{value}` is not a count")))?;
                inv.opts.threads = Some(n);
            }
            "no-timing" => inv.opts.no_timing = flag(&value)?,
            "hist" => inv.opts.hist = flag(&value)?,
            _ => inv.overrides.push((key.replace('-', "_"), value)),
        }
    }
    Ok(inv)
}

fn wants_help(args: &[String]) -> bool {
    args.iter().any(|a| a == "--help" || a == "-h")
}

fn resolve(inv: &Invocation) -> Result<flsim_cli::ExperimentConfig, CliError> {
    let text = match &inv.config {
        Some(path) => {
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?
        }
        None => String::new(),
    };
    parse_config(&text, &inv.overrides)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { args } => {
            if wants_help(&args) {
                println!("Usage: flsim run [OPTIONS]\n\n{RUN_HELP}\n\n{EXIT_CODES}");
                return Ok(());
            }
            let inv = split_invocation(&args)?;
            let cfg = resolve(&inv)?;
            let summary = run_experiment(&cfg, &inv.opts)?;
            if let Some(last) = summary.records.last() {
                log::info!(
                    "done: {} rounds, final accuracy {:.4}, output in {}",
                    summary.records.len(),
                    last.test_accuracy,
                    summary.out_dir.display()
                );
            }
            Ok(())
        }
        Command::Gradcheck { model, precision, instances, seed } => {
            let precision = match precision {
                PrecisionArg::Single => Precision::Single,
                PrecisionArg::Double => Precision::Double,
            };
            let kinds: &[ModelKind] = match model {
                ModelArg::Mlp => &[ModelKind::Mlp],
                ModelArg::Cnn => &[ModelKind::Cnn],
                ModelArg::Both => &[ModelKind::Mlp, ModelKind::Cnn],
            };
            let mut failed = Vec::new();
            for &kind in kinds {
                let report = run_gradcheck(kind, precision, instances, seed)?;
                println!("{}", report.line());
                if !report.passed() {
                    failed.push(report.line());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(failed.join("; ")))
            }
        }
        Command::Data { action: DataCommand::Fetch { source, dest } } => {
            let dest = resolve_data_dir(dest.as_deref());
            let written = fetch(&source, &dest)?;
            println!("{} file(s) written to {}", written.len(), dest.display());
            Ok(())
        }
        Command::Data { action: DataCommand::Inspect { file } } => {
            println!("{}", inspect(&file)?);
            Ok(())
        }
        Command::PartitionReport { args } => {
            if wants_help(&args) {
                println!(
                    "Usage: flsim partition-report [--config FILE] [--<key> <VALUE>]...\n\n\
                     Relevant keys: dataset, partition, clients, shards_per_client, seed, data_dir, train_limit.\n\n{EXIT_CODES}"
                );
                return Ok(());
            }
            let inv = split_invocation(&args)?;
            let cfg = resolve(&inv)?;
            let (train, _) = load_data(&cfg)?;
            let parts = make_partitions(&cfg, &train)?;
            for line in partition_report(&parts, &train) {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
