use std::collections::HashSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use mareg_cli::commands::{self, EvaluateArgs, RegisterArgs};
use mareg_cli::{load_config, CliResult};
use serde::Serialize;

/// Multi-modal deformable registration with test-time optimisation.
///
/// Every command reads one JSON config (`--config`, optional) and accepts
/// `--dotted.key value` overrides on top of it, e.g. `--tto.learning_rate 1e-3`
/// or `--max-seconds 30`.
#[derive(Parser)]
#[command(name = "mareg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic pairs with ground-truth fields and a manifest.
    Synthesize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the teacher network on synthetic pairs.
    TrainTeacher {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing final checkpoint.
        #[arg(long)]
        force: bool,
    },
    /// Distil the student network from a trained teacher.
    Distill {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Register moving volume(s) to a fixed volume by test-time optimisation.
    Register {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        fixed: PathBuf,
        /// Volumes, or one directory of frames.
        #[arg(long, num_args = 1.., required = true)]
        moving: Vec<PathBuf>,
        /// Affinely prealign each frame first.
        #[arg(long)]
        affine: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a pair with the patch-wise MI map, optional masks and overlays.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        fixed: PathBuf,
        #[arg(long)]
        moving: PathBuf,
        #[arg(long)]
        fixed_mask: Option<PathBuf>,
        #[arg(long)]
        moving_mask: Option<PathBuf>,
        #[arg(long)]
        domain: Option<PathBuf>,
        #[arg(long)]
        overlays: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Moves `--key value` pairs the subcommand does not define into a separate
/// override list, keeping everything else in order for clap.
fn split_overrides(argv: Vec<String>) -> (Vec<String>, Vec<String>) {
    let cmd = Cli::command();
    let Some(sub) = argv.get(1).and_then(|s| cmd.find_subcommand(s)) else {
        return (argv, Vec::new());
    };
    let known: HashSet<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_owned))
        .chain(["help".to_owned()])
        .collect();
    let mut kept = argv[..2].to_vec();
    let mut overrides = Vec::new();
    let mut it = argv.into_iter().skip(2);
    while let Some(arg) = it.next() {
        if let Some(name) = arg.strip_prefix("--") {
            let (key, inline) = match name.split_once('=') {
                Some((k, v)) => (k.to_owned(), Some(v.to_owned())),
                None => (name.to_owned(), None),
            };
            if !known.contains(&key) {
                overrides.push(format!("--{key}"));
                overrides.extend(inline.or_else(|| it.next()));
                continue;
            }
        }
        kept.push(arg);
    }
    (kept, overrides)
}

/// Prints the command's summary; a closed stdout is not an error.
fn print(value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    let _ = writeln!(std::io::stdout(), "{text}");
    Ok(())
}

fn run(command: Command, overrides: &[String]) -> CliResult<()> {
    match command {
        Command::Synthesize { config, out } => {
            let cfg = load_config(config.as_deref(), overrides)?;
            let manifest = commands::synthesize(&cfg, &out)?;
            print(&serde_json::json!({ "out": out, "pairs": manifest.pairs.len(), "config_hash": manifest.config_hash }))
        }
        Command::TrainTeacher { config, out, force } => {
            let cfg = load_config(config.as_deref(), overrides)?;
            print(&commands::train_teacher(&cfg, &out, force)?)
        }
        Command::Distill { config, teacher, out, force } => {
            let cfg = load_config(config.as_deref(), overrides)?;
            print(&commands::distill(&cfg, &teacher, &out, force)?)
        }
        Command::Register { config, checkpoint, fixed, moving, affine, out } => {
            let cfg = load_config(config.as_deref(), overrides)?;
            let frames = commands::register(&cfg, &RegisterArgs { fixed, moving, checkpoint, affine, out })?;
            print(&frames)
        }
        Command::Evaluate { config, fixed, moving, fixed_mask, moving_mask, domain, overlays, out } => {
            let cfg = load_config(config.as_deref(), overrides)?;
            let args = EvaluateArgs { fixed, moving, fixed_mask, moving_mask, domain, overlays, out };
            print(&commands::evaluate(&cfg, &args)?)
        }
    }
}

fn main() -> ExitCode {
    let (argv, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
