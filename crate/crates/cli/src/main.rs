use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use affect_cli::{cmd_extract, cmd_fuse, cmd_report, cmd_selftest, cmd_train, cmd_validate, CliError, Precision, RunConfig};
use affect_core::selftest::SelftestOptions;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Multimodal arousal/valence regression: encoder training, representation
/// extraction, SVR fusion and reporting.
#[derive(Parser)]
#[command(name = "affect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Dataset manifest (JSON lines).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Run directory that receives all outputs.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Encoder config (`train`, repeatable) or SVR config (`fuse`).
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Global seed; encoders and fusions derive their own seeds from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = PrecisionArg::F64)]
    precision: PrecisionArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Check the manifest and every feature tensor.
    Validate,
    /// Train the encoders given by --config.
    Train,
    /// Write train/validation representations of trained encoders.
    Extract {
        /// Encoder names (default: all trained encoders in the run).
        encoders: Vec<String>,
    },
    /// Fit and evaluate SVR fusions, e.g. "VisModel2+AudModel2".
    Fuse {
        #[arg(required = true)]
        combinations: Vec<String>,
    },
    /// Aggregate results into tables and PCC matrices.
    Report,
    /// Run the built-in property suite.
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    if g.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.jobs)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let is_fuse = matches!(cli.command, Command::Fuse { .. });
    if is_fuse && g.config.len() > 1 {
        return Err(CliError::Usage("fuse takes at most one --config".into()));
    }
    let mut run = RunConfig {
        manifest: g.manifest,
        out: g.out,
        encoder_configs: if is_fuse { Vec::new() } else { g.config.clone() },
        combinations: Vec::new(),
        fusion_config: if is_fuse { g.config.first().cloned() } else { None },
        seed: g.seed,
        precision: match g.precision {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        },
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Validate => cmd_validate(run.manifest_path()?, &mut out).map(|_| ()),
        Command::Train => cmd_train(&run, &mut out).map(|_| ()),
        Command::Extract { encoders } => cmd_extract(&run, &encoders, &mut out),
        Command::Fuse { combinations } => {
            run.combinations = combinations;
            cmd_fuse(&run, &mut out).map(|_| ())
        }
        Command::Report => cmd_report(&run.out, &mut out).map(|_| ()),
        Command::Selftest { inject_fault } => {
            let opts = SelftestOptions { seed: g.seed.unwrap_or(0), inject_gradient_fault: inject_fault, ..Default::default() };
            cmd_selftest(&opts, &mut out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
