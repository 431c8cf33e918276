//! `ultron`: encode, decode, evaluate and synthesize mesh sequences.

mod config;
mod decode;
mod encode;
mod eval;
mod frames;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ultron_core::mesh::{MeshError, MeshFormat};
use ultron_core::pipeline::PipelineError;
use ultron_core::registration::RegistrationError;
use ultron_core::CodecError;

/// Bad arguments, missing inputs or an unusable config.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "ultron", version, about = "Compress animated triangle-mesh sequences")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment a frame sequence and write a `.ultn` container.
    Encode(encode::EncodeArgs),
    /// Expand a container back into mesh files.
    Decode(decode::DecodeArgs),
    /// Compare decoded frames with the originals.
    Eval(eval::EvalArgs),
    /// Write a synthetic animated sequence with ground-truth motion.
    Synth(synth::SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Obj,
    Ply,
    PlyBinary,
}

impl From<OutputFormat> for MeshFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Obj => MeshFormat::Obj,
            OutputFormat::Ply => MeshFormat::PlyAscii,
            OutputFormat::PlyBinary => MeshFormat::PlyBinary,
        }
    }
}

/// Picks the output format: the flag, else the pattern's extension, else OBJ.
pub fn output_format(flag: Option<OutputFormat>, pattern: &str) -> MeshFormat {
    if let Some(f) = flag {
        return f.into();
    }
    match PathBuf::from(pattern).extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => MeshFormat::PlyBinary,
        _ => MeshFormat::Obj,
    }
}

const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_CONTAINER: u8 = 5;

/// Maps the first recognised cause in the chain to an exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<CodecError>() {
            return EXIT_CONTAINER;
        }
        if cause.is::<RegistrationError>() {
            return EXIT_SOLVER;
        }
        if cause.is::<MeshError>() {
            return EXIT_PARSE;
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return match p {
                PipelineError::Frame { .. } => EXIT_PARSE,
                PipelineError::Registration { .. } => EXIT_SOLVER,
                PipelineError::NoFrames | PipelineError::InvalidConfig(_) => EXIT_USAGE,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Encode(a) => encode::run(a),
        Command::Decode(a) => decode::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Synth(a) => synth::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
