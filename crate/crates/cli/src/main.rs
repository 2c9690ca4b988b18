use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use papertab_cli::config::{self, parse_override};
use papertab_cli::run::{run, timing_summary, RunOptions};
use papertab_cli::synth::{load_scene, synthesize};
use papertab_cli::CliResult;
use toml::Value;

/// Turns an angled webcam view of a handwritten page into a clean,
/// top-down stream of the writing.
#[derive(Parser)]
#[command(name = "papertab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a frame sequence.
    Run(RunArgs),
    /// Render a synthetic scene description into frames.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Directory of numbered PNG frames, or a Y4M file.
    #[arg(long)]
    input: PathBuf,
    /// Directory for rendered pages and the event log.
    #[arg(long)]
    output: PathBuf,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set threshold.window=25`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, Value)>,
    #[arg(long, value_parser = ["left", "right"])]
    handedness: Option<String>,
    /// Write per-stage intermediate images here.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Serve the canvas as MJPEG on this port.
    #[arg(long)]
    preview_port: Option<u16>,
    #[arg(long, value_parser = ["per-frame", "canvas", "both"])]
    mode: Option<String>,
    #[arg(long, value_parser = ["image-sequence", "raw-video"])]
    format: Option<String>,
    #[arg(long, value_parser = ["none", "a4", "letter"])]
    fixed_aspect: Option<String>,
    #[arg(long)]
    page_width: Option<usize>,
    /// Event log path; defaults to `events.jsonl` in the output directory.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Frames processed together; 0 matches the worker count.
    #[arg(long, default_value_t = 0)]
    batch: usize,
}

impl RunArgs {
    /// Named flags, applied after `--set`.
    fn overrides(&self) -> Vec<(String, Value)> {
        let mut o = self.set.clone();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("handedness", self.handedness.clone().map(Value::String));
        put("preview_port", self.preview_port.map(|p| Value::Integer(p.into())));
        put("output.mode", self.mode.clone().map(Value::String));
        put("output.format", self.format.clone().map(Value::String));
        put("output.fixed_aspect", self.fixed_aspect.clone().map(Value::String));
        put("output.page_width", self.page_width.map(|w| Value::Integer(w as i64)));
        o
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 1)]
    frames: u64,
    /// Output directory for PNG frames, or a `.y4m` file.
    #[arg(long)]
    output: PathBuf,
    /// Mirror every frame left to right.
    #[arg(long)]
    mirror: bool,
}

fn main_inner(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = config::load(args.config.as_deref(), &args.overrides())?;
            let opts = RunOptions {
                input: args.input,
                output: args.output,
                events: args.events,
                diagnostics: args.diagnostics,
                batch: args.batch,
            };
            let report = run(&cfg, &opts)?;
            eprint!("{}", timing_summary(&report.times));
            eprintln!("{} events", report.events);
            Ok(())
        }
        Command::Synth(args) => {
            let spec = load_scene(&args.scene)?;
            synthesize(&spec, args.frames, &args.output, args.mirror)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("papertab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
