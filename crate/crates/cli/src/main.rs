use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use civet_cli::{
    CliError, EvaluateArgs, GenerateConfig, ReplayMode, ReportArgs, cmd_evaluate, cmd_generate, cmd_make_replay,
    cmd_report, cmd_serve,
};
use civet_core::question::Aspect;
use civet_core::world::{Setting, SizeClass, Vocabulary};
use civet_harness::{AdapterConfig, AdapterKind};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "civet", version, about = "Controlled visual stimuli for vision-language model evaluation")]
struct Cli {
    /// Log more (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate a setting, render its scenes and write question manifests.
    Generate {
        #[arg(long, value_parser = parse_setting)]
        setting: Setting,
        /// 336, 672 or 1344 (default 672, or 1344 for sprite scenes).
        #[arg(long)]
        image_size: Option<u32>,
        #[arg(long, value_parser = parse_size, default_value = "regular")]
        object_size: SizeClass,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Replace outputs of a different run in --out.
        #[arg(long)]
        overwrite: bool,
        /// Restrict to these aspects (repeatable).
        #[arg(long, value_parser = parse_aspect)]
        aspect: Vec<Aspect>,
        /// Directory with giraffe.png, elephant.png and zebra.png.
        #[arg(long)]
        sprites: Option<PathBuf>,
    },
    /// Query a model (or a replay file) for every stimulus in a manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        adapter: AdapterArg,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "model")]
        model: String,
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Requests in flight.
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 120)]
        timeout: u64,
        /// Responses file (default: next to the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory image paths are relative to (default: the manifest's).
        #[arg(long)]
        image_root: Option<PathBuf>,
    },
    /// Compute accuracy, F1, per-cell grids and position maps.
    Report {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long = "responses")]
        responses: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        heatmaps: bool,
        /// Object (e.g. "yellow star") for the position-assignment map.
        #[arg(long)]
        position_object: Option<String>,
        /// Annotation matrix exported by `serve`.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Run the annotation service for a campaign file.
    Serve {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Write an oracle or seeded random replay file for manifests.
    MakeReplay {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, value_enum)]
        mode: ReplayArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdapterArg {
    Chat,
    Embed,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReplayArg {
    Oracle,
    Random,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    Setting::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Setting::ALL.iter().map(|v| v.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_size(s: &str) -> Result<SizeClass, String> {
    SizeClass::parse(s).ok_or_else(|| "expected regular or small".into())
}

fn parse_aspect(s: &str) -> Result<Aspect, String> {
    Aspect::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Aspect::ALL.iter().map(|a| a.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            setting,
            image_size,
            object_size,
            seed,
            out,
            overwrite,
            aspect,
            sprites,
        } => {
            let summary = cmd_generate(&GenerateConfig {
                setting,
                image_size,
                object_size,
                seed,
                out,
                overwrite,
                aspects: (!aspect.is_empty()).then_some(aspect),
                sprites,
            })?;
            println!("{} scenes", summary.run.worlds);
            for (aspect, path, n) in &summary.manifests {
                println!("{:<18} {:>6}  {}", aspect.as_str(), n, path.display());
            }
        }
        Command::Evaluate {
            manifest,
            adapter,
            endpoint,
            model,
            replay,
            parallel,
            timeout,
            out,
            image_root,
        } => {
            let mut cfg = match adapter {
                AdapterArg::Replay => AdapterConfig::replay(
                    replay.ok_or_else(|| CliError::Config("--adapter replay needs --replay <file>".into()))?,
                ),
                AdapterArg::Chat | AdapterArg::Embed => {
                    let kind = match adapter {
                        AdapterArg::Chat => AdapterKind::ChatEndpoint,
                        _ => AdapterKind::EmbeddingEndpoint,
                    };
                    let endpoint =
                        endpoint.ok_or_else(|| CliError::Config("HTTP adapters need --endpoint <url>".into()))?;
                    AdapterConfig::http(kind, endpoint, model)
                }
            };
            cfg.parallel = parallel;
            cfg.timeout = Duration::from_secs(timeout);
            let summary = cmd_evaluate(&EvaluateArgs {
                manifest,
                adapter: cfg,
                out,
                image_root,
            })?;
            println!(
                "{} responses ({} new) -> {}",
                summary.total,
                summary.new,
                summary.out.display()
            );
            if summary.transport_errors > 0 {
                return Err(CliError::Transport(format!(
                    "{} stimuli failed after retries; rerun to retry them",
                    summary.transport_errors
                )));
            }
            if summary.input_errors > 0 {
                return Err(CliError::Input(format!("{} stimuli had input errors", summary.input_errors)));
            }
        }
        Command::Report {
            manifests,
            responses,
            out,
            heatmaps,
            position_object,
            annotations,
        } => {
            let report = cmd_report(&ReportArgs {
                manifests,
                responses,
                out: out.clone(),
                heatmaps,
                position_object,
                annotations,
            })?;
            if let Some(w) = &report.coverage.warning {
                println!("WARNING: {w}");
            }
            for a in &report.aspects {
                let acc = a.accuracy.map_or("-".to_string(), |v| format!("{v:.1}"));
                println!(
                    "{:<18} n={:<6} accuracy={:<6} baseline={:.1} other={:.1}",
                    a.aspect.as_str(),
                    a.n,
                    acc,
                    a.random_baseline,
                    a.other_rate
                );
            }
            println!("report written to {}", out.display());
        }
        Command::Serve { campaign, port, host } => cmd_serve(&campaign, host, port)?,
        Command::MakeReplay {
            manifests,
            mode,
            seed,
            out,
        } => {
            let mode = match mode {
                ReplayArg::Oracle => ReplayMode::Oracle,
                ReplayArg::Random => ReplayMode::Random { seed },
            };
            let n = cmd_make_replay(&manifests, mode, &out)?;
            println!("{n} replay records -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
