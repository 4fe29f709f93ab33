use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod offline;
mod remote;

#[derive(Debug, Parser)]
#[command(name = "floorspace", version, about = "Conversational floor detection and per-listener mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a floor model from labeled corpora.
    Train(TrainArgs),
    /// Measure detection accuracy on a labeled corpus.
    Eval(EvalArgs),
    /// Generate a synthetic labeled corpus.
    Simulate(SimulateArgs),
    /// Run a corpus through the live pipeline faster than real time.
    Replay(ReplayArgs),
    /// Run the real-time server until interrupted.
    Serve(ServeArgs),
    /// Render what one listener would have heard.
    Mixdown(MixdownArgs),
    /// Show a running server's participants and configuration.
    Status(ServerArg),
    /// List a running server's configuration changes.
    Events(EventsArgs),
    /// Pin a running server's configuration.
    Pin(PinArgs),
    /// Release a pin on a running server.
    Unpin(UnpinArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled corpus files; instances from all of them are pooled.
    #[arg(long, required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Spacing of training samples in ms.
    #[arg(long, default_value_t = floorspace_core::learner::DEFAULT_SAMPLE_PERIOD_MS, value_parser = clap::value_parser!(i64).range(1..))]
    sample_period: i64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model file; not needed with --oracle.
    #[arg(long, required_unless_present = "oracle")]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    /// Write the full text report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the per-period chosen and true partitions as TSV here.
    #[arg(long)]
    timeline: Option<PathBuf>,
    /// Feed ground truth in as posteriors instead of a model.
    #[arg(long, conflicts_with = "model")]
    oracle: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Generator configuration (TOML).
    #[arg(long)]
    gen_config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write one tone-burst WAV per participant next to the corpus.
    #[arg(long)]
    tones: bool,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Write the configuration-change log as JSON here.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Server configuration (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    address: Option<std::net::IpAddr>,
    /// HTTP API port.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    audio_port: Option<u16>,
    #[arg(long)]
    control_port: Option<u16>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    normal_gain: Option<f64>,
    #[arg(long)]
    quiet_gain: Option<f64>,
    #[arg(long)]
    eval_period_ms: Option<i64>,
    #[arg(long)]
    max_participants: Option<usize>,
}

#[derive(Debug, Args)]
struct MixdownArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    listener: String,
    #[arg(long)]
    out: PathBuf,
    /// Directory holding `<corpus stem>.<participant>.wav`; defaults to the
    /// corpus's directory.
    #[arg(long)]
    audio_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServerArg {
    /// Base URL of the server's HTTP API.
    #[arg(long, default_value = "http://127.0.0.1:7400")]
    server: String,
}

#[derive(Debug, Args)]
struct EventsArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Index of the first change to list.
    #[arg(long, default_value_t = 0)]
    since: usize,
}

#[derive(Debug, Args)]
struct PinArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Participant who owns the pin.
    #[arg(long)]
    owner: String,
    /// One floor as comma-separated names; repeat for each floor.
    #[arg(long = "floor", required = true, value_delimiter = ';')]
    floors: Vec<String>,
}

#[derive(Debug, Args)]
struct UnpinArgs {
    #[command(flatten)]
    server: ServerArg,
    #[arg(long)]
    owner: String,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => offline::train(&a.corpus, &a.out, a.sample_period),
        Command::Eval(a) => offline::eval(&a),
        Command::Simulate(a) => offline::simulate(&a.gen_config, &a.out, a.tones),
        Command::Replay(a) => offline::replay(&a.corpus, &a.model, a.events.as_deref()),
        Command::Mixdown(a) => offline::mixdown(&a),
        Command::Serve(a) => remote::serve(a),
        Command::Status(a) => remote::status(&a.server),
        Command::Events(a) => remote::events(&a.server.server, a.since),
        Command::Pin(a) => remote::pin(&a.server.server, &a.owner, &a.floors),
        Command::Unpin(a) => remote::unpin(&a.server.server, &a.owner),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            // keep the diagnostic to its first line; usage hints follow it
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: bad arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
