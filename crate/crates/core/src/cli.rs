//! Command-line entry points: `serve`, `replay`, `report` and `synth`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::layout::LayoutParams;
use crate::metrics::{attach_originality, SessionAnalysis};
use crate::model::{Mode, SceneState, Slot, TransitionMode};
use crate::organizer::{ChatCompletionsProvider, InferenceProvider, MockProvider, TopicConfig};
use crate::service::{Hub, HubConfig};
use crate::session_log::{Durability, SessionFile};
use crate::synth::{generate, SynthParams};

#[derive(Debug, Parser)]
#[command(name = "islands", version, about = "Idea landscape engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the WebSocket/HTTP service.
    Serve(ServeArgs),
    /// Replay a session log, print a summary and write the final snapshot.
    Replay {
        log: PathBuf,
        /// Snapshot destination (default: `<log>.snapshot.json`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute metrics over a session log.
    Report {
        log: PathBuf,
        /// CSV of `utterance_id,score` originality annotations.
        #[arg(long)]
        originality: Option<PathBuf>,
        /// Also write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic session log.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransitionArg {
    Walk,
    Dive,
}

impl From<TransitionArg> for TransitionMode {
    fn from(t: TransitionArg) -> Self {
        match t {
            TransitionArg::Walk => TransitionMode::Walk,
            TransitionArg::Dive => TransitionMode::Dive,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ISLANDS_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Preset name or path to a topic TOML file.
    #[arg(long, env = "ISLANDS_TOPIC", default_value = "study2-sustainability")]
    pub topic: String,
    #[arg(long, env = "ISLANDS_PROVIDER", value_enum, default_value = "mock")]
    pub provider: ProviderKind,
    #[arg(long, env = "ISLANDS_LOG_DIR")]
    pub log_dir: Option<PathBuf>,
    /// Layout parameter TOML file.
    #[arg(long, env = "ISLANDS_PARAMS")]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dive")]
    pub transition: TransitionArg,
    /// Chat-completions endpoint for `--provider live`.
    #[arg(long, env = "ISLANDS_LLM_URL")]
    pub llm_url: Option<String>,
    #[arg(long, env = "ISLANDS_LLM_MODEL", default_value = "gpt-4o-mini")]
    pub llm_model: String,
    #[arg(long, env = "ISLANDS_LLM_API_KEY", hide_env_values = true)]
    pub llm_api_key: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub ideas: usize,
    #[arg(long, default_value_t = 10)]
    pub in_island: usize,
    #[arg(long, default_value_t = 5)]
    pub matched: usize,
    #[arg(long, default_value_t = 4)]
    pub categories: usize,
    #[arg(long, default_value_t = 600.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 300.0)]
    pub overview_seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated categories, one per idea, all in the overview.
    #[arg(long, value_delimiter = ',')]
    pub sequence: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(String),
    #[error("{path}: {detail}")]
    Log { path: PathBuf, detail: String },
    #[error("{0}")]
    Synth(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 3,
            CliError::Config(_) => 4,
            CliError::Log { .. } => 5,
            CliError::Synth(_) => 6,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_log(path: &Path) -> Result<SessionFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    SessionFile::parse(&text).map_err(|e| CliError::Log {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

pub fn build_provider(
    args: &ServeArgs,
    topic: &TopicConfig,
) -> Result<Arc<dyn InferenceProvider>, CliError> {
    match args.provider {
        ProviderKind::Mock => {
            let table = topic.keyword_table().ok_or_else(|| {
                CliError::Config(format!("topic {:?} has no [mock] keyword table", topic.id))
            })?;
            Ok(Arc::new(MockProvider::new(table)))
        }
        ProviderKind::Live => {
            let url = args.llm_url.clone().ok_or_else(|| {
                CliError::Config("--provider live needs --llm-url or ISLANDS_LLM_URL".into())
            })?;
            Ok(Arc::new(ChatCompletionsProvider::new(
                url,
                args.llm_model.clone(),
                args.llm_api_key.clone(),
            )))
        }
    }
}

pub fn hub_config(args: &ServeArgs) -> Result<HubConfig, CliError> {
    let topic = TopicConfig::resolve(&args.topic).map_err(|e| CliError::Config(e.to_string()))?;
    let params = match &args.params {
        Some(path) => LayoutParams::load(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => LayoutParams::default(),
    };
    if let Some(dir) = &args.log_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(HubConfig {
        provider: build_provider(args, &topic)?,
        topic,
        params,
        transition: args.transition.into(),
        log_dir: args.log_dir.clone(),
        durability: Durability::Sync,
    })
}

/// Human-readable summary of a replayed session.
pub fn replay_summary(file: &SessionFile, state: &SceneState) -> String {
    let mode = match state.mode() {
        Mode::Overview => "overview".to_string(),
        Mode::Immersed(id) => format!("immersed({id})"),
    };
    let mut out = String::new();
    out.push_str(&format!("topic={}\n", state.topic_config_id));
    out.push_str(&format!("events={}\n", file.events.len()));
    out.push_str(&format!("last_seq={}\n", state.last_seq));
    out.push_str(&format!("islands={}\n", state.islands.len()));
    out.push_str(&format!("trees={}\n", state.tree_count));
    out.push_str(&format!("mode={mode}\n"));
    out.push_str(&format!("ended={}\n", state.ended));
    for island in &state.islands {
        let overflow = island
            .trees
            .iter()
            .filter(|t| t.slot == Slot::Overflow)
            .count();
        out.push_str(&format!(
            "island {} {:?} trees={} overflow={}\n",
            island.id.0,
            island.category.name(),
            island.trees.len(),
            overflow
        ));
    }
    out
}

/// Runs a non-serve command, writing its report to `stdout`.
pub fn run(command: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    let emit = |stdout: &mut dyn Write, text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(io_err(Path::new("<stdout>")))
    };
    match command {
        Command::Serve(args) => {
            let config = hub_config(&args)?;
            let runtime = tokio::runtime::Runtime::new().map_err(io_err(Path::new("<runtime>")))?;
            runtime
                .block_on(crate::service::serve(Hub::new(config), &args.listen))
                .map_err(|source| CliError::Io {
                    path: PathBuf::from(&args.listen),
                    source,
                })
        }
        Command::Replay { log, out } => {
            let file = load_log(&log)?;
            let state = file.replay().map_err(|e| CliError::Log {
                path: log.clone(),
                detail: e.to_string(),
            })?;
            let summary = replay_summary(&file, &state);
            let out = out.unwrap_or_else(|| {
                let mut name = log.clone().into_os_string();
                name.push(".snapshot.json");
                PathBuf::from(name)
            });
            write_file(
                &out,
                &serde_json::to_string_pretty(&state).expect("state serializes"),
            )?;
            emit(stdout, &summary)
        }
        Command::Report {
            log,
            originality,
            out,
        } => {
            let file = load_log(&log)?;
            let mut analysis = SessionAnalysis::from_events(&file.events, None);
            if let Some(csv) = originality {
                let text = std::fs::read_to_string(&csv).map_err(io_err(&csv))?;
                attach_originality(&mut analysis.ideas, &text)
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            let report = analysis.report();
            if let Some(out) = out {
                write_file(&out, &report.to_json())?;
            }
            emit(stdout, &report.to_text())
        }
        Command::Synth(args) => {
            let params = SynthParams {
                ideas: args.sequence.as_ref().map_or(args.ideas, Vec::len),
                in_island: args.in_island,
                matched: args.matched,
                categories: args.categories,
                duration: args.duration,
                overview_seconds: args.overview_seconds,
                seed: args.seed,
                sequence: args.sequence,
            };
            let params = if let Some(seq) = &params.sequence {
                let names: Vec<&str> = seq.iter().map(String::as_str).collect();
                SynthParams::sequence(&names, params.duration)
            } else {
                params
            };
            let file = generate(&params).map_err(|e| CliError::Synth(e.to_string()))?;
            write_file(&args.out, &file.to_text())?;
            emit(
                stdout,
                &format!(
                    "wrote {} events to {}\n",
                    file.events.len(),
                    args.out.display()
                ),
            )
        }
    }
}
