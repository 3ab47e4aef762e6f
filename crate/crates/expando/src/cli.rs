//! Command-line interface. Errors are printed to stderr as an [`ApiError`]
//! JSON body and mapped to the exit code of their error code.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use expando_core::annotate::AccuracyReport;
use expando_core::engine::ExpansionRequest;
use expando_core::tree::{ExpansionNode, QuestionKind, ROOT_ID};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::api::{ApiError, ErrorCode};
use crate::app::{App, ExpansionResult};
use crate::config::Config;
use crate::eval;
use crate::store::read_expansion_log;

#[derive(Debug, Parser)]
#[command(name = "expando", version, about = "Expandable abstracts over ingested papers")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "EXPANDO_CONFIG")]
    pub config: Option<PathBuf>,
    /// Data directory; overrides the configuration.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a PDF, parser-output JSON or canonical-document JSON.
    Ingest {
        path: PathBuf,
        /// Canned-response fixture used instead of a chat endpoint.
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    /// Answer a question about a span and add it to a tree.
    Expand(ExpandArgs),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub paper: String,
    /// Exact text of the span; its first occurrence in the parent is used.
    #[arg(long)]
    pub anchor: String,
    /// `define`, `expand`, `why`, `suggested`, or any other text as a custom question.
    #[arg(long)]
    pub question: String,
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Tree to extend; defaults to `<paper>-cli`.
    #[arg(long)]
    pub tree: Option<String>,
    /// Node whose text holds the span; defaults to the abstract.
    #[arg(long, default_value = ROOT_ID)]
    pub parent: String,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Compare indexed top-k against a linear scan.
    Retrieval {
        #[arg(long)]
        paper: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 12)]
        k: usize,
        /// Reject the run unless the index has this dimension.
        #[arg(long)]
        query_dim: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Annotate a stratified sample of logged expansions.
    Annotate {
        /// Expansion log; defaults to the data directory's log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 120)]
        sample: usize,
        #[arg(long, default_value_t = 25)]
        per_question: usize,
        /// JSON-lines `{node_id, verdict}`; prompts on stdin when absent.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// What `expand` prints on success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandDelta {
    pub tree_id: String,
    pub paper_id: String,
    pub added: Vec<ExpansionNode>,
}

fn internal(message: impl Into<String>) -> ApiError {
    ApiError { internal: true, ..ApiError::new(ErrorCode::ValidationFailed, 500, message, false) }
}

fn load_config(cli: &Cli, mock: Option<&PathBuf>) -> Result<Config, ApiError> {
    let mut config = Config::load(cli.config.as_deref()).map_err(|e| ApiError::validation(e.to_string()))?;
    if let Some(d) = &cli.data {
        config.data_dir = d.clone();
    }
    if let Some(m) = mock {
        config.chat.mock_fixture = Some(m.clone());
    }
    Ok(config)
}

fn open_app(cli: &Cli, mock: Option<&PathBuf>) -> Result<App, ApiError> {
    let config = load_config(cli, mock)?;
    App::from_config(config).map_err(ApiError::from)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), ApiError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| internal(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| internal(e.to_string()))
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", serde_json::to_string(&e).unwrap_or_else(|_| e.to_string()));
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), ApiError> {
    match &cli.command {
        Command::Ingest { path, mock } => {
            let body = std::fs::read(path).map_err(|e| ApiError::not_found(format!("{}: {e}", path.display())))?;
            let app = open_app(cli, mock.as_ref())?;
            let summary = app.ingest_now(&body)?;
            print_json(out, &summary)
        }
        Command::Expand(args) => expand(cli, args, out),
        Command::Eval(EvalCommand::Retrieval { paper, trials, k, query_dim, seed }) => {
            let app = open_app(cli, None)?;
            let indices = app.snapshot();
            if !indices.chunks.contains_paper(paper) {
                return Err(ApiError::not_found(format!("paper '{paper}' is not indexed")));
            }
            let mut rng = StdRng::seed_from_u64(*seed);
            let report = eval::retrieval_check(&indices.chunks, paper, *trials, *k, *query_dim, &mut rng)
                .map_err(|e| ApiError::validation(e.to_string()))?;
            print_json(out, &report)?;
            if report.passed {
                Ok(())
            } else {
                Err(internal(format!("{} of {} rankings diverged", report.mismatched_rankings, report.trials)))
            }
        }
        Command::Eval(EvalCommand::Annotate { log, sample, per_question, verdicts, seed }) => {
            let log = match log {
                Some(l) => l.clone(),
                None => load_config(cli, None)?.data_dir.join("expansions.jsonl"),
            };
            if !log.exists() {
                return Err(ApiError::not_found(format!("{}: no such expansion log", log.display())));
            }
            let entries = read_expansion_log(&log).map_err(|e| ApiError::validation(e.to_string()))?;
            let mut rng = StdRng::seed_from_u64(*seed);
            let picked = eval::sample_for_annotation(&entries, *sample, *per_question, &mut rng)
                .map_err(|e| ApiError::validation(e.to_string()))?;
            let records = match verdicts {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| ApiError::not_found(format!("{}: {e}", path.display())))?;
                    let map = eval::parse_verdicts(&text).map_err(|e| ApiError::validation(e.to_string()))?;
                    eval::annotate_from_file(&picked, &map)
                }
                None => eval::annotate_interactive(&picked, &mut std::io::stdin().lock(), &mut std::io::stderr()),
            }
            .map_err(|e| ApiError::validation(e.to_string()))?;
            let report = AccuracyReport::from_verdicts(records.iter().map(|r| r.verdict));
            write!(out, "{}", eval::format_report(&report)).map_err(|e| internal(e.to_string()))
        }
        Command::Serve { bind } => {
            let app = Arc::new(open_app(cli, None)?);
            let bind = bind.clone().unwrap_or_else(|| app.config.service.bind.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| internal(e.to_string()))?;
            rt.block_on(crate::service::serve(app, &bind))
                .map_err(|e| internal(format!("cannot serve on {bind}: {e}")))
        }
    }
}

fn expand(cli: &Cli, args: &ExpandArgs, out: &mut dyn Write) -> Result<(), ApiError> {
    let app = open_app(cli, args.mock.as_ref())?;
    let tree_id = args.tree.clone().unwrap_or_else(|| format!("{}-cli", args.paper));
    let anchor = app.anchor_for_text(&args.paper, &tree_id, &args.parent, &args.anchor)?;
    let request = ExpansionRequest::new(anchor, QuestionKind::from_cli(&args.question));
    match app.create_expansion(&args.paper, &tree_id, &request)? {
        ExpansionResult::Created(view) => {
            print_json(out, &ExpandDelta { tree_id: view.tree_id, paper_id: view.paper_id, added: vec![view.node] })
        }
        ExpansionResult::NoAnswer(event) => Err(ApiError::new(
            ErrorCode::NoAnswer,
            200,
            format!("the paper does not answer '{}'", event.question),
            false,
        )),
    }
}
