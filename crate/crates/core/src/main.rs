use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ontodistill::gateway::{Gateway, GatewayMode, Transcript};
use ontodistill::ontology::{validate, ManualEdit, Ontology, ValidationPolicy};
use ontodistill::orchestrator::{
    run_task, AcceptAll, ControlCommand, DecisionScript, ExecutionMode, Iteration, ReviewDecision, Reviewer,
    RunOutcome, Session, SessionConfig,
};
use ontodistill::prompt::TaskKind;
use ontodistill::service::{seed_from_dot, AppState};
use ontodistill::store::{export, ExportFormat, SessionStore};

#[derive(Parser)]
#[command(name = "ontodistill", version, about = "Distill an ontology from a chat model, one reviewed step at a time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Hierarchy,
    Definition,
    Property,
    Relationship,
    All,
}

impl TaskArg {
    fn kinds(self) -> Vec<TaskKind> {
        match self {
            TaskArg::Hierarchy => vec![TaskKind::Hierarchy],
            TaskArg::Definition => vec![TaskKind::Definition],
            TaskArg::Property => vec![TaskKind::Property],
            TaskArg::Relationship => vec![TaskKind::Relationship],
            TaskArg::All => TaskKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Dot,
    Doc,
    Triples,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Strict,
    Permissive,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Supervised,
    Autonomous,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Live,
    Record,
    Replay,
}

#[derive(clap::Args)]
#[group(required = true, multiple = false)]
struct ControlAction {
    /// Restore the state after this task-local iteration (0 = task start).
    #[arg(long, value_name = "K")]
    revert: Option<usize>,
    #[arg(long)]
    repeat: bool,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    pause: bool,
    /// Accept the parked iteration (with --edits to correct it first).
    #[arg(long)]
    accept: bool,
    /// Mark an idle task completed.
    #[arg(long)]
    complete: bool,
    #[arg(long)]
    abort: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session directory.
    Init {
        /// Seed hierarchy (DOT).
        #[arg(long)]
        seed: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = ontodistill::prompt::DEFAULT_DOMAIN)]
        domain: String,
        /// Session configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Step one task (or all, in order) until it stops.
    Run {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        task: TaskArg,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Hierarchy iteration limit.
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long, value_enum)]
        transport: Option<TransportArg>,
        /// Transcript directory (holding transcript.jsonl) or file. Replay
        /// reads it; record writes it.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Review decisions (JSON) instead of terminal prompts.
        #[arg(long, conflicts_with = "accept_all")]
        decisions: Option<PathBuf>,
        /// Accept every parked iteration.
        #[arg(long)]
        accept_all: bool,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
    },
    /// Send a control command to a task.
    Control {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[command(flatten)]
        action: ControlAction,
        /// Edits (JSON array) applied with --accept.
        #[arg(long, requires = "accept")]
        edits: Option<PathBuf>,
        #[arg(long, value_enum)]
        transport: Option<TransportArg>,
        /// As for `run`; used when --repeat needs a response.
        #[arg(long)]
        transcripts: Option<PathBuf>,
    },
    /// Print the committed ontology.
    Export {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, value_enum, default_value = "doc")]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a canonical ontology document or a DOT file.
    Validate {
        file: PathBuf,
        /// Treat the file as DOT (detected from a .dot/.gv extension otherwise).
        #[arg(long)]
        dot: bool,
        #[arg(long, value_enum, default_value = "strict")]
        policy: PolicyArg,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long)]
        data_dir: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<SessionConfig> {
    match path {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(SessionConfig::default()),
    }
}

fn transcript_path(path: &Path) -> PathBuf {
    if path.is_dir() || path.extension().is_none() {
        path.join("transcript.jsonl")
    } else {
        path.to_path_buf()
    }
}

/// Gateway for a run: the session's configured transport unless overridden.
/// Replay answers from `--transcripts` or, failing that, the session's own
/// stored transcript.
fn gateway_for(
    session: &Session,
    stored: &Transcript,
    transport: Option<TransportArg>,
    transcripts: Option<&Path>,
) -> Result<Gateway> {
    let mut config = session.config.gateway.clone();
    if let Some(t) = transport {
        config.mode = match t {
            TransportArg::Live => GatewayMode::Live,
            TransportArg::Record => GatewayMode::Record,
            TransportArg::Replay => GatewayMode::Replay,
        };
    }
    let transcript = match (config.mode, transcripts) {
        (GatewayMode::Replay, Some(p)) => Transcript::from_jsonl(&read(&transcript_path(p))?)?,
        (GatewayMode::Replay, None) => stored.clone(),
        _ => Transcript::new(),
    };
    Ok(Gateway::from_config(config, transcript)?)
}

/// Transcript to keep with the session after a run, written to
/// `--transcripts` as well when recording.
fn settle_transcript(gateway: &Gateway, stored: Transcript, transcripts: Option<&Path>) -> Result<Transcript> {
    match gateway.mode() {
        GatewayMode::Record => {
            let recorded = gateway.transcript().clone();
            if let Some(p) = transcripts {
                let path = transcript_path(p);
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                std::fs::write(&path, recorded.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(recorded)
        }
        GatewayMode::Replay => Ok(gateway.transcript().clone()),
        GatewayMode::Live => Ok(stored),
    }
}

struct Deferring;

impl Reviewer for Deferring {
    fn review(&mut self, _: &Session, _: &Iteration) -> ReviewDecision {
        ReviewDecision::Defer
    }
}

/// Asks on the terminal about each parked iteration.
struct TerminalReviewer;

impl Reviewer for TerminalReviewer {
    fn review(&mut self, session: &Session, it: &Iteration) -> ReviewDecision {
        println!("\n== {} iteration {} ==", it.task, it.index);
        if let Some(pair) = &it.pair {
            println!("pair: {} / {}", pair.0, pair.1);
        }
        if !it.batch.is_empty() {
            let names: Vec<&str> = it.batch.iter().map(|c| c.as_str()).collect();
            println!("batch: {}", names.join(", "));
        }
        let d = &it.delta;
        println!(
            "delta: +{} -{} concepts, +{} -{} edges, +{} -{} triples, {} concepts changed",
            d.added_concepts.len(),
            d.removed_concepts.len(),
            d.added_edges.len(),
            d.removed_edges.len(),
            d.added_triples.len(),
            d.removed_triples.len(),
            d.updated_concepts.len()
        );
        println!("strict validation: {}", it.strict_validation.summary());
        if !it.quarantine.is_empty() {
            println!("quarantined lines: {}", it.quarantine.len());
        }
        println!("ontology now has {} concepts", session.ontology.len());
        let stdin = io::stdin();
        loop {
            print!("[a]ccept, [r]epeat, [e]dit <edits.json>, [s]top, [q]uit > ");
            io::stdout().flush().ok();
            let mut line = String::new();
            if stdin.lock().read_line(&mut line).unwrap_or(0) == 0 {
                return ReviewDecision::Abort;
            }
            let line = line.trim();
            match line.split_once(' ').map_or((line, ""), |(a, b)| (a, b.trim())) {
                ("a", _) => return ReviewDecision::Accept,
                ("r", _) => return ReviewDecision::Repeat,
                ("s", _) => return ReviewDecision::Complete,
                ("q", _) => return ReviewDecision::Abort,
                ("e", path) if !path.is_empty() => {
                    match read(Path::new(path))
                        .and_then(|t| serde_json::from_str::<Vec<ManualEdit>>(&t).map_err(Into::into))
                    {
                        Ok(edits) => return ReviewDecision::AcceptWithEdits { edits },
                        Err(e) => println!("{e:#}"),
                    }
                }
                _ => println!("unrecognized answer"),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init {
            seed,
            out,
            domain,
            config,
        } => {
            let store = SessionStore::new(&out);
            if store.exists() {
                bail!("{} already holds a session", out.display());
            }
            let config = load_config(config.as_deref())?;
            let seed = match seed {
                Some(p) => seed_from_dot(&read(&p)?, &config).map_err(anyhow::Error::msg)?,
                None => Ontology::new(),
            };
            let session = Session::new(&domain, seed, config)?;
            std::fs::create_dir_all(&out)?;
            store.save(&session, &Transcript::new())?;
            println!("{} {}", session.id, out.display());
        }
        Command::Run {
            session: dir,
            task,
            mode,
            max_iterations,
            transport,
            transcripts,
            decisions,
            accept_all,
            max_steps,
        } => {
            let store = SessionStore::new(&dir);
            let (mut session, stored) = store.load()?;
            if let Some(m) = mode {
                session.config.mode = match m {
                    ModeArg::Supervised => ExecutionMode::Supervised,
                    ModeArg::Autonomous => ExecutionMode::Autonomous,
                };
            }
            if let Some(n) = max_iterations {
                session.config.stopping.max_iterations = Some(n);
            }
            session.config.check()?;
            let mut gateway = gateway_for(&session, &stored, transport, transcripts.as_deref())?;
            let interactive = io::stdin().is_terminal();
            let mut reviewer: Box<dyn Reviewer> = match decisions {
                Some(path) => Box::new(DecisionScript::from_json(&read(&path)?)?),
                None if accept_all => Box::new(AcceptAll),
                None if interactive => Box::new(TerminalReviewer),
                // Nobody to ask: leave parked iterations for `control`.
                None => Box::new(Deferring),
            };
            let mut result: Result<()> = Ok(());
            for kind in task.kinds() {
                match run_task(&mut session, &mut gateway, kind, reviewer.as_mut(), max_steps) {
                    Ok(RunOutcome::Stopped { reason }) => println!("{kind}: stopped ({reason:?})"),
                    Ok(RunOutcome::Aborted) => {
                        println!("{kind}: aborted");
                        break;
                    }
                    Ok(RunOutcome::Deferred { iteration }) => {
                        let report = &session.iteration(iteration).expect("parked").strict_validation;
                        println!("{kind}: iteration {iteration} awaits review ({})", report.summary());
                        break;
                    }
                    Err(e) => {
                        result = Err(e.into());
                        break;
                    }
                }
            }
            let transcript = settle_transcript(&gateway, stored, transcripts.as_deref())?;
            store.save(&session, &transcript)?;
            println!(
                "ontology: {} concepts, {} triples, checksum {}",
                session.ontology.len(),
                session.ontology.triples().len(),
                session.ontology.checksum()
            );
            result?;
        }
        Command::Control {
            session: dir,
            task,
            action,
            edits,
            transport,
            transcripts,
        } => {
            let [kind] = task.kinds()[..] else {
                bail!("control needs a single task");
            };
            let store = SessionStore::new(&dir);
            let (mut session, stored) = store.load()?;
            let command = if let Some(k) = action.revert {
                ControlCommand::Revert { to_iteration: k }
            } else if action.repeat {
                ControlCommand::Repeat
            } else if action.resume {
                ControlCommand::Resume
            } else if action.pause {
                ControlCommand::Pause
            } else if action.accept {
                match edits {
                    Some(p) => ControlCommand::AcceptWithEdits {
                        edits: serde_json::from_str(&read(&p)?)?,
                    },
                    None => ControlCommand::Accept,
                }
            } else if action.complete {
                ControlCommand::Complete
            } else {
                ControlCommand::Abort
            };
            let mut gateway = gateway_for(&session, &stored, transport, transcripts.as_deref())?;
            let run = session.control(kind, command, &mut gateway)?;
            println!("{kind}: {:?}", run.status);
            let transcript = settle_transcript(&gateway, stored, transcripts.as_deref())?;
            store.save(&session, &transcript)?;
        }
        Command::Export { session, format, out } => {
            let (session, _) = SessionStore::new(&session).load()?;
            let format = match format {
                FormatArg::Dot => ExportFormat::Dot,
                FormatArg::Doc => ExportFormat::Doc,
                FormatArg::Triples => ExportFormat::Triples,
            };
            let text = export(&session.ontology, format, session.config.prompt.edge_direction);
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Validate { file, dot, policy } => {
            let text = read(&file)?;
            let is_dot = dot || matches!(file.extension().and_then(|e| e.to_str()), Some("dot" | "gv"));
            let ontology = if is_dot {
                seed_from_dot(&text, &SessionConfig::default()).map_err(anyhow::Error::msg)?
            } else {
                Ontology::from_canonical_json(&text)?
            };
            let policy = match policy {
                PolicyArg::Strict => ValidationPolicy::Strict,
                PolicyArg::Permissive => ValidationPolicy::Permissive,
            };
            let report = validate(&ontology, policy);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.is_clean() {
                bail!("{} violation(s)", report.violations.len());
            }
        }
        Command::Serve { addr, data_dir } => {
            std::fs::create_dir_all(&data_dir)?;
            let state = AppState::new().with_data_dir(data_dir)?;
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            runtime.block_on(ontodistill::service::serve(addr, state))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; domain errors exit with 1.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
