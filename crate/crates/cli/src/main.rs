//! `specinterp`: replay transcripts, train n-gram models, validate fixtures
//! and type utterances into a live session.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use specinterp_core::engine::events_to_jsonl;
use specinterp_core::predictor::FixtureError;
use specinterp_core::stream::{parse_transcript, validate_config};
use specinterp_core::{
    join, replay, ContextDoc, EngineConfig, EventKind, LagProfile, NgramModel, NgramPredictor,
    PhraseTable, Predictor, RemotePredictor, ScriptedFixture, Session, TokenEvent,
};

#[derive(Parser)]
#[command(name = "specinterp", version, about = "Speculative simultaneous interpretation engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a transcript and write the event log and report.
    Run(RunArgs),
    /// Train an n-gram model from a whitespace-tokenized corpus.
    Train(TrainArgs),
    /// Type tokens into a live session; a blank line ends the utterance.
    Demo(EngineArgs),
    /// Check fixture files and list every violation.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Scripted,
    Ngram,
    Remote,
}

#[derive(Args)]
struct EngineArgs {
    /// Engine config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "scripted")]
    backend: Backend,
    /// Scripted prediction fixture (JSON).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Trained n-gram model (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Phrase table (TSV).
    #[arg(long)]
    phrase_table: Option<PathBuf>,
    /// Context document (JSON `{"id", "body"}`). Defaults to the first
    /// context in the scripted fixture.
    #[arg(long)]
    context: Option<PathBuf>,
    /// Base URL of a prediction service.
    #[arg(long)]
    endpoint: Option<String>,
    /// Per-request budget for the remote backend.
    #[arg(long, default_value_t = 500)]
    timeout_ms: u64,
    /// Continuation length for the n-gram backend.
    #[arg(long, default_value_t = 4)]
    horizon: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Events delivered per tick, e.g. `3,1`; the last count repeats.
    #[arg(long, default_value = "1")]
    lag_profile: LagProfile,
    /// Event log path (JSON lines); stdout when absent.
    #[arg(long)]
    out_events: Option<PathBuf>,
    /// Report path (JSON); stdout when absent.
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Output model path.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Files to check; the kind is inferred from the extension and content.
    paths: Vec<PathBuf>,
    #[arg(long)]
    transcript: Vec<PathBuf>,
    #[arg(long)]
    fixtures: Vec<PathBuf>,
    #[arg(long)]
    phrase_table: Vec<PathBuf>,
    #[arg(long)]
    config: Vec<PathBuf>,
    #[arg(long)]
    context: Vec<PathBuf>,
    #[arg(long)]
    corpus: Vec<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Writes via a sibling temp file and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot write to {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

struct Engine {
    config: EngineConfig,
    context: ContextDoc,
    predictor: Arc<dyn Predictor>,
    table: Arc<PhraseTable>,
}

impl Engine {
    fn load(args: &EngineArgs) -> Result<Self> {
        let config: EngineConfig = match &args.config {
            Some(p) => serde_json::from_str(&read(p)?)
                .with_context(|| format!("{}: invalid config", p.display()))?,
            None => EngineConfig::default(),
        };
        if let Err(v) = validate_config(&config) {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            bail!("invalid config: {}", list.join("; "));
        }
        let table = match &args.phrase_table {
            Some(p) => PhraseTable::parse(&read(p)?).with_context(|| p.display().to_string())?,
            None => PhraseTable::new(),
        };
        let table = Arc::new(table);
        let mut context = match &args.context {
            Some(p) => Some(
                serde_json::from_str::<ContextDoc>(&read(p)?)
                    .with_context(|| format!("{}: invalid context", p.display()))?,
            ),
            None => None,
        };
        let predictor: Arc<dyn Predictor> = match args.backend {
            Backend::Scripted => {
                let p = args
                    .fixtures
                    .as_ref()
                    .context("--backend scripted needs --fixtures")?;
                let fx = ScriptedFixture::parse(&read(p)?).with_context(|| p.display().to_string())?;
                if context.is_none() {
                    context = fx.contexts().first().cloned();
                }
                Arc::new(fx)
            }
            Backend::Ngram => {
                let p = args.model.as_ref().context("--backend ngram needs --model")?;
                let model = NgramModel::from_json(&read(p)?).with_context(|| p.display().to_string())?;
                Arc::new(NgramPredictor::new(Arc::new(model), table.clone(), args.horizon))
            }
            Backend::Remote => {
                let url = args
                    .endpoint
                    .as_deref()
                    .context("--backend remote needs --endpoint")?;
                Arc::new(RemotePredictor::new(url, args.timeout_ms))
            }
        };
        Ok(Self {
            config,
            context: context.unwrap_or_default(),
            predictor,
            table,
        })
    }

    fn session(&self) -> Result<Session> {
        Ok(Session::start(
            self.config.clone(),
            self.context.clone(),
            self.predictor.clone(),
            self.table.clone(),
        )?)
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let transcript = parse_transcript(&read(&args.transcript)?)
        .with_context(|| args.transcript.display().to_string())?;
    let engine = Engine::load(&args.engine)?;
    let mut session = engine.session()?;
    let outcome = replay(&mut session, &transcript, &args.lag_profile)?;
    let log = events_to_jsonl(&outcome.events);
    let report = serde_json::to_string_pretty(&outcome.report)? + "\n";
    match &args.out_events {
        Some(p) => write_atomic(p, &log)?,
        None => print!("{log}"),
    }
    match &args.out_report {
        Some(p) => write_atomic(p, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let corpus = NgramModel::parse_corpus(&read(&args.corpus)?);
    let model = NgramModel::train(&corpus, args.order, args.alpha)
        .with_context(|| args.corpus.display().to_string())?;
    write_atomic(&args.model, &model.to_json())
}

fn cmd_demo(args: EngineArgs) -> Result<()> {
    let engine = Engine::load(&args)?;
    let mut session = engine.session()?;
    let mut index = 0usize;
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout().lock();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let eof = input.read_until(b'\n', &mut buf)? == 0;
        let line = match String::from_utf8(buf.clone()) {
            Ok(l) => l,
            Err(_) => {
                eprintln!("warning: skipping a line that is not valid UTF-8");
                continue;
            }
        };
        let toks = specinterp_core::tokens(&line);
        if toks.is_empty() {
            if index > 0 {
                session.finish(index as u64 * 100);
                writeln!(out, "final: {}", join(session.emitted()))?;
                let report = session.report(None);
                writeln!(out, "report: {}", serde_json::to_string(&report)?)?;
                session = engine.session()?;
                index = 0;
            }
            if eof {
                return Ok(());
            }
            continue;
        }
        for tok in toks {
            let ev = TokenEvent {
                index,
                surface: tok,
                t_ms: index as u64 * 100,
                is_final: false,
            };
            index += 1;
            for e in session.feed(ev)? {
                match e.kind {
                    EventKind::Emit { toks } => writeln!(out, "emit: {}", join(&toks))?,
                    other => writeln!(out, "event: {}", serde_json::to_string(&other)?)?,
                }
            }
            write!(out, "{}", session.tree().dump())?;
            writeln!(out, "template: {}", session.template())?;
        }
        out.flush()?;
    }
}

enum Kind {
    Transcript,
    Fixture,
    PhraseTable,
    Config,
    Context,
    Corpus,
}

fn infer_kind(path: &Path, text: &str) -> Kind {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => Kind::Transcript,
        Some("tsv") => Kind::PhraseTable,
        Some("txt") => Kind::Corpus,
        _ if text.contains("\"entries\"") => Kind::Fixture,
        _ if text.contains("\"body\"") || text.contains("\"id\"") => Kind::Context,
        _ => Kind::Config,
    }
}

fn check(kind: Kind, text: &str) -> Vec<String> {
    match kind {
        Kind::Transcript => match parse_transcript(text) {
            Ok(_) => Vec::new(),
            Err(e) => vec![e.to_string()],
        },
        Kind::Fixture => ScriptedFixture::lint(text)
            .iter()
            .map(FixtureError::to_string)
            .collect(),
        Kind::PhraseTable => PhraseTable::lint(text).iter().map(ToString::to_string).collect(),
        Kind::Config => match serde_json::from_str::<EngineConfig>(text) {
            Ok(cfg) => match validate_config(&cfg) {
                Ok(()) => Vec::new(),
                Err(v) => v.iter().map(ToString::to_string).collect(),
            },
            Err(e) => vec![format!("invalid config: {e}")],
        },
        Kind::Context => match serde_json::from_str::<ContextDoc>(text) {
            Ok(_) => Vec::new(),
            Err(e) => vec![format!("invalid context: {e}")],
        },
        Kind::Corpus if NgramModel::parse_corpus(text).is_empty() => {
            vec!["corpus has no sentences".to_string()]
        }
        Kind::Corpus => Vec::new(),
    }
}

fn cmd_validate(args: ValidateArgs) -> Result<bool> {
    let mut jobs: Vec<(PathBuf, Option<Kind>)> = Vec::new();
    jobs.extend(args.paths.into_iter().map(|p| (p, None)));
    jobs.extend(args.transcript.into_iter().map(|p| (p, Some(Kind::Transcript))));
    jobs.extend(args.fixtures.into_iter().map(|p| (p, Some(Kind::Fixture))));
    jobs.extend(args.phrase_table.into_iter().map(|p| (p, Some(Kind::PhraseTable))));
    jobs.extend(args.config.into_iter().map(|p| (p, Some(Kind::Config))));
    jobs.extend(args.context.into_iter().map(|p| (p, Some(Kind::Context))));
    jobs.extend(args.corpus.into_iter().map(|p| (p, Some(Kind::Corpus))));
    if jobs.is_empty() {
        bail!("nothing to validate");
    }
    let mut clean = true;
    for (path, kind) in jobs {
        let problems = match read(&path) {
            Ok(text) => check(kind.unwrap_or_else(|| infer_kind(&path, &text)), &text),
            Err(e) => vec![format!("{e:#}")],
        };
        if problems.is_empty() {
            println!("{}: ok", path.display());
        }
        for p in &problems {
            println!("{}: {p}", path.display());
        }
        clean &= problems.is_empty();
    }
    Ok(clean)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(a) => cmd_run(a).map(|()| true),
        Cmd::Train(a) => cmd_train(a).map(|()| true),
        Cmd::Demo(a) => cmd_demo(a).map(|()| true),
        Cmd::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
