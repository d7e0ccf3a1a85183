use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proviq_core::harness::{
    answer_question, edit_video, evaluate, load_dataset, summarize_video, track_video, write_eval_outputs, Attempt,
    EditMode, EvalOutcome, HarnessConfig, HarnessError, QuestionInput, Runtime,
};
use proviq_core::interpreter::{ExecTrace, TraceOutcome};
use proviq_core::tracker::write_track_export;

const EXIT_GENERATION: u8 = 2;
const EXIT_MODULE: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "proviq", version, about = "Answer questions about videos by generating and running small programs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Harness config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra mock world file or directory; repeatable.
    #[arg(long = "mock-world", global = true)]
    mock_world: Vec<PathBuf>,
    /// Directory of stored programs (`<question_id>.pvql`).
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Seed for configured fault injection.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct QuestionArgs {
    /// Mock world id or frame directory.
    #[arg(long)]
    video: String,
    #[arg(long)]
    question: String,
    /// Answer option for multiple-choice questions; repeatable.
    #[arg(long = "option")]
    options: Vec<String>,
    /// Question type, for type-restricted answer matching.
    #[arg(long = "type")]
    question_type: Option<String>,
    /// Fixture key; defaults to the prompt fingerprint.
    #[arg(long)]
    question_id: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question about one video.
    Query {
        #[command(flatten)]
        q: QuestionArgs,
        /// Print the program and the per-statement trace.
        #[arg(long)]
        explain: bool,
        /// Print the prompt and program without executing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Evaluate a JSON-lines benchmark.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for the report, records and traces.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut or keep the parts of a video where a yes/no predicate holds.
    Edit {
        #[arg(long)]
        video: String,
        #[arg(long)]
        predicate: String,
        #[arg(long, value_enum, default_value = "remove-matching")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track every instance of an object through a video.
    Track {
        #[arg(long)]
        video: String,
        #[arg(long)]
        object: String,
        /// Track export (JSON lines); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Narrative summary of a long video.
    Summarize {
        #[arg(long)]
        video: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the generation prompt and the program it yields.
    GenProgram {
        #[command(flatten)]
        q: QuestionArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    RemoveMatching,
    KeepMatching,
}

enum Failure {
    Config(String),
    Generation(String),
    Module(String),
    Io(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn runtime(common: &Common) -> Result<Runtime, Failure> {
    let mut config = match &common.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    config.mock_worlds.extend(common.mock_world.iter().cloned());
    if let Some(f) = &common.fixtures {
        config.fixtures = Some(f.clone());
    }
    if let Some(seed) = common.seed {
        config.faults.iter_mut().for_each(|f| f.seed = seed);
    }
    Ok(Runtime::new(config)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_trace(trace: &ExecTrace) {
    println!("-- trace");
    for e in &trace.entries {
        let ms = e.duration_ms.map(|d| format!(" {d:.1}ms")).unwrap_or_default();
        println!("[{}] line {} {}: {} ({} calls{ms})", e.stmt, e.line, e.op, e.args, e.calls.len());
    }
    match &trace.outcome {
        TraceOutcome::Ok { value } => println!("-> {value}"),
        TraceOutcome::Error { error } => println!("!! {error}"),
    }
}

fn report_attempt(a: &Attempt, explain: bool) -> Result<(), Failure> {
    if explain {
        if let Some(p) = &a.program {
            println!("-- program\n{}", p.trim_end());
        }
        if let Some(t) = &a.trace {
            print_trace(t);
        }
    }
    match a.failure {
        Some(EvalOutcome::GenerationFailure) => {
            let mut msg = a.error.clone().unwrap_or_default();
            if let Some(g) = &a.generation_error {
                for d in &g.diagnostics {
                    msg.push_str(&format!("\n  {d}"));
                }
            }
            Err(Failure::Generation(msg))
        }
        Some(EvalOutcome::ModuleFailure) => Err(Failure::Module(a.error.clone().unwrap_or_default())),
        Some(EvalOutcome::PostprocessMismatch) => {
            log::warn!("{}", a.error.as_deref().unwrap_or("output could not be matched"));
            println!("{}", a.raw_output.as_deref().unwrap_or(""));
            Ok(())
        }
        _ => {
            println!("{}", a.answer.as_deref().unwrap_or(""));
            Ok(())
        }
    }
}

fn question<'a>(q: &'a QuestionArgs, video_id: &'a str) -> QuestionInput<'a> {
    QuestionInput {
        question_id: q.question_id.as_deref(),
        video_id,
        question: &q.question,
        question_type: q.question_type.as_deref(),
        options: (!q.options.is_empty()).then_some(q.options.as_slice()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut rt = runtime(&cli.common)?;
    match &cli.command {
        Command::Query { q, explain, dry_run } => {
            let video_id = rt.resolve_video(&q.video)?;
            let attempt = answer_question(&rt, question(q, &video_id), *dry_run)?;
            if *dry_run {
                println!("-- prompt {}\n{}", attempt.bundle.fingerprint, attempt.bundle.text);
                println!("-- program\n{}", attempt.program.as_deref().unwrap_or("").trim_end());
                return match attempt.failure {
                    Some(EvalOutcome::GenerationFailure) => report_attempt(&attempt, false),
                    _ => Ok(()),
                };
            }
            report_attempt(&attempt, *explain)
        }
        Command::GenProgram { q } => {
            let attempt = answer_question(&rt, question(q, &q.video), true)?;
            println!("-- prompt {}\n{}", attempt.bundle.fingerprint, attempt.bundle.text);
            println!("-- program\n{}", attempt.program.as_deref().unwrap_or("").trim_end());
            match attempt.failure {
                Some(EvalOutcome::GenerationFailure) => report_attempt(&attempt, false),
                _ => Ok(()),
            }
        }
        Command::Eval { dataset, out } => {
            let records = load_dataset(dataset)?;
            let (report, records) = evaluate(&rt, &records)?;
            write_eval_outputs(out, &report, &records)?;
            print!("{}", report.to_json());
            Ok(())
        }
        Command::Edit { video, predicate, mode, out } => {
            let id = rt.resolve_video(video)?;
            let clip = rt.video(&id)?.full_clip();
            let mode = match mode {
                Mode::RemoveMatching => EditMode::RemoveMatching,
                Mode::KeepMatching => EditMode::KeepMatching,
            };
            let result = edit_video(&rt.session(), &clip, predicate, mode).map_err(|e| Failure::Module(e.to_string()))?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&result).expect("serializes") + "\n"))
        }
        Command::Track { video, object, out } => {
            let id = rt.resolve_video(video)?;
            let clip = rt.video(&id)?.full_clip();
            let run = track_video(&rt, &clip, object).map_err(|e| Failure::Module(e.to_string()))?;
            let mut export = Vec::new();
            write_track_export(&run.tracks, &mut export).expect("writes to memory");
            let summary = serde_json::to_string_pretty(&run.summary).expect("serializes") + "\n";
            match out {
                Some(p) => {
                    fs::write(p, &export).map_err(|e| io_err(p, e))?;
                    print!("{summary}");
                }
                None => {
                    io::stdout().write_all(&export).map_err(|e| Failure::Io(e.to_string()))?;
                    eprint!("{summary}");
                }
            }
            Ok(())
        }
        Command::Summarize { video, out } => {
            let id = rt.resolve_video(video)?;
            let source = rt.video(&id)?;
            let export = summarize_video(&rt, &source).map_err(|e| Failure::Module(e.to_string()))?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&export).expect("serializes") + "\n"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, "config error", m),
                Failure::Generation(m) => (EXIT_GENERATION, "generation_failure", m),
                Failure::Module(m) => (EXIT_MODULE, "module_failure", m),
                Failure::Io(m) => (1, "error", m),
            };
            eprintln!("proviq: {kind}: {msg}");
            ExitCode::from(code)
        }
    }
}
