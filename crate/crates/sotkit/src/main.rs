use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sotkit::client::{HttpService, SystemClock};
use sotkit::{
    cmd_demo, cmd_eval, cmd_filter, cmd_gen, cmd_ingest, cmd_stats, GenMode, Overrides, PipelineConfig,
    PipelineError,
};

#[derive(Parser)]
#[command(name = "sotkit", version, about = "Build, filter and score Subtask-of-Thought corpora from scene graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    scene_graphs: Option<PathBuf>,
    #[arg(long, global = true)]
    questions: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Comma-separated IoU thresholds.
    #[arg(long, global = true, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Chat-completion URL for `gen-sot --mode llm` and the judge.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Prompt template with {{slot}} markers.
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    /// Attribute lexicon (tab-separated value and category).
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// Prediction corpus for `eval`.
    #[arg(long, global = true)]
    predictions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Offline,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Load scene graphs and questions and report what was found.
    Ingest,
    /// Generate one SoT per question.
    GenSot {
        #[arg(long, value_enum, default_value = "offline")]
        mode: Mode,
    },
    /// Apply the rejection rules to the generated corpus.
    Filter,
    /// QA-pair and SoT counts per split and question type.
    Stats,
    /// Score predictions against the questions.
    Eval {
        /// Also ask the configured endpoint to judge answers.
        #[arg(long)]
        judge: bool,
    },
    /// Print one question's SoT step by step.
    Demo { question_id: String },
}

fn config(c: Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(Overrides {
        scene_graphs: c.scene_graphs,
        questions: c.questions,
        out: c.out,
        lexicon: c.lexicon,
        template: c.template,
        predictions: c.predictions,
        seed: c.seed,
        workers: c.workers,
        thresholds: c.thresholds,
        max_steps: c.max_steps,
        endpoint: c.endpoint,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let cfg = config(cli.common)?;
    match cli.command {
        Command::Ingest => {
            let r = cmd_ingest(&cfg)?;
            println!(
                "images {}  objects {}  questions {}  types {}  warnings {}",
                r.images,
                r.objects,
                r.questions,
                r.question_types.len(),
                r.warnings
            );
        }
        Command::GenSot { mode } => {
            let mode = match mode {
                Mode::Offline => GenMode::Offline,
                Mode::Llm => GenMode::Llm,
            };
            let r = cmd_gen(&cfg, mode, None)?;
            println!(
                "questions {}  generated {}  failures {}  format errors {}",
                r.questions, r.generated, r.failures, r.format_errors
            );
        }
        Command::Filter => {
            let r = cmd_filter(&cfg)?;
            let reasons: Vec<String> = r.by_reason.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!(
                "generated {}  accepted {}  rejected {}  {}",
                r.generated,
                r.accepted,
                r.rejected,
                reasons.join(" ")
            );
        }
        Command::Stats => print!("{}", cmd_stats(&cfg)?.to_table()),
        Command::Eval { judge } => {
            let service = if judge {
                Some(HttpService::new(cfg.client_config()?, Arc::new(SystemClock::default())))
            } else {
                None
            };
            let r = cmd_eval(&cfg, service.as_ref().map(|s| s as _))?;
            print!("{}", r.metrics.to_table());
            println!("missing predictions {}", r.missing_predictions);
            if let Some(j) = r.judge {
                println!(
                    "judge agreement    {:.4}  ({} of {}, {} failed)",
                    j.agreement, j.agreed, j.judged, j.failures
                );
            }
        }
        Command::Demo { question_id } => print!("{}", cmd_demo(&cfg, &question_id)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("sotkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(4),
    }
}
