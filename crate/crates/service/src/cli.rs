//! `gesturegen` command line.
//!
//! Exit codes: 0 on success, 1 for bad input or configuration, 2 when any
//! utterance failed because of the backend.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gesturegen_core::eval::{compare_approaches, load_labels, render_table, EvalOptions, LabelRecord};
use gesturegen_core::pipeline::TimingSource;
use gesturegen_core::selector::{Approach, PromptConfig};

use crate::config::{BackendKind, Overrides, PipelineConfig};
use crate::output::{Outcome, SelectBody};
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "gesturegen", version, about = "Co-speech gesture selection and BML generation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Prompt variant: 0 baseline, 1 intent list, 2 examples, 3 both.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub approach: Option<u8>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Recorded exchanges for the replay backend.
    #[arg(long, global = true)]
    pub recorded: Option<PathBuf>,
    /// Annotated corpus (JSON Lines).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Word gap allowed when aligning spans.
    #[arg(long, global = true)]
    pub tolerance: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print proposed gestures for each utterance as JSON.
    Select {
        /// Input text; stdin when absent or "-".
        input: Option<PathBuf>,
    },
    /// Print one BML document per utterance.
    Bml {
        input: Option<PathBuf>,
        /// Write <id>.bml (and <id>.timeline.jsonl) into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Word timings: {"T0": 0.0, ...} for every utterance, or an object
        /// keyed by utterance id. Implies --timeline.
        #[arg(long)]
        timings: Option<PathBuf>,
        /// Also emit the resolved timeline, with synthetic timings unless
        /// --timings is given.
        #[arg(long)]
        timeline: bool,
    },
    /// Compare prompting approaches on the corpus test split.
    Eval {
        /// Comma-separated approaches to run.
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(0..=3))]
        approaches: Option<Vec<u8>>,
        /// Appropriateness labels (JSON Lines).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a plain-text table to stdout.
        #[arg(long)]
        table: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<io::Error>())
        .any(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn outcome_code(outcome: Outcome) -> ExitCode {
    match outcome {
        Outcome::Ok => ExitCode::SUCCESS,
        Outcome::InputFailure => ExitCode::from(1),
        Outcome::BackendFailure => ExitCode::from(2),
    }
}

pub fn load_config(global: &GlobalArgs, bind: Option<String>) -> Result<PipelineConfig> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(Overrides {
        approach: global.approach.and_then(Approach::from_index),
        backend: global.backend,
        tolerance: global.tolerance,
        recorded: global.recorded.clone(),
        corpus: global.corpus.clone(),
        bind,
    });
    config.apply_env();
    config.validate()?;
    Ok(config)
}

fn read_input(input: Option<&Path>) -> Result<String> {
    let mut text = String::new();
    match input {
        Some(p) if p != Path::new("-") => {
            File::open(p)
                .and_then(|mut f| f.read_to_string(&mut text))
                .with_context(|| format!("reading {}", p.display()))?;
        }
        _ => {
            io::stdin().read_to_string(&mut text).context("reading stdin")?;
        }
    }
    Ok(text)
}

pub async fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Select { input } => {
            let config = load_config(&cli.global, None)?;
            let text = read_input(input.as_deref())?;
            let pipeline = config.pipeline()?;
            let results = pipeline.select_text(&text).await;
            report_failures(results.iter().map(|(u, r)| (u.id.as_str(), r.as_ref().err())));
            if !results.is_empty() {
                let body = serde_json::to_string_pretty(&SelectBody::new(&results))?;
                writeln!(io::stdout(), "{body}")?;
            }
            Ok(outcome_code(Outcome::of(&results)))
        }
        Command::Bml {
            input,
            out,
            timings,
            timeline,
        } => {
            let config = load_config(&cli.global, None)?;
            let timings = match &timings {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    Some(TimingSource::from_json(&text).with_context(|| format!("parsing {}", path.display()))?)
                }
                None => None,
            };
            let text = read_input(input.as_deref())?;
            let pipeline = config.pipeline()?;
            let results = pipeline.bml_text(&text, timeline, timings.as_ref()).await;
            report_failures(results.iter().map(|(u, r)| (u.id.as_str(), r.as_ref().err())));
            let mut stdout = io::stdout().lock();
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            for (utt, result) in &results {
                let Ok(output) = result else { continue };
                match &out {
                    Some(dir) => {
                        write_file(&dir.join(format!("{}.bml", utt.id)), &output.bml)?;
                        if let Some(jsonl) = output.timeline_jsonl() {
                            write_file(&dir.join(format!("{}.timeline.jsonl", utt.id)), &jsonl)?;
                        }
                    }
                    None => {
                        stdout.write_all(output.bml.as_bytes())?;
                        if let Some(jsonl) = output.timeline_jsonl() {
                            stdout.write_all(jsonl.as_bytes())?;
                        }
                    }
                }
            }
            stdout.flush()?;
            Ok(outcome_code(Outcome::of(&results)))
        }
        Command::Eval {
            approaches,
            labels,
            out,
            table,
        } => {
            let config = load_config(&cli.global, None)?;
            let corpus = config.corpus()?;
            let labels = read_labels(labels.as_deref())?;
            let approaches: Vec<Approach> = match approaches {
                Some(list) => list.into_iter().filter_map(Approach::from_index).collect(),
                None => Approach::ALL.to_vec(),
            };
            let configs: Vec<PromptConfig> = approaches
                .into_iter()
                .map(|approach| PromptConfig {
                    approach,
                    ..config.prompt.clone()
                })
                .collect();
            let mut ctx = config.context()?;
            ctx.corpus = Some(corpus.clone());
            let backend = config.backend()?;
            let options = EvalOptions {
                tolerance: config.tolerance,
                parallelism: config.backend.parallelism,
            };
            let report =
                compare_approaches(&corpus, &configs, backend.as_ref(), &ctx, labels.as_deref(), options).await?;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            match &out {
                Some(path) => write_file(path, &json)?,
                None if !table => io::stdout().write_all(json.as_bytes())?,
                None => {}
            }
            if table {
                io::stdout().write_all(render_table(&report).as_bytes())?;
            }
            let failures: usize = report.approaches.iter().map(|a| a.failures.len()).sum();
            if failures > 0 {
                eprintln!("{failures} utterance(s) failed; see the report's failures lists");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { bind } => {
            let config = load_config(&cli.global, bind)?;
            let pipeline = config.pipeline()?;
            server::serve(pipeline, &config.bind)
                .await
                .with_context(|| format!("serving on {}", config.bind))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report_failures<'a, E: std::fmt::Display + 'a>(results: impl Iterator<Item = (&'a str, Option<E>)>) {
    for (id, err) in results {
        if let Some(e) = err {
            eprintln!("utterance {id}: {e}");
        }
    }
}

/// A missing label file is not fatal: tallies are left out of the report.
fn read_labels(path: Option<&Path>) -> Result<Option<Vec<LabelRecord>>> {
    let Some(path) = path else { return Ok(None) };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            eprintln!(
                "warning: label file {} not found; appropriateness tallies omitted",
                path.display()
            );
            return Ok(None);
        }
        Err(e) => bail!("reading {}: {e}", path.display()),
    };
    let labels = load_labels(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(labels))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
