use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use confcal::config::RunConfig;
use confcal::datasets::{self, DatasetFormat};
use confcal::harness::{self, Harness};

#[derive(Parser)]
#[command(name = "confcal", about = "Calibration study harness for QA language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw dataset file into the canonical question format.
    Ingest {
        /// Source format: canonical, triviaqa, sciq, or truthfulqa.
        #[arg(long)]
        format: DatasetFormat,
        /// Dataset name stamped on every question.
        #[arg(long)]
        name: String,
        input: PathBuf,
        output: PathBuf,
    },
    /// Elicit and grade every missing (question, method, model) record.
    Run {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Score the manifest and print the report table.
    Score {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Score and write report.txt, report.csv, and usage histograms.
    Report {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Write reliability-diagram data (reliability.jsonl).
    Diagram {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Project the subject-model request count without calling any model.
    DryRun {
        #[arg(long, short)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> confcal::Result<()> {
    match cli.command {
        Command::Ingest {
            format,
            name,
            input,
            output,
        } => {
            let mut questions = datasets::load(&input, format)?;
            for q in &mut questions {
                q.dataset = name.clone();
            }
            std::fs::write(&output, datasets::write_canonical(&questions)?)?;
            println!("wrote {} questions to {}", questions.len(), output.display());
        }
        Command::Run { config } => {
            let harness = Harness::new(RunConfig::load(&config)?)?;
            let stats = harness.run()?;
            print!("{}", harness::render_stats(&stats));
            println!("manifest: {}", harness.manifest_path().display());
        }
        Command::Score { config } => {
            let harness = Harness::new(RunConfig::load(&config)?)?;
            let reports = harness.score()?;
            print!("{}", confcal::report::render_text(&reports));
        }
        Command::Report { config } => {
            let harness = Harness::new(RunConfig::load(&config)?)?;
            let reports = harness.score()?;
            for path in harness.write_reports(&reports)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Diagram { config } => {
            let harness = Harness::new(RunConfig::load(&config)?)?;
            let path = harness.write_diagrams()?;
            println!("wrote {}", path.display());
        }
        Command::DryRun { config } => {
            let harness = Harness::new(RunConfig::load(&config)?)?;
            let report = harness.dry_run()?;
            print!("{}", harness::render_dry_run(&report));
        }
    }
    Ok(())
}
