use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cohortlab::commands::{self, DataArgs};
use cohortlab::error::CliError;
use cohortlab::report;
use cohortlab::scenario::ArchetypeJob;
use cohortlab_core::archetype::RuleThresholds;
use cohortlab_core::curriculum::Parity;
use cohortlab_core::temporal::ObservationWindow;

#[derive(Parser)]
#[command(name = "cohortlab", version, about = "Curriculum analytics, causal estimates and policy simulation for student cohorts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataOpts {
    /// Directory holding students.csv, trajectories.csv, shocks.csv, registry.json and curriculum.json.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    students: Option<PathBuf>,
    #[arg(long)]
    trajectories: Option<PathBuf>,
    #[arg(long)]
    shocks: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    curriculum: Option<PathBuf>,
}

impl From<DataOpts> for DataArgs {
    fn from(d: DataOpts) -> Self {
        DataArgs {
            dir: d.data,
            students: d.students,
            trajectories: d.trajectories,
            shocks: d.shocks,
            registry: d.registry,
            curriculum: d.curriculum,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StartParity {
    Odd,
    Even,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Md,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort without interventions and write it in the ingestion schema.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Structural metrics of a curriculum graph.
    AnalyzeCurriculum {
        #[arg(long)]
        curriculum: PathBuf,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[arg(long, value_enum, default_value = "odd")]
        start: StartParity,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster students into trajectory archetypes.
    Archetypes {
        #[command(flatten)]
        data: DataOpts,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        nominal_terms: u32,
        /// Decision point such as `N3(4)`; defaults to the last observed term.
        #[arg(long, value_parser = parse_window)]
        as_of: Option<ObservationWindow>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-fitted treatment effect with a naive comparator.
    Dml {
        /// JSON estimation spec.
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        data: DataOpts,
        /// `id,archetype` file for `group_by = "archetype"`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a scenario with its interventions.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a 2x2x2 factorial policy experiment.
    Experiment {
        #[arg(long)]
        design: PathBuf,
        /// Overrides the replication count of the design.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify an output directory and render its report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage from curriculum analysis to report.
    Pipeline {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_window(s: &str) -> Result<ObservationWindow, String> {
    let s = s.trim();
    let indexed = |prefix: &str| -> Option<Result<u32, String>> {
        let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
        Some(inner.trim().parse::<u32>().map_err(|e| format!("bad term index in {s:?}: {e}")))
    };
    let w = match s {
        "N1" => ObservationWindow::PreEntry,
        "N2" => ObservationWindow::Entry,
        _ => {
            if let Some(t) = indexed("N3") {
                ObservationWindow::Term(t?)
            } else if let Some(t) = indexed("N4") {
                ObservationWindow::Context(t?)
            } else {
                return Err(format!("expected N1, N2, N3(t) or N4(t), got {s:?}"));
            }
        }
    };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { scenario, seed, out } => commands::cmd_synth(&scenario, seed, &out).map(drop),
        Command::AnalyzeCurriculum { curriculum, top_k, start, out } => {
            let start = match start {
                StartParity::Odd => Parity::Odd,
                StartParity::Even => Parity::Even,
            };
            let m = commands::cmd_analyze(&curriculum, top_k, start, &out)?;
            drop(m);
            print!("{}", std::fs::read_to_string(out.join("metrics.txt")).map_err(|e| CliError::io(&out, e))?);
            Ok(())
        }
        Command::Archetypes { data, k, seed, nominal_terms, as_of, out } => {
            let job = ArchetypeJob { k, seed, nominal_terms, as_of, thresholds: RuleThresholds::default() };
            commands::cmd_archetypes(&DataArgs::from(data).resolve()?, &job, &out).map(drop)
        }
        Command::Dml { spec, data, labels, out } => {
            commands::cmd_dml(&spec, &DataArgs::from(data).resolve()?, labels.as_deref(), &out).map(drop)
        }
        Command::Simulate { scenario, seed, out } => commands::cmd_simulate(&scenario, seed, &out).map(drop),
        Command::Experiment { design, reps, out } => commands::cmd_experiment(&design, reps, &out).map(drop),
        Command::Report { input, format, out } => {
            let bundle = report::build(&input)?;
            let bytes = match format {
                Format::Json => cohortlab::io::to_json_bytes(&bundle),
                Format::Csv => report::render_csv(&bundle),
                Format::Md | Format::Text => report::render_text(&bundle).into_bytes(),
            };
            match out {
                Some(p) => std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e)),
                None => {
                    use std::io::Write;
                    std::io::stdout().write_all(&bytes).map_err(|e| CliError::Internal(e.to_string()))
                }
            }
        }
        Command::Pipeline { scenario, out } => commands::cmd_pipeline(&scenario, &out).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
