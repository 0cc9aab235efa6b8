use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pbt_map_elites::config::RunConfig;
use pbt_map_elites::repertoire::Repertoire;
use pbt_map_elites::{export, rl, Error};

/// Quality-diversity search over populations of RL agents.
#[derive(Parser)]
#[command(name = "pbtme", version)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured search and write metrics, snapshots and heatmaps.
    Run {
        config: PathBuf,
        /// Inline override, e.g. `--set population.size=40`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write fitness and hyperparameter tables of a snapshot.
    ExportHeatmap {
        snapshot: PathBuf,
        /// Destination directory (default: `<snapshot stem>_heatmaps` next to the snapshot).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate the agent stored in one cell of a snapshot.
    Eval {
        snapshot: PathBuf,
        #[arg(long)]
        cell: usize,
        /// Also write the per-step trajectory log to this file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print the centroid table of a snapshot.
    Centroids { snapshot: PathBuf },
}

enum Failure {
    Lib(Error),
    EmptyCell(usize),
    Mismatch { stored: f64, replayed: f64 },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::EmptyCell(c) => write!(f, "cell {c} is empty"),
            Failure::Mismatch { stored, replayed } => {
                write!(
                    f,
                    "replayed fitness {replayed} differs from stored {stored}"
                )
            }
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Config { .. }) => 3,
            Failure::Lib(Error::OutputExists(_)) => 4,
            Failure::Lib(Error::Io(_)) => 5,
            Failure::Lib(Error::Snapshot { .. } | Error::Parse { .. }) => 6,
            Failure::Lib(Error::UnsupportedExport(_)) => 7,
            Failure::Lib(
                Error::RunAborted { .. } | Error::Contract(_) | Error::EmptyRepertoire,
            ) => 8,
            Failure::EmptyCell(_) => 9,
            Failure::Mismatch { .. } => 10,
        }
    }
}

fn run(config: &Path, overrides: &[String], out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(config, overrides)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    let result = export::execute(&cfg)?;
    let m = result.final_metrics();
    println!(
        "iterations={} budget={} coverage={} qd_score={} max_fitness={} output={}",
        result.iterations,
        result.meta.budget_consumed,
        m.coverage,
        m.qd_score,
        m.max_fitness.map(|x| x.to_string()).unwrap_or_default(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn export_heatmap(snapshot: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let snap = export::read_snapshot(snapshot)?;
    Repertoire::restore(&snap)?;
    let dir = out.unwrap_or_else(|| {
        let stem = snapshot
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("snapshot");
        snapshot.with_file_name(format!("{stem}_heatmaps"))
    });
    for path in export::export_heatmaps(&snap, &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn eval(snapshot: &Path, cell: usize, log: Option<PathBuf>) -> Result<(), Failure> {
    let (rep, meta) = Repertoire::restore(&export::read_snapshot(snapshot)?)?;
    let record = rep.get(cell).ok_or(Failure::EmptyCell(cell))?;
    let env = meta.env.build();
    let (e, trajectory) = rl::evaluate_logged(&record.agent, env.as_ref())?;
    if let Some(path) = log {
        std::fs::write(path, trajectory.to_log())?;
    }
    let descriptor: Vec<String> = e.descriptor.iter().map(f64::to_string).collect();
    println!(
        "cell={cell} fitness={} descriptor={} steps={} stored_fitness={}",
        e.fitness,
        descriptor.join(","),
        e.steps,
        record.fitness
    );
    if e.fitness.to_bits() != record.fitness.to_bits() || e.descriptor != record.descriptor {
        return Err(Failure::Mismatch {
            stored: record.fitness,
            replayed: e.fitness,
        });
    }
    Ok(())
}

fn centroids(snapshot: &Path) -> Result<(), Failure> {
    let (rep, _) = Repertoire::restore(&export::read_snapshot(snapshot)?)?;
    print!("{}", rep.centroids().to_table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.command {
        Command::Run {
            config,
            overrides,
            out,
        } => run(&config, &overrides, out),
        Command::ExportHeatmap { snapshot, out } => export_heatmap(&snapshot, out),
        Command::Eval {
            snapshot,
            cell,
            log,
        } => eval(&snapshot, cell, log),
        Command::Centroids { snapshot } => centroids(&snapshot),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
