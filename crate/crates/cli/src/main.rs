mod config;
mod error;
mod run;

use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nhskin::analysis::Table;

use config::{Format, Options};
use error::CliError;
use run::{Artifact, FigureId, Task};

/// Spectra and eigenstates of 1D non-Hermitian lattices from periodic Green's functions.
#[derive(Parser)]
#[command(name = "nhskin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    options: Options,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues under periodic, vacancy-opened or impurity boundaries.
    Spectrum,
    /// Binormalized right and left eigenstates.
    States,
    /// Impurity eigenvalues along a potential grid, with exceptional points.
    SweepEpsilon,
    /// Edge-skin vicinity of the SSH zero mode against t2/t1.
    Vicinity,
    /// Dataset behind one of the reference figures.
    Figure {
        #[arg(long, value_enum)]
        id: FigureId,
    },
    /// Cross-check closed forms, Green's functions and the dense eigensolver.
    Validate,
}

impl Command {
    fn task(&self) -> Task {
        match self {
            Command::Spectrum => Task::Spectrum,
            Command::States => Task::States,
            Command::SweepEpsilon => Task::SweepEpsilon,
            Command::Vicinity => Task::Vicinity,
            Command::Figure { id } => Task::Figure(*id),
            Command::Validate => Task::Validate,
        }
    }
}

fn write_csv<W: Write>(table: &Table, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<W: Write>(doc: &serde_json::Value, mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, doc)?;
    writeln!(out)?;
    out.flush()
}

fn format_for(o: &Options) -> Format {
    o.format.unwrap_or_else(|| match o.output.as_deref().and_then(Path::extension) {
        Some(ext) if ext == "json" => Format::Json,
        _ => Format::Csv,
    })
}

fn emit(art: &Artifact, o: &Options) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let rendered = match format_for(o) {
        Format::Csv => write_csv(&art.table, &mut buf).map_err(|e| e.to_string()),
        Format::Json => write_json(&art.json, &mut buf).map_err(|e| e.to_string()),
    };
    rendered.map_err(|e| CliError::Config(format!("rendering output: {e}")))?;
    match &o.output {
        Some(path) => std::fs::write(path, &buf)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut out = io::stdout().lock();
            match out.write_all(&buf).and_then(|_| out.flush()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    Err(CliError::Config(format!("writing output: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let task = cli.command.task();
    let options = cli.options.resolve()?;
    let art = run::run(task, &options)?;
    emit(&art, &options)?;
    for line in &art.notes {
        eprintln!("{line}");
    }
    match &art.failure {
        Some(msg) => Err(CliError::Validation(msg.clone())),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nhskin: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
