use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use polymoment_cli::{run, validate_config, write_csv, ExperimentConfig, RunOptions, SCHEMA};

#[derive(Parser)]
#[command(name = "polymoment", version, about = "Discounted moment approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a job and write its CSV table.
    Run {
        config: PathBuf,
        /// Output path; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "POLYMOMENT_THREADS")]
        threads: Option<usize>,
        /// Overrides `mc.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Record per-cell wall time in `wall_ms`.
        #[arg(long)]
        timing: bool,
    },
    /// Check a config and report every problem.
    Validate { config: PathBuf },
    /// Print the config JSON schema.
    Schema,
}

const EXIT_INVALID: u8 = 2;

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_INVALID)
    })?;
    validate_config(&text).map_err(|errors| {
        for e in &errors {
            eprintln!("error: {e}");
        }
        eprintln!("{}: {} validation error(s)", path.display(), errors.len());
        ExitCode::from(EXIT_INVALID)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Schema => {
            print!("{SCHEMA}");
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!(
                    "{}: ok ({}, {} case(s), {} order(s))",
                    config.display(),
                    cfg.job.name(),
                    cfg.cases.len(),
                    cfg.orders.len()
                );
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run {
            config,
            out,
            threads,
            seed,
            timing,
        } => {
            let mut cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            if let (Some(seed), Some(mc)) = (seed, cfg.mc.as_mut()) {
                mc.seed = seed;
            }
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(EXIT_INVALID);
                }
            }
            let rows = match run(&cfg, &RunOptions { timing }) {
                Ok(rows) => rows,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            let written = match out.or(cfg.output.map(PathBuf::from)) {
                Some(path) => fs::File::create(&path)
                    .map_err(csv::Error::from)
                    .and_then(|f| write_csv(&rows, io::BufWriter::new(f))),
                None => write_csv(&rows, io::stdout().lock()),
            };
            if let Err(e) = written.and_then(|_| io::stdout().flush().map_err(csv::Error::from)) {
                eprintln!("error: writing output: {e}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
    }
}
