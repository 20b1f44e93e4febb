//! Batch front end: simulate data, fit models, export predictive grids and
//! partition summaries, run independence tests, and score held-out data.

mod commands;
mod config;
mod csvio;
mod errors;
mod svg;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use errors::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "condopt", version, about = "Conditional density estimation by recursive partitioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a CSV file and write it as JSON.
    Fit {
        /// key = value configuration file (columns, prior, seed).
        #[arg(long)]
        config: PathBuf,
        /// Input CSV with a header row.
        #[arg(long)]
        input: PathBuf,
        /// Output model path (JSON).
        #[arg(long)]
        output: PathBuf,
        /// Override a config key, e.g. --set rho=0.3; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads (0 = automatic).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate the predictive density on a grid and write CSV rows.
    Grid {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Predictor point as comma-separated coordinates; repeatable.
        #[arg(long = "x", value_name = "COORDS")]
        x_values: Vec<String>,
        /// Also evaluate on a regular predictor grid with this resolution
        /// per dimension.
        #[arg(long)]
        x_grid: Option<usize>,
        /// Response-grid resolution per dimension.
        #[arg(long, default_value_t = 256)]
        y_grid: usize,
    },
    /// Export the modal partition tree (and optionally an SVG schematic).
    Hmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Write a partition schematic here (1-D/2-D predictor spaces).
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Permutation test of independence between predictors and responses.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// y-given-x, x-given-y, or min-both.
        #[arg(long)]
        direction: Option<String>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate a synthetic dataset.
    Simulate {
        /// ex1-beta-blocks, ex2-bivariate-normal, ex3-markov-binary,
        /// ex4-independence-test, or flow-synthetic.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Log predictive score of a fitted model on held-out data.
    Logp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Write a file atomically: temp file in the target directory, then rename.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(&format!("creating temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(&format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { config, input, output, overrides, threads } => {
            commands::cmd_fit(&config, &input, &output, &overrides, threads)
        }
        Command::Grid { model, output, x_values, x_grid, y_grid } => {
            commands::cmd_grid(&model, &output, &x_values, x_grid, y_grid)
        }
        Command::Hmap { model, output, svg } => commands::cmd_hmap(&model, &output, svg.as_ref()),
        Command::Test {
            config,
            input,
            output,
            overrides,
            permutations,
            seed,
            direction,
            threads,
        } => {
            let direction = direction.as_deref().map(config::direction).transpose()?;
            commands::cmd_test(
                &config,
                &input,
                &output,
                &overrides,
                permutations,
                seed,
                direction,
                threads,
            )
        }
        Command::Simulate { scenario, n, seed, output } => {
            commands::cmd_simulate(&scenario, n, seed, &output)
        }
        Command::Logp { model, config, input, overrides } => {
            commands::cmd_logp(&model, &config, &input, &overrides)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
