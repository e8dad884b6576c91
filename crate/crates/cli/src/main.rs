//! Command-line driver: `bench` times the engines over a size grid, `verify`
//! cross-checks them against the naive reference, and `demo` runs the
//! bundled 7-layer network in float and quantized builds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nibblegemm_cli::bench::run_benchmark;
use nibblegemm_cli::config::{BenchConfig, Engine};
use nibblegemm_cli::demo::{render, run_demo, DemoConfig};
use nibblegemm_cli::verify::verify_engines;

#[derive(Parser)]
#[command(
    name = "nibblegemm",
    version,
    about = "4-bit quantized matrix products and CNN inference on 16-bit accumulator lanes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time the matrix engines over a size grid and emit CSV rows.
    Bench(GridArgs),
    /// Check every engine against the naive reference over the grid.
    Verify(GridArgs),
    /// Build the bundled 7-layer network and time its variants.
    Demo(DemoArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Left-operand row counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 24])]
    heights: Vec<usize>,
    /// Right-operand column counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 400, 1600])]
    widths: Vec<usize>,
    /// Inner dimensions to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 40, 100])]
    depths: Vec<usize>,
    /// Engines to run at every grid point.
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = [Engine::F32, Engine::I32, Engine::U8, Engine::U4])]
    engines: Vec<Engine>,
    /// Stop a grid point once the CV of the mean drops below this.
    #[arg(long, default_value_t = 0.01)]
    target_cv: f64,
    /// Hard cap on timing repetitions per grid point.
    #[arg(long, default_value_t = 100)]
    max_reps: usize,
    /// Seed for operand generation (fixes the checksums).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Untimed executions before measuring.
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    /// Also write the CSV to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl From<GridArgs> for BenchConfig {
    fn from(a: GridArgs) -> BenchConfig {
        BenchConfig {
            heights: a.heights,
            widths: a.widths,
            depths: a.depths,
            engines: a.engines,
            target_cv: a.target_cv,
            max_reps: a.max_reps,
            seed: a.seed,
            warmup: a.warmup,
            csv: a.csv,
        }
    }
}

#[derive(Args)]
struct DemoArgs {
    /// Seed for the generated weights and input.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Stop timing a variant once the CV of the mean drops below this.
    #[arg(long, default_value_t = 0.01)]
    target_cv: f64,
    /// Hard cap on timed forward passes per variant.
    #[arg(long, default_value_t = 50)]
    max_reps: usize,
    /// Untimed forward passes before measuring.
    #[arg(long, default_value_t = 3)]
    warmup: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Bench(args) => run_benchmark(&args.into()).map(|_| true),
        Command::Verify(args) => {
            let config: BenchConfig = args.into();
            verify_engines(&config).map(|report| {
                for record in &report.records {
                    println!("{}", record.line());
                }
                if report.pass() {
                    println!("all {} checks passed", report.records.len());
                    true
                } else {
                    eprintln!("{} of {} checks FAILED", report.failures, report.records.len());
                    false
                }
            })
        }
        Command::Demo(args) => {
            let config = DemoConfig {
                seed: args.seed,
                target_cv: args.target_cv,
                max_reps: args.max_reps,
                warmup: args.warmup,
            };
            run_demo(&config).map(|records| {
                print!("{}", render(&records));
                true
            })
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
