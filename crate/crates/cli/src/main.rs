use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homobs_core::runner::{self, RunError, RunOutcome};
use homobs_core::scenario::{self, Mode, Scenario, ScenarioError};
use homobs_core::sim::MonteCarloSpec;

#[derive(Parser)]
#[command(
    name = "homobs",
    version,
    about = "Simulate and check observers on the sphere"
)]
struct Cli {
    /// Suppress progress and report output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run(RunArgs),
    /// Check the geometric identities on random samples.
    Verify(VerifyArgs),
    /// Monte Carlo sweep over random initial observer states.
    Sweep(SweepArgs),
    /// Built-in scenarios.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
struct Source {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    scenario: Option<PathBuf>,
    /// Name of a built-in scenario (see `preset list`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of Monte Carlo and verify scenarios.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario JSON file; its `verify` block sets samples and seed.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of random samples per property.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Number of runs; overrides the scenario's Monte Carlo block.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names.
    List,
    /// Print a preset as scenario JSON.
    Show { name: String },
}

fn load(path: &Path) -> Result<Scenario, RunError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(scenario::parse_scenario(&text)?)
}

fn resolve(source: &Source) -> Result<Scenario, RunError> {
    match (&source.scenario, &source.preset) {
        (Some(path), _) => load(path),
        (None, Some(name)) => Ok(scenario::preset(name)?),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn report(outcome: &RunOutcome, out: &Path) {
    for p in &outcome.properties {
        let relation = match p.bound {
            homobs_core::verify::Bound::Upper => "<=",
            homobs_core::verify::Bound::Lower => ">=",
        };
        println!(
            "{:<30} max_residual={:.3e} {relation} {:.1e}  {}",
            p.name,
            p.max_residual,
            p.tolerance,
            if p.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(summary) = outcome.summary.get("summary").filter(|v| !v.is_null()) {
        println!(
            "{}",
            serde_json::to_string_pretty(summary).unwrap_or_default()
        );
    }
    if let Some(fraction) = outcome.summary.get("converged_fraction") {
        println!("converged_fraction = {fraction}");
    }
    println!("artifacts written to {}", out.display());
}

fn execute(cli: &Cli) -> Result<i32, RunError> {
    let (scenario, out, seed) = match &cli.command {
        Command::Preset { action } => {
            match action {
                PresetAction::List => {
                    for name in scenario::PRESETS {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => println!("{}", scenario::preset(name)?.to_json()),
            }
            return Ok(0);
        }
        Command::Run(args) => (resolve(&args.source)?, &args.out, args.seed),
        Command::Verify(args) => {
            let mut s = match &args.scenario {
                Some(path) => load(path)?,
                None => Scenario::minimal(scenario::Instance::So3S2),
            };
            s.mode = Mode::Verify;
            let spec = s.verify.get_or_insert_with(Default::default);
            if let Some(n) = args.samples {
                spec.samples = n;
            }
            (s, &args.out, args.seed)
        }
        Command::Sweep(args) => {
            let mut s = resolve(&args.source)?;
            s.mode = Mode::MonteCarlo;
            let spec = s
                .monte_carlo
                .get_or_insert_with(|| MonteCarloSpec::new(1000, 0));
            if let Some(n) = args.runs {
                spec.runs = n;
            }
            (s, &args.out, args.seed)
        }
    };
    let outcome = runner::run(&scenario, out, seed)?;
    if !cli.quiet {
        report(&outcome, out);
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
