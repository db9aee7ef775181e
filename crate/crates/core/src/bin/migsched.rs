use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use migsched::mig_model::{lookup_profile, Occupancy};
use migsched::report::{
    compare, inspect_report, merge_cells, write_plot_data, Experiment, ExperimentSpec, Format, Overrides, ReportError,
    ResultsFile,
};
use migsched::validation;

#[derive(Parser)]
#[command(name = "migsched", version, about = "Fragmentation-aware MIG scheduling simulator")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (distribution, scheduler) cell of an experiment and write result files.
    Run(RunArgs),
    /// Tabulate metrics of one or more result sets at a demand point.
    Compare(CompareArgs),
    /// Show the fragmentation score breakdown of a single GPU occupancy.
    Inspect(InspectArgs),
    /// Write plot-ready CSV series from result sets.
    PlotData(PlotArgs),
    /// Check the score against the oracle and the schedulers and simulator against their invariants.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (TOML). Without one, the 100-GPU, 500-run comparison matrix is used.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    cluster_size: Option<usize>,
    /// Restrict to these schedulers (mfi, bf-bi, wf-bi, ff, rr).
    #[arg(long, value_delimiter = ',')]
    scheduler: Vec<String>,
    /// Restrict to these distributions.
    #[arg(long, value_delimiter = ',')]
    distribution: Vec<String>,
    /// Reject when the first GPU a baseline picks cannot host the profile.
    #[arg(long)]
    strict_first_choice: bool,
    #[arg(long, env = "MIGSCHED_OUT")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<Format>,
    #[arg(long, env = "MIGSCHED_PARALLELISM")]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// results.json files or the directories holding them.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value_t = 85.0)]
    demand_point: f64,
    /// Also write compare.csv and compare_normalized.csv (or .json) here.
    #[arg(long, env = "MIGSCHED_OUT")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct InspectArgs {
    /// Eight characters, `.` free and `#` allocated, index 0 first.
    occupancy: Occupancy,
    /// Profile to dry-run, e.g. 1g.10gb.
    profile: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long, env = "MIGSCHED_OUT", default_value = "plots")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Random instances per randomized check.
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<ResultsFile>, ReportError> {
    paths.iter().map(|p| ResultsFile::load(p)).collect()
}

fn write(path: PathBuf, contents: String) -> Result<(), ReportError> {
    std::fs::write(&path, contents).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), ReportError> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::full_matrix(),
    };
    spec.apply(&Overrides {
        seed: args.seed,
        runs: args.runs,
        cluster_size: args.cluster_size,
        schedulers: args.scheduler,
        distributions: args.distribution,
        strict_first_choice: args.strict_first_choice,
        out: args.out,
        formats: args.format,
    });
    let dir = spec.output.dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    let experiment = Experiment::run(spec, args.parallelism)?;
    for path in experiment.write(&dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), ReportError> {
    let cells = merge_cells(&load_all(&args.results)?)?;
    let table = compare(&cells, args.demand_point)?;
    let normalized = table.normalized();
    println!("raw metrics at {}% demand", args.demand_point);
    print!("{}", table.render());
    println!();
    println!("normalized to per-metric maximum");
    print!("{}", normalized.render());
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir).map_err(|source| ReportError::Io { path: dir.clone(), source })?;
        match args.format {
            Format::Csv => {
                write(dir.join("compare.csv"), table.to_csv()?)?;
                write(dir.join("compare_normalized.csv"), normalized.to_csv()?)?;
            }
            Format::Json => {
                write(dir.join("compare.json"), serde_json::to_string_pretty(&table)? + "\n")?;
                write(dir.join("compare_normalized.json"), serde_json::to_string_pretty(&normalized)? + "\n")?;
            }
        }
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), String> {
    let profile = args.profile.as_deref().map(lookup_profile).transpose().map_err(|e| e.to_string())?;
    print!("{}", inspect_report(args.occupancy, profile));
    Ok(())
}

fn cmd_plot_data(args: PlotArgs) -> Result<(), ReportError> {
    let cells = merge_cells(&load_all(&args.results)?)?;
    for path in write_plot_data(&cells, &args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> bool {
    let mut ok = true;
    for check in validation::run_all(args.cases, args.seed) {
        println!("{check}");
        ok &= check.passed();
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map_err(|e| e.to_string()),
        Command::Compare(a) => cmd_compare(a).map_err(|e| e.to_string()),
        Command::Inspect(a) => cmd_inspect(a),
        Command::PlotData(a) => cmd_plot_data(a).map_err(|e| e.to_string()),
        Command::Validate(a) => {
            if cmd_validate(a) {
                Ok(())
            } else {
                Err("validation failed".into())
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
