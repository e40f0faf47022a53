use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nalm_lab_cli::config::{self, ModelSpec, Overrides, Preset};
use nalm_lab_cli::grids::{self, LandscapeArgs, SurfaceArgs, SurfaceSource, Which};
use nalm_lab_cli::report;
use nalm_lab_cli::runner;
use nalm_lab_cli::verify::{self, Level};
use nalm_lab_cli::{CliError, CliResult};

/// Train and analyse neural arithmetic units.
#[derive(Debug, Parser)]
#[command(name = "nalm-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sweep described by a TOML experiment file.
    Run(RunArgs),
    /// Export the two-weight loss landscape around a fixed sample.
    Landscape(LandscapeCli),
    /// Export a model's output surface over a square input domain.
    Surface(SurfaceCli),
    /// Run the numeric self-checks (gradients, noise cancellation, frozen tables).
    Verify(VerifyArgs),
    /// Merge summary files under a directory into one report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the file's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the first N seeds instead of the file's seed list.
    #[arg(long)]
    seeds: Option<u64>,
    /// Training preset to start from before file overrides.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Worker threads (default: all cores; env NALM_LAB_WORKERS wins).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct LandscapeCli {
    /// First input of the fixed sample.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    x1: f64,
    /// Second input of the fixed sample.
    #[arg(long, default_value_t = -1.8, allow_hyphen_values = true)]
    x2: f64,
    /// Low end of both weight axes.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    /// High end of both weight axes.
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    hi: f64,
    /// Axis step.
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    /// Output directory; files go under <out>/grids/.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Basename for the CSV and meta files.
    #[arg(long, default_value = "landscape")]
    name: String,
}

#[derive(Debug, Args)]
struct SurfaceCli {
    /// Evaluate the exact product x1*x2 instead of a model.
    #[arg(long)]
    golden: bool,
    /// Evaluate a freshly initialised model of this kind
    /// (nmu, snmu, stgnmu, mlp, nau_nmu, nau_snmu).
    #[arg(long)]
    model: Option<String>,
    /// Noise spec for snmu kinds: "u[lo,hi]", "batch" or "none".
    #[arg(long)]
    noise: Option<String>,
    /// Hidden width for mlp.
    #[arg(long)]
    width: Option<usize>,
    /// Gate penalty weight for stgnmu.
    #[arg(long)]
    lambda_l0: Option<f64>,
    /// Init seed for --model.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate the weights stored in this run record JSON.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Which checkpoint of --run to evaluate.
    #[arg(long, value_enum, default_value_t = Which::Best)]
    which: Which,
    /// Low end of both input axes.
    #[arg(long, default_value_t = -6.0, allow_hyphen_values = true)]
    lo: f64,
    /// High end of both input axes.
    #[arg(long, default_value_t = 6.0, allow_hyphen_values = true)]
    hi: f64,
    /// Cells per axis (evaluated at bin centres).
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Output directory; files go under <out>/grids/.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Basename for the CSV and meta files.
    #[arg(long, default_value = "surface")]
    name: String,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// quick = small sizes for a fast smoke check, full = acceptance sizes.
    #[arg(value_enum, default_value_t = Level::Quick)]
    level: Level,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory holding summary.json files (directly or one level down).
    dir: PathBuf,
    /// Where to write report.csv / report.txt (default: the input directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn surface_source(args: &SurfaceCli) -> CliResult<SurfaceSource> {
    let picked = args.golden as usize + args.model.is_some() as usize + args.run.is_some() as usize;
    if picked != 1 {
        return Err(CliError::Usage(
            "pick exactly one of --golden, --model, --run".to_string(),
        ));
    }
    if args.golden || args.run.is_some() {
        for (flag, set) in [
            ("--noise", args.noise.is_some()),
            ("--width", args.width.is_some()),
            ("--lambda-l0", args.lambda_l0.is_some()),
        ] {
            if set {
                return Err(CliError::Usage(format!("{flag} only applies to --model")));
            }
        }
    }
    if args.golden {
        return Ok(SurfaceSource::Golden);
    }
    if let Some(kind) = &args.model {
        let spec = ModelSpec {
            kind: kind.clone(),
            noise: args.noise.clone(),
            width: args.width,
            lambda_l0: args.lambda_l0,
        };
        return Ok(SurfaceSource::Init {
            kind: config::model_kind(&spec)?,
            seed: args.seed,
        });
    }
    Ok(SurfaceSource::Run {
        path: args.run.clone().expect("checked above"),
        which: args.which,
    })
}

fn dispatch(command: &Command) -> CliResult<i32> {
    match command {
        Command::Run(args) => {
            let overrides = Overrides {
                out: args.out.as_deref(),
                seeds: args.seeds,
                preset: args.preset,
            };
            let exp = config::load_experiment(&args.config, &overrides)?;
            runner::cmd_run(&exp, args.workers)?;
            Ok(0)
        }
        Command::Landscape(args) => {
            let meta = grids::cmd_landscape(&LandscapeArgs {
                x1: args.x1,
                x2: args.x2,
                lo: args.lo,
                hi: args.hi,
                step: args.step,
                out: args.out.clone(),
                name: args.name.clone(),
            })?;
            println!(
                "landscape {}: {} x {} cells, min {:.6e} at ({}, {}), {} near-zero",
                meta.name,
                meta.axis_points,
                meta.axis_points,
                meta.min_value,
                meta.min_at[0],
                meta.min_at[1],
                meta.near_zero_cells,
            );
            println!("wrote {}", args.out.join("grids").join(format!("{}.csv", args.name)).display());
            Ok(0)
        }
        Command::Surface(args) => {
            let meta = grids::cmd_surface(&SurfaceArgs {
                source: surface_source(args)?,
                lo: args.lo,
                hi: args.hi,
                bins: args.bins,
                out: args.out.clone(),
                name: args.name.clone(),
            })?;
            println!(
                "surface {} ({}): range [{:.6e}, {:.6e}], max |diff vs product| {:.6e}",
                meta.name, meta.source, meta.min_value, meta.max_value, meta.max_abs_diff_vs_golden,
            );
            println!("wrote {}", args.out.join("grids").join(format!("{}.csv", args.name)).display());
            Ok(0)
        }
        Command::Verify(args) => Ok(if verify::cmd_verify(args.level) { 0 } else { 1 }),
        Command::Report(args) => {
            report::cmd_report(&args.dir, args.out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
