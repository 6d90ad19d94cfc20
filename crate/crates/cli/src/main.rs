//! `rhea-cl`: run, sweep, aggregate and validate curriculum experiments.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rhea_core::harness::{
    aggregate, find_run_dirs, resolve_output, run_all, run_sweep, validate_run_dir,
    write_aggregate_csv, RunConfig, SweepSpec,
};
use rhea_core::Error;

#[derive(Parser)]
#[command(
    name = "rhea-cl",
    version,
    about = "Rolling-horizon evolutionary curriculum learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config across all of its seeds.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
        /// Dotted overrides such as `--scheduler.kind=SPCL`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run every row of a sweep file.
    Sweep {
        sweep: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// List the resolved rows and exit.
        #[arg(long)]
        dry_run: bool,
        /// Dotted overrides applied to the base config of every row.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Mean and std of the roster-mean return per frame bucket.
    Aggregate {
        /// Run directories, or directories containing them.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Dotted config path to group runs by.
        #[arg(long)]
        group_by: Option<String>,
        /// Frame bucket width (default: the runs' iter_steps).
        #[arg(long)]
        bucket: Option<u64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check configs, sweep files or run directories.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn run(
    config: &Path,
    output: Option<PathBuf>,
    dry_run: bool,
    overrides: &[String],
) -> Result<(), Error> {
    let mut cfg = RunConfig::load(config, overrides)?;
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    if dry_run {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let root = cfg.output_root();
    let mut first_err = None;
    for (seed, result) in run_all(&cfg, &root) {
        match result {
            Ok(log) => println!(
                "seed {seed}: {} frames (+{} candidate), final roster mean {:.3}",
                log.committed_frames,
                log.candidate_frames,
                log.final_mean().unwrap_or(f64::NAN)
            ),
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                first_err.get_or_insert(Error::Contract(format!("seed {seed} failed: {e}")));
            }
        }
    }
    println!("results in {}", root.display());
    first_err.map_or(Ok(()), Err)
}

fn sweep(
    path: &Path,
    output: Option<PathBuf>,
    dry_run: bool,
    overrides: &[String],
) -> Result<(), Error> {
    let mut spec = SweepSpec::load(path)?;
    spec.override_base(overrides)?;
    if dry_run {
        for i in 0..spec.len() {
            spec.resolve(i)?;
            println!("row {i:3}: {}", spec.describe(i));
        }
        return Ok(());
    }
    let root = match output {
        Some(o) => resolve_output(&o),
        None => spec.resolve(0)?.output_root().join(&spec.name),
    };
    let index = run_sweep(&spec, &root)?;
    let failed = index.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{} rows, {failed} with failures; index in {}",
        index.len(),
        root.join("index.csv").display()
    );
    if failed > 0 {
        return Err(Error::Contract(format!("{failed} sweep rows failed")));
    }
    Ok(())
}

fn aggregate_cmd(
    dirs: &[PathBuf],
    group_by: Option<&str>,
    bucket: Option<u64>,
    output: Option<PathBuf>,
) -> Result<(), Error> {
    let runs = find_run_dirs(dirs)?;
    let rows = aggregate(&runs, group_by, bucket)?;
    match output {
        Some(p) => {
            let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            write_aggregate_csv(f, &rows)
        }
        None => write_aggregate_csv(std::io::stdout().lock(), &rows),
    }
}

const SWEEP_KEYS: [&str; 5] = ["columns", "rows", "axes", "sobol", "base"];

fn validate(paths: &[PathBuf]) -> Result<(), Error> {
    for path in paths {
        if path.is_dir() {
            let runs = find_run_dirs(std::slice::from_ref(path))?;
            if runs.is_empty() {
                return Err(Error::Format(format!(
                    "{}: no run directories",
                    path.display()
                )));
            }
            for r in &runs {
                validate_run_dir(r)?;
            }
            println!("{}: {} run directories ok", path.display(), runs.len());
            continue;
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if SWEEP_KEYS.iter().any(|k| table.contains_key(*k)) {
            let spec = SweepSpec::load(path)?;
            for i in 0..spec.len() {
                spec.resolve(i)?;
            }
            println!(
                "{}: sweep {:?}, {} rows ok",
                path.display(),
                spec.name,
                spec.len()
            );
            for i in 0..spec.len() {
                println!("  row {i:3}: {}", spec.describe(i));
            }
        } else {
            RunConfig::load(path, &[])?;
            println!("{}: config ok", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            dry_run,
            overrides,
        } => run(&config, output, dry_run, &overrides),
        Command::Sweep {
            sweep: path,
            output,
            dry_run,
            overrides,
        } => sweep(&path, output, dry_run, &overrides),
        Command::Aggregate {
            dirs,
            group_by,
            bucket,
            output,
        } => aggregate_cmd(&dirs, group_by.as_deref(), bucket, output),
        Command::Validate { paths } => validate(&paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
