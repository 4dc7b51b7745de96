use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use greenlab::config::{Experiment, ExperimentConfig};
use greenlab::experiments;
use greenlab::green::{tensor_magnitudes, GreenSolver};
use greenlab::mesh::{magnitudes, BoxGrid};
use greenlab::report::{dump_field, write_report, VerificationReport};
use greenlab::{Error, Result};

#[derive(Parser)]
#[command(name = "greenlab", version, about = "Green functions of periodic elliptic operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print coefficient field properties.
    FieldInfo(Common),
    /// Solve one Green column and check its sign.
    Solve(Common),
    /// Fit decay exponents.
    Decay(Common),
    /// Weak-Lebesgue norm and embedding checks.
    Lorentz(Common),
    /// Compare the lifted construction with the planar Green function.
    Lift(Common),
    /// Run the experiments listed in the configuration.
    Verify(Common),
    /// Write a Green column, its gradient or mixed-derivative magnitude as CSV.
    Dump(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset, applied before the file and overrides.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` settings.
    overrides: Vec<String>,
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.preset {
        Some(name) => ExperimentConfig::preset(name)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &c.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    for o in &c.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    if let Some(t) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn verify(c: &Common, only: Option<Experiment>) -> Result<u8> {
    let mut cfg = load(c)?;
    if let Some(e) = only {
        cfg.experiments = vec![e];
    }
    let start = Instant::now();
    let checks = experiments::run(&cfg)?;
    let report = VerificationReport::new(
        c.preset.clone(),
        serde_json::to_value(&cfg)?,
        checks,
        start.elapsed().as_secs_f64(),
    );
    for check in &report.checks {
        println!("{} {}", if check.passed { "PASS" } else { "FAIL" }, check.name);
    }
    std::fs::create_dir_all(&c.out)?;
    let path = c.out.join("report.json");
    write_report(&report, &path)?;
    println!(
        "{}: {} ({})",
        if report.passed { "PASS" } else { "FAIL" },
        path.display(),
        report.checks.len()
    );
    Ok(report.exit_code())
}

fn field_info(c: &Common) -> Result<u8> {
    let cfg = load(c)?;
    for f in cfg.fields()? {
        let info = json!({
            "family": f.family,
            "dim": f.dim,
            "params": f.params,
            "alpha": f.alpha,
            "bound": f.bound,
            "holder_exponent": f.holder_exponent,
            "symmetric": f.is_symmetric(),
            "sampled_coercivity": f.verify_coercivity(32)?,
            "periodic": f.verify_periodicity(256, cfg.seed),
        });
        println!("{}", serde_json::to_string_pretty(&info)?);
    }
    Ok(0)
}

fn dump(c: &Common) -> Result<u8> {
    let cfg = load(c)?;
    let quantity = cfg.quantities.first().map(String::as_str).unwrap_or("g");
    std::fs::create_dir_all(&c.out)?;
    for f in cfg.fields()? {
        let grid = BoxGrid::cube(cfg.dim, cfg.radius, cfg.n, cfg.source_points()[0])?;
        let solver = GreenSolver::new(&f, &grid)?;
        let y = grid.center_node();
        let values = match quantity {
            "g" => solver.column(y)?.values,
            "grad" => magnitudes(&solver.column(y)?.gradient()),
            _ => tensor_magnitudes(&solver.mixed_derivative(y)?),
        };
        let path = c.out.join(format!("{}_{quantity}.csv", f.family));
        dump_field(&grid, &values, &path)?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn dispatch(cmd: &Command) -> Result<u8> {
    match cmd {
        Command::FieldInfo(c) => field_info(c),
        Command::Solve(c) => verify(c, Some(Experiment::Solve)),
        Command::Decay(c) => verify(c, Some(Experiment::Decay)),
        Command::Lorentz(c) => verify(c, Some(Experiment::Lorentz)),
        Command::Lift(c) => verify(c, Some(Experiment::Lift)),
        Command::Verify(c) => verify(c, None),
        Command::Dump(c) => dump(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
