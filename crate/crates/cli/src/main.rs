use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use oamnet::mode_algebra::{apply_rotation, lg_coefficients, lg_mode, rotation_eigenphase, rotation_matrix, ModeIndices};
use oamnet::report::write_report;
use oamnet::runner::{run_scenario, sort_histogram, RunOptions};
use oamnet::scenario::parse_scenario;
use oamnet::sorter::build_sorter_tree;
use oamnet::verify::run_checks;
use oamnet::{Complex64, PiAngle};

#[derive(Parser)]
#[command(name = "oamnet", version, about = "OAM-addressed BB84 network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a Laguerre-Gauss mode over Hermite-Gauss modes, optionally rotated.
    Modes(ModesArgs),
    /// Route photons through a mode sorter and print the leaf histogram.
    Sort(SortArgs),
    /// Run every session of a scenario and write the report.
    Run(RunArgs),
    /// Run the built-in self-checks.
    Verify,
}

#[derive(Args)]
struct ModesArgs {
    #[arg(long, requires = "m", conflicts_with_all = ["l", "p"])]
    n: Option<u32>,
    #[arg(long, requires = "n")]
    m: Option<u32>,
    /// Signed azimuthal index.
    #[arg(long, short = 'l', allow_negative_numbers = true, requires = "p")]
    l: Option<i64>,
    /// Radial index.
    #[arg(long, requires = "l")]
    p: Option<u32>,
    /// Rotation angle, in radians or as a multiple of pi ("1/4 pi").
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SortArgs {
    /// Take the sorter from this scenario's network.
    #[arg(long, conflicts_with = "addresses")]
    scenario: Option<PathBuf>,
    /// Comma-separated addresses to synthesize a sorter for.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    addresses: Vec<i64>,
    /// Modes to send; defaults to the sorter's addresses.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    ell: Vec<i64>,
    #[arg(long, default_value_t = 10_000)]
    photons: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthesize without quarter-wave plates.
    #[arg(long)]
    no_qwp: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Report path; `-` for stdout. Defaults to the scenario's output, else stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run sessions on disjoint user pairs concurrently.
    #[arg(long)]
    parallel: bool,
    /// Base seed; session i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Photons per session, overriding the scenario.
    #[arg(long)]
    photons: Option<usize>,
}

fn parse_angle(s: &str) -> Result<f64, String> {
    if s.contains("pi") {
        s.parse::<PiAngle>().map(|a| a.radians()).map_err(|e| e.to_string())
    } else {
        s.trim().parse::<f64>().map_err(|e| e.to_string())
    }
}

fn modes(args: ModesArgs) -> Result<ExitCode> {
    let (indices, mode) = match (args.n, args.m, args.l, args.p) {
        (Some(n), Some(m), _, _) => (ModeIndices::from_nm(n, m), lg_coefficients(n, m)?),
        (_, _, Some(l), Some(p)) => (ModeIndices::from_lp(l, p), lg_mode(l, p)?),
        _ => bail!("give either --n and --m, or --l and --p"),
    };
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "LG n={} m={} (ell={}, p={}), order {}",
        indices.n,
        indices.m,
        indices.ell,
        indices.p,
        indices.order()
    )?;
    writeln!(out, "HG(k, N-k) coefficients:")?;
    writeln!(out, "{mode}")?;
    if let Some(alpha) = args.alpha {
        let matrix = rotation_matrix(indices.order(), alpha)?;
        let rotated = apply_rotation(&mode, alpha)?;
        let phase = rotation_eigenphase(indices.ell, indices.p, alpha)?;
        let expected = mode.scaled(Complex64::from_polar(1.0, -phase));
        writeln!(out, "rotation matrix at alpha={alpha}:")?;
        writeln!(out, "{matrix}")?;
        writeln!(out, "rotated coefficients:")?;
        writeln!(out, "{rotated}")?;
        writeln!(out, "eigenphase ell*alpha = {phase:.12} rad, residual {:.3e}", rotated.max_abs_diff(&expected).unwrap_or(f64::INFINITY))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn sort(args: SortArgs) -> Result<ExitCode> {
    let tree = match &args.scenario {
        Some(path) => parse_scenario(path)?.network.sorter().clone(),
        None if args.addresses.is_empty() => bail!("give --scenario or --addresses"),
        None => build_sorter_tree(&args.addresses, !args.no_qwp)?,
    };
    let ells = if args.ell.is_empty() { tree.addresses() } else { args.ell.clone() };
    let hist = sort_histogram(&tree, &ells, args.photons, args.seed);

    let mut out = io::stdout().lock();
    writeln!(out, "{tree}")?;
    write!(out, "ell")?;
    for leaf in tree.leaves() {
        write!(out, "\tleaf{}", leaf.id)?;
    }
    writeln!(out, "\tstray")?;
    for h in &hist {
        write!(out, "{}", h.ell)?;
        for count in &h.counts {
            write!(out, "\t{count}")?;
        }
        writeln!(out, "\t{}", if h.stray { "yes" } else { "no" })?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let scenario = parse_scenario(&args.scenario)?;
    let options = RunOptions { parallel: args.parallel, seed: args.seed, photons: args.photons };
    let summary = run_scenario(&scenario, options);

    let target = args.output.or_else(|| scenario.output.report.clone());
    match target.filter(|p| p.as_os_str() != "-") {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_report(&summary.records, file)?;
        }
        None => write_report(&summary.records, io::stdout().lock())?,
    }
    for (record, err) in summary.errors() {
        eprintln!("session {}: {err}", record.session);
    }
    Ok(if summary.any_error() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn verify() -> Result<ExitCode> {
    let checks = run_checks();
    let mut out = io::stdout().lock();
    for c in &checks {
        writeln!(out, "{}  {:<26} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail)?;
    }
    Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Modes(a) => modes(a),
        Command::Sort(a) => sort(a),
        Command::Run(a) => run(a),
        Command::Verify => verify(),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
