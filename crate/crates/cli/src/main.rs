use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use microgrid_core::harness::synth::{generate_synthetic_scenario, SynthSpec};
use microgrid_core::harness::{
    compare_cases, compute_metrics, export_case_matrix, export_report, opening_schedule, report::write_metrics,
    run_restoration, CaseConfig,
};
use microgrid_core::scenario::{load_scenario, PolicyConfig, Scenario};
use microgrid_core::stage1::write_schedule_csv;

/// Islanded microgrid restoration: scheduling, dispatch and closed-loop
/// simulation.
#[derive(Parser)]
#[command(name = "mgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one case closed loop and write its report.
    Run(RunArgs),
    /// Simulate several cases on the same scenario and tabulate them.
    Compare(CompareArgs),
    /// Write a synthetic scenario directory.
    Gen(GenArgs),
    /// Load a scenario and report what it contains.
    Validate(SourceArgs),
    /// Solve the opening day-ahead schedule only.
    Solve(SolveArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Scenario TOML; a synthetic scenario is generated when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Seed for the synthetic scenario.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Restoration length in days.
    #[arg(long)]
    horizon_days: Option<u32>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "case3")]
    case: String,
    /// Report directory; metrics go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Cases to compare (repeatable); all four by default.
    #[arg(long)]
    case: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    horizon_days: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "case3")]
    case: String,
    /// Schedule CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(src: &SourceArgs) -> Result<Scenario> {
    let s = match &src.scenario {
        Some(path) => load_scenario(path)?,
        None => {
            let spec = SynthSpec { days: src.horizon_days.unwrap_or(SynthSpec::default().days), ..SynthSpec::default() };
            generate_synthetic_scenario(&spec, src.seed, PolicyConfig::default())?
        }
    };
    Ok(match src.horizon_days {
        Some(d) => s.truncated(d)?,
        None => s,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| microgrid_core::Error::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| microgrid_core::Error::io(path, e))?;
    Ok(BufWriter::new(f))
}

fn run(args: RunArgs) -> Result<()> {
    let s = load(&args.source)?;
    let case = CaseConfig::by_name(&args.case)?;
    let log = run_restoration(&s, &case)?;
    let m = compute_metrics(&log, &s);
    match &args.out {
        Some(dir) => {
            export_report(&s, &log, &m, dir)?;
            log::info!("report written to {}", dir.display());
        }
        None => write_metrics(&m, io::stdout().lock())?,
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let s = load(&args.source)?;
    let cases = if args.case.is_empty() {
        CaseConfig::table()
    } else {
        args.case.iter().map(|c| CaseConfig::by_name(c)).collect::<Result<_, _>>()?
    };
    let results = compare_cases(&s, &cases)?;
    match &args.out {
        Some(dir) => export_case_matrix(&s, &results, dir)?,
        None => {
            let named: Vec<_> = results.iter().map(|(l, m)| (l.case.name.clone(), m.clone())).collect();
            microgrid_core::harness::report::write_comparison(&named, io::stdout().lock())?;
        }
    }
    Ok(())
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = SynthSpec { days: args.horizon_days, ..SynthSpec::default() };
    let s = generate_synthetic_scenario(&spec, args.seed, PolicyConfig::default())?;
    let path = s.save(&args.out)?;
    println!("{}", path.display());
    Ok(())
}

fn validate(args: SourceArgs) -> Result<()> {
    let s = load(&args)?;
    let mut out = io::stdout().lock();
    writeln!(out, "period: {} to {} ({} days)", s.grids.start, s.grids.end, s.grids.days())?;
    writeln!(
        out,
        "grids: {} / {} / {} min, {} scheduling slots",
        s.grids.dt_sched_min,
        s.grids.dt_disp_min,
        s.grids.dt_rt_min,
        s.grids.sched_slots()
    )?;
    writeln!(out, "groups: {}", s.n_groups())?;
    for g in &s.groups {
        let parent = g.parent.map_or("-".to_string(), |p| p.to_string());
        writeln!(out, "  group {} weight {} parent {} nodes {}", g.id, g.weight, parent, g.nodes.len())?;
    }
    writeln!(out, "storage units: {}, generators: {}", s.es_units.len(), s.dg_units.len())?;
    writeln!(out, "ok")?;
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let s = load(&args.source)?;
    let case = CaseConfig::by_name(&args.case)?;
    let sched = opening_schedule(&s, &case)?;
    log::info!(
        "{:?}: objective {:.4}, gap {:.2e}, end fuel {:?}",
        sched.status,
        sched.objective,
        sched.gap,
        sched.end_fuel()
    );
    match &args.out {
        Some(path) => write_schedule_csv(&s, &sched, create(path)?)?,
        None => write_schedule_csv(&s, &sched, io::stdout().lock())?,
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<microgrid_core::Error>() {
        return e.exit_code() as u8;
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return 3;
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Gen(a) => gen(a),
        Command::Validate(a) => validate(a),
        Command::Solve(a) => solve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
