mod grid;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bushold_core::analytics::oracle_table;
use bushold_core::metrics::{
    paired_savings, write_comparison_csv, write_savings_csv, write_stop_csv, ComparisonRow,
    LineFilter,
};
use bushold_core::simulator::{run_experiment, run_replication, ExperimentResult, ReplicationSettings};
use bushold_core::stochastic::{Purpose, RngStream};
use bushold_core::{load_scenario, PredictionMode, Scenario, StrategyRegistry, StrategySpec};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Exit code when a run hit the replication cap before converging.
const NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "bushold", version, about = "Bus corridor holding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy to convergence and write its results.
    Run(RunArgs),
    /// Run every point of a parameter grid on common random numbers.
    Sweep(SweepArgs),
    /// Print the holding-delay coefficient next to a Monte Carlo estimate.
    Analytics(AnalyticsArgs),
    /// Load and check a scenario file.
    Validate {
        #[arg(value_name = "SCENARIO")]
        scenario: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    /// Scenario file, or `gbrt` / `homogeneous` for the built-in ones.
    #[arg(long, value_name = "PATH")]
    scenario: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of following buses predicted by berrebi15.
    #[arg(long = "M", value_name = "M")]
    horizon: Option<usize>,
    #[arg(long, value_parser = ["schedule", "perfect"])]
    prediction: Option<String>,
    #[arg(long)]
    demand_factor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    min_reps: usize,
    #[arg(long, default_value_t = 10_000)]
    max_reps: usize,
    /// Bound on the variance of each mean stop delay, min².
    #[arg(long, default_value_t = 5e-4)]
    variance_threshold: f64,
    /// Report delays of held lines only.
    #[arg(long)]
    held_only: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (same as --scenario).
    #[arg(value_name = "SCENARIO", conflicts_with = "scenario")]
    positional: Option<String>,
    #[command(flatten)]
    o: Overrides,
    /// Also write the event log of replication 0 to log.csv.
    #[arg(long)]
    dump_log: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_name = "SCENARIO", conflicts_with = "scenario")]
    positional: Option<String>,
    #[command(flatten)]
    o: Overrides,
    /// Grid axis `key=v1,v2,...`; repeat for a cartesian product. Keys:
    /// strategy, eta, gamma, alpha, M, prediction, demand_factor.
    /// `alpha` alone sweeps 0.1,0.3,0.5,0.7,0.9.
    #[arg(long = "grid", value_name = "KEY=VALUES", required = true)]
    grid: Vec<String>,
}

#[derive(Args)]
struct AnalyticsArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,10,100,300")]
    j: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 20_220_901)]
    seed: u64,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Summary {
    scenario: String,
    strategy: String,
    params: String,
    demand_factor: f64,
    gamma: f64,
    seed: u64,
    grand_cv: f64,
    mean_cumulative_delay: f64,
    hold_delay: f64,
    replications: usize,
    converged: bool,
    complete: bool,
}

fn load(arg: Option<&str>) -> Result<Scenario> {
    match arg {
        None => Ok(Scenario::gbrt()),
        Some(p) if Path::new(p).exists() => load_scenario(p).with_context(|| format!("loading {p}")),
        Some("gbrt") => Ok(Scenario::gbrt()),
        Some("homogeneous") => Ok(Scenario::homogeneous()),
        Some(p) => load_scenario(p).with_context(|| format!("loading {p}")),
    }
}

fn apply(base: &Scenario, o: &Overrides, point: &[(String, String)]) -> Result<Scenario> {
    let mut sc = base.clone();
    let mut spec = sc.strategy.clone();
    let mut gamma = o.gamma;
    let mut demand = o.demand_factor;
    if let Some(s) = &o.strategy {
        spec.name = s.clone();
    }
    if let Some(v) = o.eta {
        spec.eta = v;
    }
    if let Some(v) = o.alpha {
        spec.alpha = v;
    }
    if let Some(v) = o.horizon {
        spec.horizon = v;
    }
    if let Some(p) = &o.prediction {
        spec.prediction = p.parse::<PredictionMode>()?;
    }
    for (k, v) in point {
        match k.as_str() {
            "strategy" => spec.name = v.clone(),
            "eta" => spec.eta = v.parse()?,
            "alpha" => spec.alpha = v.parse()?,
            "M" => spec.horizon = v.parse().with_context(|| format!("M must be a whole number, got {v}"))?,
            "prediction" => spec.prediction = v.parse::<PredictionMode>()?,
            "gamma" => gamma = Some(v.parse()?),
            "demand_factor" => demand = Some(v.parse()?),
            other => bail!("unknown grid key {other}"),
        }
    }
    if let Some(g) = gamma {
        sc = sc.with_gamma(g)?;
    }
    if let Some(d) = demand {
        sc.demand_factor = d;
    }
    if let Some(s) = o.seed {
        sc.seed = s;
    }
    if !StrategyRegistry::builtin().contains(&spec.name) {
        let names: Vec<&str> = StrategyRegistry::builtin().names().collect();
        bail!("unknown strategy `{}` (known: {})", spec.name, names.join(", "));
    }
    if !(0.0..=1.0).contains(&spec.eta) || !(0.0..=1.0).contains(&spec.alpha) {
        bail!("eta and alpha must lie in [0, 1]");
    }
    if spec.horizon == 0 {
        bail!("M must be at least 1");
    }
    sc.strategy = spec;
    sc.validate()?;
    Ok(sc)
}

fn settings(o: &Overrides) -> ReplicationSettings {
    ReplicationSettings {
        min_reps: o.min_reps,
        max_reps: o.max_reps,
        variance_threshold: o.variance_threshold,
        filter: if o.held_only { LineFilter::HeldOnly } else { LineFilter::All },
    }
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn summary(sc: &Scenario, r: &ExperimentResult) -> Summary {
    Summary {
        scenario: sc.name.clone(),
        strategy: sc.strategy.name.clone(),
        params: sc.strategy.label(),
        demand_factor: sc.demand_factor,
        gamma: sc.gamma,
        seed: sc.seed,
        grand_cv: r.aggregate.grand_cv.mean,
        mean_cumulative_delay: r.aggregate.mean_cumulative_delay(),
        hold_delay: r.aggregate.mean_hold.mean,
        replications: r.replications(),
        converged: r.converged,
        complete: r.complete,
    }
}

fn row(s: &Summary) -> ComparisonRow {
    ComparisonRow {
        strategy: s.strategy.clone(),
        params: s.params.clone(),
        grand_cv: s.grand_cv,
        mean_cumulative_delay: s.mean_cumulative_delay,
        hold_delay: s.hold_delay,
        replications: s.replications,
        converged: s.converged,
    }
}

fn experiment(sc: &Scenario, set: &ReplicationSettings) -> Result<ExperimentResult> {
    let r = run_experiment(sc, set)?;
    let label = format!("{} {}", sc.strategy.name, sc.strategy.label());
    eprintln!(
        "{}: {} replications{}",
        label.trim(),
        r.replications(),
        if r.converged { "" } else { ", NOT converged" }
    );
    if !r.complete {
        eprintln!("warning: some replications hit the run-out limit with buses still in the corridor");
    }
    Ok(r)
}

/// Writes the per-run files into `dir` and returns the summary.
fn write_run(
    dir: &Path,
    sc: &Scenario,
    r: &ExperimentResult,
    baseline: Option<&ExperimentResult>,
) -> Result<Summary> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_stop_csv(&r.aggregate, create(&dir.join("stops.csv"))?)?;
    if let Some(b) = baseline {
        let savings = paired_savings(&b.records, &r.records);
        write_savings_csv(&savings, create(&dir.join("savings.csv"))?)?;
    }
    let s = summary(sc, r);
    serde_json::to_writer_pretty(create(&dir.join("summary.json"))?, &s)?;
    Ok(s)
}

fn baseline_of(sc: &Scenario) -> Scenario {
    let mut b = sc.clone();
    b.strategy = StrategySpec::named("none");
    b
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let o = &args.o;
    let base = load(args.positional.as_deref().or(o.scenario.as_deref()))?;
    let sc = apply(&base, o, &[])?;
    let set = settings(o);
    set.validate()?;
    let r = experiment(&sc, &set)?;
    let mut converged = r.converged;
    let baseline = if sc.strategy.name != "none" {
        let b = experiment(&baseline_of(&sc), &set)?;
        converged &= b.converged;
        Some(b)
    } else {
        None
    };
    let s = write_run(&o.out, &sc, &r, baseline.as_ref())?;
    write_comparison_csv(&[row(&s)], create(&o.out.join("comparison.csv"))?)?;
    if args.dump_log {
        let log = run_replication(&sc, 0)?.log;
        log.save_csv(&sc, o.out.join("log.csv"))?;
    }
    println!("{}", serde_json::to_string_pretty(&s)?);
    Ok(converged)
}

fn cmd_sweep(args: SweepArgs) -> Result<bool> {
    let o = &args.o;
    let axes = args.grid.iter().map(|g| grid::parse_axis(g)).collect::<Result<Vec<_>>>()?;
    let base = load(args.positional.as_deref().or(o.scenario.as_deref()))?;
    let set = settings(o);
    set.validate()?;
    let points = grid::expand(&axes);
    let scenarios = points.iter().map(|p| apply(&base, o, p)).collect::<Result<Vec<_>>>()?;

    let mut converged = true;
    // baselines depend only on the demand split and scale
    let mut baselines: HashMap<(u64, u64), ExperimentResult> = HashMap::new();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (point, sc) in points.iter().zip(&scenarios) {
        let key = (sc.gamma.to_bits(), sc.demand_factor.to_bits());
        if let std::collections::hash_map::Entry::Vacant(slot) = baselines.entry(key) {
            let b = experiment(&baseline_of(sc), &set)?;
            converged &= b.converged;
            slot.insert(b);
        }
        let r = experiment(sc, &set)?;
        converged &= r.converged;
        let name: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let s = write_run(&o.out.join(name.join("_")), sc, &r, Some(&baselines[&key]))?;
        rows.push(row(&s));
        summaries.push(s);
    }
    write_comparison_csv(&rows, create(&o.out.join("comparison.csv"))?)?;
    serde_json::to_writer_pretty(create(&o.out.join("summary.json"))?, &summaries)?;
    for s in &summaries {
        println!(
            "{:<20} {:<28} cv {:.3}  W {:.2}  hold {:.2}  reps {}{}",
            s.strategy,
            s.params,
            s.grand_cv,
            s.mean_cumulative_delay,
            s.hold_delay,
            s.replications,
            if s.converged { "" } else { " (not converged)" }
        );
    }
    Ok(converged)
}

fn cmd_analytics(args: AnalyticsArgs) -> Result<()> {
    if args.j.contains(&0) || args.draws == 0 {
        bail!("j and draws must be at least 1");
    }
    let mut rng = RngStream::new(args.seed, 0, Purpose::Oracle(0)).rng();
    let rows = oracle_table(&args.j, args.draws, &mut rng)?;
    println!("{:>6} {:>12} {:>12} {:>10}", "j", "coefficient", "monte_carlo", "rel_error");
    for r in &rows {
        println!("{:>6} {:>12.6} {:>12.6} {:>9.3}%", r.j, r.coefficient, r.monte_carlo, 100.0 * r.relative_error);
    }
    if let Some(path) = args.out {
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["j", "coefficient", "monte_carlo", "relative_error"])?;
        for r in &rows {
            w.serialize((r.j, r.coefficient, r.monte_carlo, r.relative_error))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<()> {
    let sc = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    StrategyRegistry::builtin().build(&sc.strategy)?;
    println!(
        "{}: {} lines, {} stops, {} groups, strategy {} ok",
        sc.name,
        sc.lines.len(),
        sc.stop_count(),
        sc.groups.len(),
        sc.strategy.name
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analytics(a) => cmd_analytics(a).map(|_| true),
        Command::Validate { scenario } => cmd_validate(&scenario).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: replication cap reached before the variance threshold was met");
            ExitCode::from(NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
