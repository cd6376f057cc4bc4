//! Command-line frontend: scenario simulation, fixed-point solves,
//! incentive checks, and curve estimation.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
//! configuration. Every run with an output directory writes a
//! `manifest.json` (config echo, seed, version) beside its outputs.

use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use feemarket::dynamics::{kernel_ttw_mc, UpdateParams};
use feemarket::experiments::{
    builtin_scenario, builtin_scenarios, run_scenario, sig9, ExperimentError, ScenarioConfig,
};
use feemarket::fixedpoint::{
    builtin, check_assumption_a2, iterate_to_fixed_point, mixture, FixedPointProblem,
    SolveOptions, SolveReport,
};
use feemarket::game::{check_ic_dsic, InstanceFamily, MechanismSpec};
use feemarket::rng::{child_seed, role};
use feemarket::values::{limited_demand_mc, probe_curve, revenue_curve_mc, ValueDistribution};
use feemarket::StaticMechanismKind;

#[derive(Parser)]
#[command(name = "feemarket", version, about = "Transaction-fee market mechanism laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace, summary, and manifest.
    Simulate(SimulateArgs),
    /// Iterate the mixture of a builtin function or a sampled mechanism
    /// kernel to a fixed point.
    Fixedpoint(FixedpointArgs),
    /// Run the bidder-IC and miner-DSIC oracles over random instances.
    CheckIc(CheckIcArgs),
    /// Estimate demand, revenue, and kernel curves on a price grid.
    Curves(CurvesArgs),
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Args)]
struct ScenarioSource {
    /// Built-in scenario name (see list-scenarios).
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Path to a scenario config JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Wdpp,
    Udpp,
    Twdpp,
    Eip1559,
    FirstPrice,
    SecondPrice,
    PostedMv,
    PostedRm,
    Monopolistic,
    Rsop,
    GspMod,
}

impl MechanismArg {
    fn to_spec(self, posted_price: Option<f64>) -> Result<MechanismSpec, CliError> {
        let q = || {
            posted_price.ok_or_else(|| {
                CliError::Config(vec![
                    "posted-price mechanisms require --posted-price".to_string()
                ])
            })
        };
        Ok(match self {
            MechanismArg::Wdpp => MechanismSpec::Wdpp,
            MechanismArg::Udpp => MechanismSpec::Udpp,
            MechanismArg::Twdpp => MechanismSpec::Twdpp,
            MechanismArg::Eip1559 => MechanismSpec::Eip1559,
            MechanismArg::FirstPrice => MechanismSpec::FirstPrice,
            MechanismArg::SecondPrice => MechanismSpec::SecondPrice,
            MechanismArg::PostedMv => MechanismSpec::PostedMv { q: q()? },
            MechanismArg::PostedRm => MechanismSpec::PostedRm { q: q()? },
            MechanismArg::Monopolistic => MechanismSpec::Monopolistic,
            MechanismArg::Rsop => MechanismSpec::Rsop,
            MechanismArg::GspMod => MechanismSpec::GspMod,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: ScenarioSource,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario mechanism.
    #[arg(long, value_enum)]
    mechanism: Option<MechanismArg>,
    /// Posted price for posted-mv / posted-rm mechanism overrides.
    #[arg(long)]
    posted_price: Option<f64>,
    /// Override the convergence parameter.
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the truncation parameter.
    #[arg(long)]
    delta: Option<f64>,
    /// Override the horizon.
    #[arg(long)]
    steps: Option<u64>,
    /// Output directory for trace, summary, and manifest.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuiltinFn {
    F1,
    F2,
}

#[derive(Args)]
struct FixedpointArgs {
    /// Builtin test function.
    #[arg(long, value_enum, conflicts_with_all = ["scenario", "config"])]
    builtin: Option<BuiltinFn>,
    #[command(flatten)]
    source: ScenarioSource,
    /// Mixture parameter (clamped to 1/(L+1) when larger).
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Starting point of the iteration.
    #[arg(long, default_value_t = 0.1)]
    x0: f64,
    /// Relative step tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Monte-Carlo samples per kernel oracle call (kernel mode).
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    /// Oracle calls averaged per evaluation (kernel mode).
    #[arg(long, default_value_t = 8)]
    averaging: usize,
    /// Seed for the kernel oracle streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for the trajectory CSV and manifest.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckIcArgs {
    /// Mechanism to check.
    #[arg(long, value_enum)]
    mechanism: MechanismArg,
    /// Posted price (fixed instead of redrawn per instance).
    #[arg(long)]
    posted_price: Option<f64>,
    /// Number of random instances per oracle.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Largest arrival-set size (at most 12).
    #[arg(long, default_value_t = 8)]
    n_max: usize,
    /// Largest supply.
    #[arg(long, default_value_t = 3)]
    m_max: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for the JSON report and manifest.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    #[command(flatten)]
    source: ScenarioSource,
    /// Number of grid points.
    #[arg(long, default_value_t = 41)]
    grid: usize,
    /// Upper end of the price grid (defaults to a price that prices out
    /// all but ~one bidder).
    #[arg(long)]
    q_max: Option<f64>,
    /// Monte-Carlo samples per grid point.
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the curves CSV and manifest.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(Vec<String>),
    Runtime(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(issues) => CliError::Config(issues),
            ExperimentError::Game(feemarket::game::GameError::InvalidConfig(issues)) => {
                CliError::Config(issues)
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fixedpoint(args) => fixedpoint(args),
        Command::CheckIc(args) => check_ic(args),
        Command::Curves(args) => curves(args),
        Command::ListScenarios => list_scenarios(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(issues)) => {
            eprintln!("invalid configuration:");
            for issue in issues {
                eprintln!("  - {issue}");
            }
            ExitCode::from(3)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Loads a scenario from a builtin name or a JSON file, applying CLI
/// overrides, and validates it.
fn load_scenario(
    source: &ScenarioSource,
    seed: Option<u64>,
    mechanism: Option<MechanismSpec>,
    alpha: Option<f64>,
    delta: Option<f64>,
    steps: Option<u64>,
) -> Result<ScenarioConfig, CliError> {
    let mut config = match (&source.scenario, &source.config) {
        (Some(name), None) => builtin_scenario(name).ok_or_else(|| {
            CliError::Config(vec![format!(
                "unknown builtin scenario '{name}' (see list-scenarios)"
            )])
        })?,
        (None, Some(path)) => load_config(path)?,
        _ => {
            return Err(CliError::Config(vec![
                "exactly one of --scenario or --config is required".to_string(),
            ]))
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(mechanism) = mechanism {
        config.mechanism = mechanism;
    }
    if let Some(alpha) = alpha {
        config.alpha = alpha;
    }
    if let Some(delta) = delta {
        config.delta = delta;
    }
    if let Some(steps) = steps {
        config.horizon = steps;
        if config.burn_in.is_some_and(|b| b >= steps) {
            config.burn_in = None;
        }
    }
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(CliError::Config(issues));
    }
    Ok(config)
}

/// Parses and validates a scenario config file. Unknown keys are rejected;
/// parse errors carry line and column.
fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))?;
    let config: ScenarioConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(vec![format!(
            "{} at line {} column {}",
            e,
            e.line(),
            e.column()
        )])
    })?;
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(CliError::Config(issues));
    }
    Ok(config)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))?;
    let manifest = json!({
        "artifact": "feemarket",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mechanism = args
        .mechanism
        .map(|m| m.to_spec(args.posted_price))
        .transpose()?;
    let config = load_scenario(
        &args.source,
        args.seed,
        mechanism,
        args.alpha,
        args.delta,
        args.steps,
    )?;
    write_manifest(
        &args.out,
        "simulate",
        config.seed,
        serde_json::to_value(&config).expect("config serializes"),
    )?;
    let run = run_scenario(&config, Some(&args.out))?;
    let s = &run.summary;
    println!("scenario {} (seed {}, {} steps, burn-in {})", s.name, s.seed, s.horizon, s.burn_in);
    println!("  mean price        {}", sig9(s.mean_price));
    println!("  mean welfare      {}", sig9(s.mean_welfare_ratio));
    println!("  mean utilization  {}", sig9(s.mean_utilization));
    println!("  mean revenue      {}", sig9(s.mean_revenue));
    if let (Some(q), Some(se)) = (s.equilibrium_price, s.equilibrium_se) {
        println!("  equilibrium price {} +- {}", sig9(q), sig9(se));
    }
    if let Some(v) = &s.stability {
        println!("  stability         {v:?}");
    }
    println!("wrote {}", args.out.join(format!("{}.trace.csv", s.name)).display());
    Ok(())
}

fn print_solve_report(r: &SolveReport) {
    println!("x_star      {}", sig9(r.x_star));
    println!("iterations  {}", r.iterations);
    println!("residual    {:e}", r.residual);
    println!("converged   {}", r.converged);
    println!("alpha_used  {}{}", sig9(r.alpha_used), if r.alpha_clamped { " (clamped)" } else { "" });
}

fn write_trajectory(dir: &Path, trajectory: &[f64]) -> Result<PathBuf, CliError> {
    let mut csv = String::from("iteration,x\n");
    for (i, x) in trajectory.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", sig9(*x)));
    }
    let path = dir.join("trajectory.csv");
    fs::write(&path, csv)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}

fn fixedpoint(args: FixedpointArgs) -> Result<(), CliError> {
    let options = SolveOptions {
        tol: args.tol,
        max_iter: 100_000,
        log_trajectory: true,
        oracle_calls_per_eval: 1,
    };
    let report = if let Some(f) = args.builtin {
        let (f, l, name): (fn(f64) -> f64, f64, &str) = match f {
            BuiltinFn::F1 => (builtin::f1, builtin::LIPSCHITZ_F1, "f1"),
            BuiltinFn::F2 => (builtin::f2, builtin::LIPSCHITZ_F2, "f2"),
        };
        println!("builtin {name}, alpha {}, x0 {}, tol {:e}", args.alpha, args.x0, args.tol);
        let mut problem = FixedPointProblem::new(f, builtin::A_BAR, l, args.alpha);
        let report = iterate_to_fixed_point(&mut problem, args.x0, &options);
        // Assumption diagnostics on the mixture, over the builtin domain.
        let g = mixture(f, report.alpha_used);
        let grid: Vec<f64> = (0..=180).map(|i| 0.025 * i as f64).collect();
        let diag = check_assumption_a2(&g, &grid, 1e-9);
        println!(
            "mixture diagnostics: {} concavity violations, decreasing-branch L {}, descent witness {}",
            diag.concavity_violations.len(),
            diag.decreasing_lipschitz.map(sig9).unwrap_or_else(|| "-".into()),
            diag.descent_witness.map(sig9).unwrap_or_else(|| "-".into()),
        );
        report
    } else {
        let config = load_scenario(&args.source, Some(args.seed), None, None, None, None)?;
        let n = config.demand.n_at(1);
        let params = UpdateParams::new(config.alpha, config.delta, config.m);
        let dist = config.values.clone();
        let a_bar = dist.support_upper_bound();
        println!(
            "kernel twdpp for scenario {} (n {}, m {}, delta {}), alpha {}, x0 {}",
            config.name, n, config.m, config.delta, args.alpha, args.x0
        );
        // Crude Lipschitz estimate: the full-block branch has slope
        // (1+delta); the welfare branch is steeper near the transition, so
        // probe the Monte-Carlo kernel before solving.
        let probe_grid: Vec<f64> = (1..=32).map(|i| a_bar * i as f64 / 32.0).collect();
        let probe_seed = child_seed(args.seed, role::ORACLE, u64::MAX);
        let kernel_at = |q: f64, s: u64| {
            kernel_ttw_mc(&dist, n, &params, q, args.samples, s)
                .expect("validated distribution")
                .value
        };
        let diag = probe_curve(
            |q| kernel_at(q, probe_seed),
            &probe_grid,
            f64::INFINITY,
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        let lipschitz = diag.l_hat.max(1.0 + params.delta);
        println!("estimated kernel Lipschitz bound {}", sig9(lipschitz));

        let counter = Cell::new(0u64);
        let base = child_seed(args.seed, role::ORACLE, 0);
        let mut problem = FixedPointProblem::new(
            |q: f64| {
                let c = counter.get();
                counter.set(c + 1);
                kernel_at(q.max(1e-9), child_seed(base, role::ORACLE, c))
            },
            a_bar,
            lipschitz,
            args.alpha,
        );
        let noisy = SolveOptions {
            oracle_calls_per_eval: args.averaging.max(1),
            ..options
        };
        iterate_to_fixed_point(&mut problem, args.x0, &noisy)
    };

    print_solve_report(&report);
    if let Some(dir) = &args.out {
        write_manifest(
            dir,
            "fixedpoint",
            args.seed,
            json!({"alpha": args.alpha, "x0": args.x0, "tol": args.tol}),
        )?;
        let path = write_trajectory(dir, report.trajectory.as_deref().unwrap_or(&report.tail))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn check_ic(args: CheckIcArgs) -> Result<(), CliError> {
    if args.n_max > 12 {
        return Err(CliError::Config(vec![format!(
            "n_max must be at most 12 (exhaustive search bound), got {}",
            args.n_max
        )]));
    }
    if args.m_max < 1 || args.n_max < 1 || args.trials < 1 {
        return Err(CliError::Config(vec![
            "trials, n_max, and m_max must be at least 1".to_string(),
        ]));
    }
    let spec = args.mechanism.to_spec(args.posted_price.or(Some(0.0)))?;
    let kind: StaticMechanismKind = match spec {
        MechanismSpec::Wdpp => StaticMechanismKind::PostedPriceMv { q: 0.0 },
        MechanismSpec::Udpp | MechanismSpec::Twdpp | MechanismSpec::Eip1559 => {
            StaticMechanismKind::PostedPriceRm { q: 0.0 }
        }
        other => other.static_kind().expect("static kind"),
    };
    let dist = ValueDistribution::Uniform { lo: 0.0, hi: 100.0 };
    let mut family = InstanceFamily::small(dist);
    family.n_range = (2.min(args.n_max), args.n_max);
    family.m_range = (1, args.m_max);
    if let Some(q) = args.posted_price {
        family.posted_price_range = Some((q, q + f64::EPSILON * q.max(1.0)));
    }
    let report = check_ic_dsic(kind, &family, args.trials, args.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    println!("mechanism    {kind:?}");
    println!("trials       {}", report.trials);
    println!("ic_holds     {}", report.ic_holds);
    println!("dsic_holds   {}", report.dsic_holds);
    if let Some(cex) = &report.ic_counterexample {
        println!(
            "ic counterexample:\n{}",
            serde_json::to_string_pretty(cex).expect("serializes")
        );
    }
    if let Some(cex) = &report.dsic_counterexample {
        println!(
            "dsic counterexample:\n{}",
            serde_json::to_string_pretty(cex).expect("serializes")
        );
    }
    if let Some(dir) = &args.out {
        write_manifest(
            dir,
            "check-ic",
            args.seed,
            json!({"mechanism": format!("{kind:?}"), "trials": args.trials}),
        )?;
        let path = dir.join("ic-report.json");
        fs::write(&path, serde_json::to_string_pretty(&report).expect("serializes"))
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn curves(args: CurvesArgs) -> Result<(), CliError> {
    let config = load_scenario(&args.source, args.seed, None, None, None, None)?;
    if args.grid < 3 {
        return Err(CliError::Config(vec!["grid needs at least 3 points".to_string()]));
    }
    let n = config.demand.n_at(1);
    let params = UpdateParams::new(config.alpha, config.delta, config.m);
    let dist = config.values.clone();
    let q_max = args.q_max.unwrap_or_else(|| scarcity_price(&dist, n));
    let seed = config.seed;

    let mut rows = Vec::with_capacity(args.grid);
    for i in 0..args.grid {
        let q = q_max * (i + 1) as f64 / args.grid as f64;
        let d = limited_demand_mc(&dist, n, config.m, q, args.samples, child_seed(seed, 1, i as u64))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let r = revenue_curve_mc(&dist, n, config.m, q, args.samples, child_seed(seed, 2, i as u64))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let k = kernel_ttw_mc(&dist, n, &params, q, args.samples, child_seed(seed, 3, i as u64))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push((q, d, r, k));
    }

    let grid: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let revenue: Vec<f64> = rows.iter().map(|r| r.2.value).collect();
    let kernel: Vec<f64> = rows.iter().map(|r| r.3.value).collect();
    let max_se = rows
        .iter()
        .flat_map(|r| [r.2.std_error, r.3.std_error])
        .fold(0.0f64, f64::max);
    let tol = 3.0 * max_se;
    for (name, ys) in [("revenue", &revenue), ("kernel_ttw", &kernel)] {
        let diag = probe_curve(
            |q| {
                let i = grid.iter().position(|g| (g - q).abs() < 1e-12).expect("grid point");
                ys[i]
            },
            &grid,
            tol,
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!(
            "{name}: L_hat {} ({} concavity violations beyond 3*max SE)",
            sig9(diag.l_hat),
            diag.concavity_violations.len()
        );
    }

    let mut csv =
        String::from("q,demand_mean,demand_se,revenue_mean,revenue_se,kernel_ttw_mean,kernel_ttw_se\n");
    for (q, d, r, k) in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sig9(*q),
            sig9(d.value),
            sig9(d.std_error),
            sig9(r.value),
            sig9(r.std_error),
            sig9(k.value),
            sig9(k.std_error),
        ));
    }
    match &args.out {
        Some(dir) => {
            write_manifest(
                dir,
                "curves",
                seed,
                serde_json::to_value(&config).expect("config serializes"),
            )?;
            let path = dir.join("curves.csv");
            fs::write(&path, csv)
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

/// The price at which expected demand drops to about one bidder, found by
/// bisection on the cdf; a sensible plotting bound for unbounded supports.
fn scarcity_price(dist: &ValueDistribution, n: usize) -> f64 {
    let target = 1.0 - 1.0 / n.max(2) as f64;
    let (mut lo, mut hi) = (0.0, dist.support_upper_bound());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn list_scenarios() -> Result<(), CliError> {
    for s in builtin_scenarios() {
        println!(
            "{:24} {:?} m={} horizon={} values={:?}",
            s.name,
            s.mechanism,
            s.m,
            s.horizon,
            s.values
        );
    }
    Ok(())
}
