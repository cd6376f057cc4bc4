//! Scenario definitions, trace metrics, equilibrium and stability
//! classification, and the built-in experiment suite.
//!
//! A scenario wraps a game configuration with a burn-in window and output
//! paths. Traces are written as CSV with the fixed column order
//! `t,n,q,sold,welfare_achieved,welfare_opt,revenue,utilization`; floats
//! carry 9 significant digits and identical configs produce byte-identical
//! files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::UpdateParams;
use crate::game::{self, BidderStrategy, GameConfig, GameError, MechanismSpec, MinerStrategy};
use crate::market::{allocate_mv, allocate_rm, Bid};
use crate::rng::{self, role};
use crate::values::{optimal_welfare, sample_values_with, DemandProfile, ValueDistribution};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("trace too short: {len} steps, need at least {need}")]
    TraceTooShort { len: usize, need: usize },
    #[error("{context} ({path}): {source}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// One step of a simulation trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    pub n: usize,
    pub q: f64,
    pub sold: usize,
    pub welfare_achieved: f64,
    pub welfare_opt: f64,
    pub revenue: f64,
    pub utilization: f64,
}

/// A full per-step trace of one game run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub records: Vec<TraceRecord>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.q).collect()
    }

    /// Maximal runs of constant demand, for per-segment stability checks
    /// around demand shocks.
    pub fn demand_segments(&self) -> Vec<std::ops::Range<usize>> {
        let mut segments = Vec::new();
        let mut start = 0;
        for i in 1..self.records.len() {
            if self.records[i].n != self.records[start].n {
                segments.push(start..i);
                start = i;
            }
        }
        if start < self.records.len() {
            segments.push(start..self.records.len());
        }
        segments
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,n,q,sold,welfare_achieved,welfare_opt,revenue,utilization\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.t,
                r.n,
                sig9(r.q),
                r.sold,
                sig9(r.welfare_achieved),
                sig9(r.welfare_opt),
                sig9(r.revenue),
                sig9(r.utilization),
            ));
        }
        out
    }
}

/// Formats with 9 significant digits (plain decimal, no exponent).
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn default_m() -> usize {
    100
}
fn default_alpha() -> f64 {
    1.0 / 16.0
}
fn default_delta() -> f64 {
    1.0
}
fn default_q0() -> f64 {
    10.0
}
fn default_horizon() -> u64 {
    10_000
}
fn default_seed() -> u64 {
    1
}

/// A named scenario: a game configuration plus burn-in and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mechanism: MechanismSpec,
    pub demand: DemandProfile,
    pub values: ValueDistribution,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub miner: MinerStrategy,
    #[serde(default)]
    pub bidders: BidderStrategy,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_q0")]
    pub q0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    /// Defaults to a fifth of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn burn_in(&self) -> u64 {
        self.burn_in.unwrap_or(self.horizon / 5)
    }

    pub fn game(&self) -> GameConfig {
        GameConfig {
            mechanism: self.mechanism,
            m: self.m,
            demand: self.demand.clone(),
            values: self.values.clone(),
            miner: self.miner,
            bidders: self.bidders,
            horizon: self.horizon,
            alpha: self.alpha,
            delta: self.delta,
            q0: self.q0,
            seed: self.seed,
        }
    }

    /// Collects every violated constraint (empty means valid).
    pub fn validate(&self) -> Vec<String> {
        let mut issues = self.game().validate();
        if self.name.is_empty() {
            issues.push("scenario name must not be empty".into());
        }
        if self.burn_in() >= self.horizon {
            issues.push(format!(
                "burn_in ({}) must be smaller than horizon ({})",
                self.burn_in(),
                self.horizon
            ));
        }
        issues
    }
}

/// Post-burn-in summary statistics of one scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub seed: u64,
    pub horizon: u64,
    pub burn_in: u64,
    pub mean_price: f64,
    /// Mean of per-step welfare_achieved / welfare_opt over steps with
    /// positive optimal welfare.
    pub mean_welfare_ratio: f64,
    pub mean_utilization: f64,
    pub mean_revenue: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium_price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium_se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityVerdict>,
}

/// A completed scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub trace: SimulationTrace,
    pub summary: ScenarioSummary,
}

/// Window length used by the stability classifier.
pub const STABILITY_WINDOW: usize = 1000;
/// Relative band width below which a window counts as converged, for
/// stochastic value distributions. Monte-Carlo jitter at a stable
/// equilibrium spans several percent of the mean over a 1000-step window,
/// so the threshold sits above that but below the deterministic
/// oscillation bands it must separate (2·α·δ ≈ 12.5% at the defaults).
pub const STOCHASTIC_DRIFT_TOL: f64 = 0.10;
/// Drift tolerance for deterministic-value scenarios, whose stable prices
/// settle to fixed points exactly.
pub const DETERMINISTIC_DRIFT_TOL: f64 = 1e-4;

/// The classifier tolerance appropriate for a value distribution.
pub fn default_drift_tol(dist: &ValueDistribution) -> f64 {
    if dist.is_deterministic() {
        DETERMINISTIC_DRIFT_TOL
    } else {
        STOCHASTIC_DRIFT_TOL
    }
}

/// Stability classification of a price trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum StabilityVerdict {
    Converged { q_star: f64, lo: f64, hi: f64 },
    Oscillating { lo: f64, hi: f64, ups: usize, downs: usize },
    NotConverged,
}

impl StabilityVerdict {
    pub fn is_converged(&self) -> bool {
        matches!(self, StabilityVerdict::Converged { .. })
    }

    pub fn is_oscillating(&self) -> bool {
        matches!(self, StabilityVerdict::Oscillating { .. })
    }
}

/// Classifies the final `window` prices: converged when the band is within
/// `drift_tol` of the window mean, oscillating when at least a quarter of
/// the steps flip direction inside a wider band, otherwise not converged.
pub fn classify_stability(
    prices: &[f64],
    window: usize,
    drift_tol: f64,
) -> Result<StabilityVerdict, ExperimentError> {
    if window == 0 || prices.len() < 2 * window {
        return Err(ExperimentError::TraceTooShort {
            len: prices.len(),
            need: 2 * window.max(1),
        });
    }
    let tail = &prices[prices.len() - window..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = tail.iter().sum::<f64>() / window as f64;
    if hi - lo <= drift_tol * mean {
        return Ok(StabilityVerdict::Converged { q_star: mean, lo, hi });
    }

    let deltas: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let mut alternations = 0usize;
    let mut prev_sign = 0i8;
    let mut ups = 0usize;
    let mut downs = 0usize;
    for d in &deltas {
        let sign = if *d > 0.0 {
            ups += 1;
            1
        } else if *d < 0.0 {
            downs += 1;
            -1
        } else {
            0
        };
        if sign != 0 {
            if prev_sign != 0 && sign != prev_sign {
                alternations += 1;
            }
            prev_sign = sign;
        }
    }
    if alternations >= window / 4 {
        Ok(StabilityVerdict::Oscillating { lo, hi, ups, downs })
    } else {
        Ok(StabilityVerdict::NotConverged)
    }
}

/// Post-burn-in mean price with a batch-means standard error (robust to the
/// autocorrelation of the price process).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquilibriumEstimate {
    pub q_hat: f64,
    pub std_error: f64,
    pub steps: usize,
}

pub fn detect_equilibrium_price(
    prices: &[f64],
    burn_in: usize,
) -> Result<EquilibriumEstimate, ExperimentError> {
    let post = prices.get(burn_in..).unwrap_or(&[]);
    if post.len() < 100 {
        return Err(ExperimentError::TraceTooShort { len: post.len(), need: 100 });
    }
    let mean = post.iter().sum::<f64>() / post.len() as f64;
    let batches = 20;
    let batch_len = post.len() / batches;
    let mut batch_means = Vec::with_capacity(batches);
    for b in 0..batches {
        let chunk = &post[b * batch_len..(b + 1) * batch_len];
        batch_means.push(chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    let bm = batch_means.iter().sum::<f64>() / batches as f64;
    let var = batch_means.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>()
        / (batches - 1) as f64;
    Ok(EquilibriumEstimate {
        q_hat: mean,
        std_error: (var / batches as f64).sqrt(),
        steps: post.len(),
    })
}

/// Monte-Carlo welfare at a fixed posted price versus the theoretical
/// equilibrium floor.
#[derive(Debug, Clone, Serialize)]
pub struct WelfareBoundReport {
    pub welfare_at_q: f64,
    pub welfare_se: f64,
    pub opt: f64,
    pub opt_se: f64,
    pub ratio: f64,
    /// The guaranteed floor: OPT/2 under the welfare rule, OPT·min{1,δ}/(2(1+δ))
    /// under the truncated and utilization rules.
    pub bound: f64,
    pub passes: bool,
}

/// Estimates expected welfare when selling at `q_hat` under the mechanism's
/// allocation rule, against the optimal welfare, and checks the equilibrium
/// floor: pass iff welfare >= bound - 3·SE.
pub fn welfare_bound_check(
    dist: &ValueDistribution,
    n: usize,
    params: &UpdateParams,
    q_hat: f64,
    mechanism: MechanismSpec,
    samples: usize,
    seed: u64,
) -> WelfareBoundReport {
    let m = params.m;
    let mut welfare_sum = 0.0;
    let mut welfare_sq = 0.0;
    let mut opt_sum = 0.0;
    let mut opt_sq = 0.0;
    let shard_size = 4096usize;
    let mut remaining = samples;
    let mut shard = 0u64;
    while remaining > 0 {
        let mut rng = rng::child_generator(seed, role::MC_SHARD, shard);
        shard += 1;
        for _ in 0..remaining.min(shard_size) {
            let values = sample_values_with(dist, n, &mut rng);
            let bids: Vec<Bid> = values
                .iter()
                .enumerate()
                .map(|(i, v)| Bid::truthful(i as u32 + 1, *v))
                .collect();
            let winners = match mechanism {
                MechanismSpec::Wdpp => allocate_mv(&bids, q_hat, m),
                _ => allocate_rm(&bids, q_hat, m, &mut rng),
            };
            let w: f64 = winners.iter().map(|b| b.value).sum();
            let o = optimal_welfare(&values, m);
            welfare_sum += w;
            welfare_sq += w * w;
            opt_sum += o;
            opt_sq += o * o;
        }
        remaining -= remaining.min(shard_size);
    }
    let nf = samples as f64;
    let welfare = welfare_sum / nf;
    let opt = opt_sum / nf;
    let welfare_se = ((welfare_sq / nf - welfare * welfare).max(0.0) / (nf - 1.0)).sqrt();
    let opt_se = ((opt_sq / nf - opt * opt).max(0.0) / (nf - 1.0)).sqrt();
    let bound_factor = match mechanism {
        MechanismSpec::Wdpp => 0.5,
        _ => params.delta.min(1.0) / (2.0 * (1.0 + params.delta)),
    };
    let bound = opt * bound_factor;
    WelfareBoundReport {
        welfare_at_q: welfare,
        welfare_se,
        opt,
        opt_se,
        ratio: welfare / opt,
        bound,
        passes: welfare >= bound - 3.0 * welfare_se.hypot(opt_se * bound_factor),
    }
}

/// Runs a scenario end to end: simulate, summarize, and (when an output
/// directory is known) write `<name>.trace.csv` and `<name>.summary.json`
/// atomically.
pub fn run_scenario(
    config: &ScenarioConfig,
    out_dir: Option<&Path>,
) -> Result<ScenarioRun, ExperimentError> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(ExperimentError::InvalidConfig(issues));
    }
    let trace = game::run_game(&config.game())?;
    let burn_in = config.burn_in() as usize;
    let post = &trace.records[burn_in.min(trace.len())..];
    let steps = post.len().max(1) as f64;
    let mean_price = post.iter().map(|r| r.q).sum::<f64>() / steps;
    let mean_utilization = post.iter().map(|r| r.utilization).sum::<f64>() / steps;
    let mean_revenue = post.iter().map(|r| r.revenue).sum::<f64>() / steps;
    let ratios: Vec<f64> = post
        .iter()
        .filter(|r| r.welfare_opt > 0.0)
        .map(|r| r.welfare_achieved / r.welfare_opt)
        .collect();
    let mean_welfare_ratio = if ratios.is_empty() {
        1.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };

    let prices = trace.prices();
    let equilibrium = detect_equilibrium_price(&prices, burn_in).ok();
    let window = STABILITY_WINDOW.min(prices.len() / 2);
    let stability = if window >= 10 {
        classify_stability(&prices, window, default_drift_tol(&config.values)).ok()
    } else {
        None
    };

    let summary = ScenarioSummary {
        name: config.name.clone(),
        seed: config.seed,
        horizon: config.horizon,
        burn_in: config.burn_in(),
        mean_price,
        mean_welfare_ratio,
        mean_utilization,
        mean_revenue,
        equilibrium_price: equilibrium.map(|e| e.q_hat),
        equilibrium_se: equilibrium.map(|e| e.std_error),
        stability,
    };

    let target = out_dir.map(Path::to_path_buf).or_else(|| config.out_dir.clone());
    if let Some(dir) = target {
        fs::create_dir_all(&dir).map_err(|source| ExperimentError::Io {
            context: "creating output directory",
            path: dir.clone(),
            source,
        })?;
        write_atomic(&dir.join(format!("{}.trace.csv", config.name)), trace.to_csv().as_bytes())?;
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_atomic(&dir.join(format!("{}.summary.json", config.name)), json.as_bytes())?;
    }

    Ok(ScenarioRun { trace, summary })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    let io_err = |context: &'static str, source| ExperimentError::Io {
        context,
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(&tmp).map_err(|e| io_err("creating temp file", e))?;
    f.write_all(bytes).map_err(|e| io_err("writing", e))?;
    f.sync_all().map_err(|e| io_err("syncing", e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err("renaming into place", e))
}

/// The built-in scenarios mirroring the experiment suite.
pub fn builtin_scenarios() -> Vec<ScenarioConfig> {
    let base = |name: &str, mechanism, demand, values| ScenarioConfig {
        name: name.to_string(),
        mechanism,
        demand,
        values,
        m: 100,
        miner: MinerStrategy::Honest,
        bidders: BidderStrategy::Truthful,
        alpha: 1.0 / 16.0,
        delta: 1.0,
        q0: 10.0,
        horizon: 10_000,
        burn_in: None,
        seed: 1,
        out_dir: None,
    };
    let uniform = ValueDistribution::Uniform { lo: 0.0, hi: 200.0 };
    let exponential = ValueDistribution::Exponential { mean: 100.0, cap: None };
    let pareto = ValueDistribution::pareto_median_100();
    let point_mass = ValueDistribution::PointMass { value: 100.0 };
    vec![
        base(
            "excess-uniform",
            MechanismSpec::Twdpp,
            DemandProfile::Constant { n: 200 },
            uniform.clone(),
        ),
        base(
            "excess-exponential",
            MechanismSpec::Twdpp,
            DemandProfile::Constant { n: 200 },
            exponential,
        ),
        base(
            "excess-pareto",
            MechanismSpec::Twdpp,
            DemandProfile::Constant { n: 200 },
            pareto.clone(),
        ),
        base(
            "under-demand",
            MechanismSpec::Twdpp,
            DemandProfile::Constant { n: 67 },
            pareto,
        ),
        base(
            "shock",
            MechanismSpec::Twdpp,
            DemandProfile::Step { breakpoints: vec![(1, 200), (3001, 600), (6501, 200)] },
            uniform,
        ),
        {
            let mut s = base(
                "pointmass-instability",
                MechanismSpec::Udpp,
                DemandProfile::Constant { n: 200 },
                point_mass.clone(),
            );
            s.horizon = 5000;
            s
        },
        {
            let mut s = base(
                "pointmass-undersupply",
                MechanismSpec::Udpp,
                DemandProfile::Constant { n: 67 },
                point_mass,
            );
            s.horizon = 5000;
            s
        },
    ]
}

/// Looks up a built-in scenario by name.
pub fn builtin_scenario(name: &str) -> Option<ScenarioConfig> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}
