//! Value distributions, demand profiles, and the demand/revenue curves that
//! drive every stability condition.
//!
//! The demand at price `q` over a value vector is `N(q) = Σ 1{vᵢ ≥ q}`; with
//! a supply of `m` slots the expected quantity sold is `D̄(q) = E[min(m,
//! N(q))]` and the expected revenue is `R(q) = q·D̄(q)`. Both curves are
//! estimated here by seeded Monte Carlo, and [`probe_curve`] reports the
//! finite-difference Lipschitz constant and midpoint-concavity violations
//! needed to pick a convergence parameter.

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, role};

/// Truncation cap used as the finite support bound of unbounded
/// distributions when none is configured. Sampling is never truncated; the
/// cap only bounds the fixed-point domain.
pub const DEFAULT_TRUNCATION_CAP: f64 = 1e6;

/// Invalid distribution or curve parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),
    #[error("price grid needs at least 3 strictly increasing points, got {0}")]
    GridTooSmall(usize),
}

/// A distribution over bidder values, in abstract currency units ≥ 0.
///
/// `Exponential` and `Pareto` have unbounded support; their
/// `support_upper_bound` is a configurable truncation cap (default
/// [`DEFAULT_TRUNCATION_CAP`]) used only where a finite bound is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ValueDistribution {
    /// Every bidder has exactly this value.
    PointMass { value: f64 },
    /// Uniform on `[lo, hi]` with `0 ≤ lo < hi`.
    Uniform { lo: f64, hi: f64 },
    /// Exponential with the given mean.
    Exponential {
        mean: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// Pareto with minimum `scale` and tail index `shape`.
    Pareto {
        shape: f64,
        scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// Uniform over an explicit list of values (kept sorted).
    Empirical { values: Vec<f64> },
}

impl ValueDistribution {
    /// Pareto parametrized so the median is exactly 100: shape 2, scale
    /// 100/√2. Used by the built-in scenarios.
    pub fn pareto_median_100() -> Self {
        ValueDistribution::Pareto {
            shape: 2.0,
            scale: 100.0 / std::f64::consts::SQRT_2,
            cap: None,
        }
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |msg: String| Err(ParamError::InvalidDistribution(msg));
        match self {
            ValueDistribution::PointMass { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return bad(format!("point mass value must be finite and >= 0, got {value}"));
                }
            }
            ValueDistribution::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || *lo < 0.0 || lo >= hi {
                    return bad(format!("uniform requires 0 <= lo < hi, got lo={lo}, hi={hi}"));
                }
            }
            ValueDistribution::Exponential { mean, cap } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    return bad(format!("exponential mean must be positive, got {mean}"));
                }
                if let Some(c) = cap {
                    if !c.is_finite() || *c <= 0.0 {
                        return bad(format!("truncation cap must be positive, got {c}"));
                    }
                }
            }
            ValueDistribution::Pareto { shape, scale, cap } => {
                if !shape.is_finite() || *shape <= 0.0 || !scale.is_finite() || *scale <= 0.0 {
                    return bad(format!(
                        "pareto requires positive shape and scale, got shape={shape}, scale={scale}"
                    ));
                }
                if let Some(c) = cap {
                    if !c.is_finite() || *c <= 0.0 {
                        return bad(format!("truncation cap must be positive, got {c}"));
                    }
                }
            }
            ValueDistribution::Empirical { values } => {
                if values.is_empty() {
                    return bad("empirical distribution needs at least one value".into());
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return bad("empirical values must be finite and >= 0".into());
                }
            }
        }
        Ok(())
    }

    /// A finite upper bound `ā` on the support: exact for point mass,
    /// uniform, and empirical; the truncation cap for exponential and
    /// Pareto.
    pub fn support_upper_bound(&self) -> f64 {
        match self {
            ValueDistribution::PointMass { value } => *value,
            ValueDistribution::Uniform { hi, .. } => *hi,
            ValueDistribution::Exponential { cap, .. } | ValueDistribution::Pareto { cap, .. } => {
                cap.unwrap_or(DEFAULT_TRUNCATION_CAP)
            }
            ValueDistribution::Empirical { values } => {
                values.iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    /// True when every draw is a single deterministic value.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, ValueDistribution::PointMass { .. })
    }

    /// `F(x) = Pr[v ≤ x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ValueDistribution::PointMass { value } => {
                if x >= *value {
                    1.0
                } else {
                    0.0
                }
            }
            ValueDistribution::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            ValueDistribution::Exponential { mean, .. } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x / mean).exp()
                }
            }
            ValueDistribution::Pareto { shape, scale, .. } => {
                if x < *scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(*shape)
                }
            }
            ValueDistribution::Empirical { values } => {
                let below = values.iter().filter(|v| **v <= x).count();
                below as f64 / values.len() as f64
            }
        }
    }

    fn sample_into<R: Rng>(&self, n: usize, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.reserve(n);
        match self {
            ValueDistribution::PointMass { value } => out.extend(std::iter::repeat_n(*value, n)),
            ValueDistribution::Uniform { lo, hi } => {
                let d = rand_distr::Uniform::new_inclusive(*lo, *hi).expect("validated");
                out.extend((0..n).map(|_| d.sample(rng)));
            }
            ValueDistribution::Exponential { mean, .. } => {
                let d = rand_distr::Exp::new(1.0 / mean).expect("validated");
                out.extend((0..n).map(|_| d.sample(rng)));
            }
            ValueDistribution::Pareto { shape, scale, .. } => {
                let d = rand_distr::Pareto::new(*scale, *shape).expect("validated");
                out.extend((0..n).map(|_| d.sample(rng)));
            }
            ValueDistribution::Empirical { values } => {
                out.extend((0..n).map(|_| values[rng.random_range(0..values.len())]));
            }
        }
    }
}

/// Bidder count per time step. Steps are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DemandProfile {
    Constant { n: usize },
    /// Piecewise-constant demand; each breakpoint `(t, n)` takes effect at
    /// step `t`. Breakpoints must start at t = 1 and strictly increase.
    Step { breakpoints: Vec<(u64, usize)> },
}

impl DemandProfile {
    pub fn validate(&self) -> Result<(), ParamError> {
        if let DemandProfile::Step { breakpoints } = self {
            if breakpoints.is_empty() || breakpoints[0].0 != 1 {
                return Err(ParamError::InvalidDistribution(
                    "step demand must begin with a breakpoint at t = 1".into(),
                ));
            }
            if breakpoints.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(ParamError::InvalidDistribution(
                    "step demand breakpoints must strictly increase in t".into(),
                ));
            }
        }
        Ok(())
    }

    /// Bidder count at step `t ≥ 1`.
    pub fn n_at(&self, t: u64) -> usize {
        match self {
            DemandProfile::Constant { n } => *n,
            DemandProfile::Step { breakpoints } => breakpoints
                .iter()
                .take_while(|(start, _)| *start <= t)
                .last()
                .map(|(_, n)| *n)
                .unwrap_or(0),
        }
    }
}

/// Draws `n` i.i.d. values. Bit-identical output for identical
/// `(dist, n, seed)`.
pub fn sample_values(
    dist: &ValueDistribution,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>, ParamError> {
    dist.validate()?;
    let mut rng = rng::generator(seed);
    let mut out = Vec::new();
    dist.sample_into(n, &mut rng, &mut out);
    Ok(out)
}

/// Draws `n` i.i.d. values from an already-validated distribution using the
/// caller's stream. The simulator derives one such stream per step.
pub fn sample_values_with<R: Rng>(dist: &ValueDistribution, n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    dist.sample_into(n, rng, &mut out);
    out
}

/// `N(q)`: the number of values at or above `q`.
pub fn demand_at_price(values: &[f64], q: f64) -> usize {
    values.iter().filter(|v| **v >= q).count()
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

const MC_SHARD_SIZE: usize = 4096;

/// Runs `samples` i.i.d. trials of `f` over fresh value draws and returns
/// mean and standard error. Work is split into fixed-size shards with
/// independently derived seeds, so the estimate does not depend on how
/// shards are scheduled.
pub(crate) fn monte_carlo<F>(
    dist: &ValueDistribution,
    n: usize,
    samples: usize,
    seed: u64,
    mut f: F,
) -> McEstimate
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(samples >= 1, "monte carlo needs at least one sample");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut values = Vec::with_capacity(n);
    let shards = samples.div_ceil(MC_SHARD_SIZE);
    let mut remaining = samples;
    for shard in 0..shards {
        let mut rng = rng::child_generator(seed, role::MC_SHARD, shard as u64);
        let in_shard = remaining.min(MC_SHARD_SIZE);
        remaining -= in_shard;
        for _ in 0..in_shard {
            dist.sample_into(n, &mut rng, &mut values);
            let x = f(&values);
            sum += x;
            sum_sq += x * x;
        }
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    let std_error = if samples > 1 {
        (var / (samples - 1) as f64).sqrt()
    } else {
        f64::INFINITY
    };
    McEstimate { value: mean, std_error, samples }
}

/// Estimates the limited-supply demand curve `D̄(q) = E[min(m, N(q))]`.
pub fn limited_demand_mc(
    dist: &ValueDistribution,
    n: usize,
    m: usize,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, ParamError> {
    dist.validate()?;
    assert!(m >= 1, "supply must be at least 1");
    Ok(monte_carlo(dist, n, samples, seed, |values| {
        demand_at_price(values, q).min(m) as f64
    }))
}

/// Estimates the revenue curve `R(q) = q·D̄(q)`.
pub fn revenue_curve_mc(
    dist: &ValueDistribution,
    n: usize,
    m: usize,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, ParamError> {
    let demand = limited_demand_mc(dist, n, m, q, samples, seed)?;
    Ok(McEstimate {
        value: q * demand.value,
        std_error: q.abs() * demand.std_error,
        samples: demand.samples,
    })
}

/// Diagnostics from probing a curve on a price grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveDiagnostics {
    /// Max finite-difference slope magnitude over adjacent grid pairs.
    pub l_hat: f64,
    /// Grid triples `(a, b, c)` with `b = (a+c)/2` whose midpoint value
    /// dips more than `tol` below the chord.
    pub concavity_violations: Vec<(f64, f64, f64)>,
}

/// Probes a curve oracle on a sorted grid, estimating its Lipschitz
/// constant and collecting midpoint-concavity violations beyond `tol`.
pub fn probe_curve<F>(curve: F, grid: &[f64], tol: f64) -> Result<CurveDiagnostics, ParamError>
where
    F: Fn(f64) -> f64,
{
    if grid.len() < 3 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ParamError::GridTooSmall(grid.len()));
    }
    let ys: Vec<f64> = grid.iter().map(|&q| curve(q)).collect();
    let l_hat = grid
        .windows(2)
        .zip(ys.windows(2))
        .map(|(qs, vs)| ((vs[1] - vs[0]) / (qs[1] - qs[0])).abs())
        .fold(0.0, f64::max);

    let mut violations = Vec::new();
    for i in 0..grid.len() {
        for k in (i + 2)..grid.len() {
            let mid = 0.5 * (grid[i] + grid[k]);
            // Midpoint must itself be a grid point (within fp slack).
            let j = match grid.binary_search_by(|probe| probe.total_cmp(&mid)) {
                Ok(j) => j,
                Err(j) => {
                    let close = |idx: usize| {
                        grid.get(idx)
                            .is_some_and(|g| (g - mid).abs() <= 1e-12 * mid.abs().max(1.0))
                    };
                    if close(j) {
                        j
                    } else if j > 0 && close(j - 1) {
                        j - 1
                    } else {
                        continue;
                    }
                }
            };
            if ys[j] < 0.5 * (ys[i] + ys[k]) - tol {
                violations.push((grid[i], grid[j], grid[k]));
            }
        }
    }
    Ok(CurveDiagnostics { l_hat, concavity_violations: violations })
}

/// Sum of the `min(m, n)` largest values: the welfare of selling every slot
/// to the highest bidders.
pub fn optimal_welfare(values: &[f64], m: usize) -> f64 {
    assert!(m >= 1, "supply must be at least 1");
    if values.len() <= m {
        return values.iter().sum();
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted[..m].iter().sum()
}
