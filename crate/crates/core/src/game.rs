//! The decentralized multi-round auction game, with strategy models and
//! brute-force deviation oracles for incentive checking.
//!
//! Each step: bidders arrive and bid, one miner becomes active, the miner
//! announces a block, and the pricing mechanism settles payments from the
//! announced block alone (it never sees undisclosed bids). Miner identity is
//! irrelevant under myopia, so a single representative active miner is
//! simulated per step.
//!
//! The oracles answer the two incentive questions exhaustively on small
//! instances:
//!
//! * [`miner_best_deviation`] enumerates every block the active miner could
//!   announce, including blocks with fake bids, and compares the best
//!   one-step revenue against honest play.
//! * [`bidder_best_response`] sweeps a bid grid for one bidder, holding the
//!   others fixed, using exact expectations for randomized mechanisms.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    self, AllocRule, Eip1559Bid, PriceState, UpdateParams, UpdateRuleKind,
};
use crate::experiments::{SimulationTrace, TraceRecord};
use crate::market::{
    allocate_mv, eligible, intended_block, settle_block, Allocation, Bid, StaticMechanismKind,
};
use crate::rng::{self, role};
use crate::values::{optimal_welfare, sample_values_with, DemandProfile, ValueDistribution};

/// Cap on enumerated candidate blocks in one deviation search.
pub const MAX_SEARCH_BLOCKS: u64 = 5_000_000;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid game config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("deviation search space too large: {candidates} candidate blocks exceed the cap of {limit}")]
    SearchSpaceExceeded { candidates: u64, limit: u64 },
}

/// What the active miner does with the intended allocation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinerStrategy {
    /// Implement the intended allocation rule.
    #[default]
    Honest,
    /// Exhaustively search one-step deviations, including fake bids.
    /// Requires small arrival sets.
    RevenueMaximizing,
    /// Apply the maximum-value rule where random-maximal was intended.
    MvOverride,
}

/// How bidders map values to bids.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidderStrategy {
    /// b = v.
    #[default]
    Truthful,
    /// b = factor * v with factor in (0, 1].
    Shade { factor: f64 },
    /// b = a large constant, regardless of value.
    Overbid { bid: f64 },
    /// Placeholder used only by the best-response oracle; rejected by the
    /// simulator.
    GridBestResponse,
}

impl BidderStrategy {
    fn bid_for(&self, value: f64) -> f64 {
        match self {
            BidderStrategy::Truthful => value,
            BidderStrategy::Shade { factor } => factor * value,
            BidderStrategy::Overbid { bid } => *bid,
            BidderStrategy::GridBestResponse => {
                unreachable!("GridBestResponse is rejected at config validation")
            }
        }
    }
}

/// A mechanism as named on the command line and in scenario configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MechanismSpec {
    /// Dynamic: maximum-value allocation + welfare update.
    Wdpp,
    /// Dynamic: random-maximal allocation + utilization update.
    Udpp,
    /// Dynamic: random-maximal allocation + truncated welfare update.
    Twdpp,
    /// Dynamic: tip/cap bids, burned posted part, utilization update.
    Eip1559,
    FirstPrice,
    SecondPrice,
    PostedMv { q: f64 },
    PostedRm { q: f64 },
    Monopolistic,
    Rsop,
    GspMod,
}

impl MechanismSpec {
    pub fn is_dynamic(&self) -> bool {
        matches!(
            self,
            MechanismSpec::Wdpp | MechanismSpec::Udpp | MechanismSpec::Twdpp | MechanismSpec::Eip1559
        )
    }

    /// Allocation and update rule of the posted-price dynamics, if any.
    pub fn dpp_rules(&self) -> Option<(AllocRule, UpdateRuleKind)> {
        match self {
            MechanismSpec::Wdpp => Some((AllocRule::MaxValue, UpdateRuleKind::Welfare)),
            MechanismSpec::Udpp => Some((AllocRule::RandomMaximal, UpdateRuleKind::Utilization)),
            MechanismSpec::Twdpp => {
                Some((AllocRule::RandomMaximal, UpdateRuleKind::TruncatedWelfare))
            }
            _ => None,
        }
    }

    pub fn static_kind(&self) -> Option<StaticMechanismKind> {
        match self {
            MechanismSpec::FirstPrice => Some(StaticMechanismKind::FirstPrice),
            MechanismSpec::SecondPrice => Some(StaticMechanismKind::SecondPrice),
            MechanismSpec::PostedMv { q } => Some(StaticMechanismKind::PostedPriceMv { q: *q }),
            MechanismSpec::PostedRm { q } => Some(StaticMechanismKind::PostedPriceRm { q: *q }),
            MechanismSpec::Monopolistic => Some(StaticMechanismKind::Monopolistic),
            MechanismSpec::Rsop => Some(StaticMechanismKind::Rsop),
            MechanismSpec::GspMod => Some(StaticMechanismKind::ModifiedGsp),
            _ => None,
        }
    }
}

/// Full configuration of one game run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub mechanism: MechanismSpec,
    pub m: usize,
    pub demand: DemandProfile,
    pub values: ValueDistribution,
    pub miner: MinerStrategy,
    pub bidders: BidderStrategy,
    pub horizon: u64,
    pub alpha: f64,
    pub delta: f64,
    pub q0: f64,
    pub seed: u64,
}

impl GameConfig {
    /// Collects every violated constraint (empty means valid).
    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            issues.push(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            issues.push(format!("delta must be positive, got {}", self.delta));
        }
        if self.m < 1 {
            issues.push("m must be at least 1".into());
        }
        if self.horizon < 1 {
            issues.push("horizon must be at least 1".into());
        }
        if !(self.q0 > 0.0 && self.q0.is_finite()) {
            issues.push(format!("q0 must be positive, got {}", self.q0));
        }
        if let Err(e) = self.values.validate() {
            issues.push(e.to_string());
        }
        if let Err(e) = self.demand.validate() {
            issues.push(e.to_string());
        }
        if let BidderStrategy::Shade { factor } = self.bidders {
            if !(factor > 0.0 && factor <= 1.0) {
                issues.push(format!("shade factor must lie in (0,1], got {factor}"));
            }
        }
        if self.bidders == BidderStrategy::GridBestResponse {
            issues.push("grid-best-response is an oracle-only bidder strategy".into());
        }
        if let Some(q) = self.mechanism.static_kind().and_then(|k| k.posted_price()) {
            if !(q >= 0.0 && q.is_finite()) {
                issues.push(format!("posted price must be >= 0, got {q}"));
            }
        }
        issues
    }
}

/// Runs the multi-round game. Deterministic given the config (one child
/// stream per step for bidder values and one for miner randomness).
pub fn run_game(config: &GameConfig) -> Result<SimulationTrace, GameError> {
    let issues = config.validate();
    if !issues.is_empty() {
        return Err(GameError::InvalidConfig(issues));
    }
    let params = UpdateParams::new(config.alpha, config.delta, config.m);
    let mut records = Vec::with_capacity(config.horizon as usize);
    let mut price = config.mechanism.is_dynamic().then(|| PriceState::new(config.q0));

    for t in 1..=config.horizon {
        let n_t = config.demand.n_at(t);
        let mut values_rng = rng::child_generator(config.seed, role::VALUES, t);
        let mut miner_rng = rng::child_generator(config.seed, role::MINER, t);
        let values = sample_values_with(&config.values, n_t, &mut values_rng);

        let (posted_q, alloc, revenue) = match config.mechanism {
            MechanismSpec::Eip1559 => {
                let arrivals: Vec<Eip1559Bid> = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        // The restricted strategy bids a zero tip and caps
                        // total spend at the (strategy-mapped) value.
                        let mut tx = Eip1559Bid::restricted(i as u32 + 1, *v);
                        tx.cap = config.bidders.bid_for(*v);
                        tx
                    })
                    .collect();
                let state = price.expect("eip1559 is dynamic");
                let q = state.price();
                let (alloc, next, income) =
                    dynamics::step_eip1559(state, &arrivals, &params, &mut miner_rng);
                price = Some(next);
                (q, alloc, income)
            }
            _ => {
                let arrivals: Vec<Bid> = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| Bid::real(i as u32 + 1, *v, config.bidders.bid_for(*v)))
                    .collect();
                if let Some((intended_alloc, rule)) = config.mechanism.dpp_rules() {
                    let state = price.expect("dpp is dynamic");
                    let q = state.price();
                    let (alloc, next) = match config.miner {
                        MinerStrategy::Honest => dynamics::step_dpp(
                            state, &arrivals, intended_alloc, rule, &params, &mut miner_rng,
                        ),
                        MinerStrategy::MvOverride => dynamics::step_dpp(
                            state, &arrivals, AllocRule::MaxValue, rule, &params, &mut miner_rng,
                        ),
                        MinerStrategy::RevenueMaximizing => {
                            // One-step revenue search; for posted prices any
                            // maximal allocation ties, but fakes are explored.
                            let kind = StaticMechanismKind::PostedPriceRm { q };
                            let grid = default_fake_grid(&arrivals);
                            let dev = miner_best_deviation(kind, &arrivals, config.m, &grid)?;
                            dynamics::step_with_block(state, dev.best_block, rule, &params)
                        }
                    };
                    price = Some(next);
                    let revenue = alloc.miner_utility();
                    (q, alloc, revenue)
                } else {
                    let kind = config.mechanism.static_kind().expect("static mechanism");
                    let block = match config.miner {
                        MinerStrategy::Honest => intended_block(kind, &arrivals, config.m, &mut miner_rng),
                        MinerStrategy::MvOverride => match kind {
                            StaticMechanismKind::PostedPriceRm { q } => {
                                allocate_mv(&arrivals, q, config.m)
                            }
                            _ => intended_block(kind, &arrivals, config.m, &mut miner_rng),
                        },
                        MinerStrategy::RevenueMaximizing => {
                            let grid = default_fake_grid(&arrivals);
                            miner_best_deviation(kind, &arrivals, config.m, &grid)?.best_block
                        }
                    };
                    let alloc = settle_block(kind, t, &block, config.m, &mut miner_rng);
                    let q = kind.posted_price().unwrap_or(0.0);
                    let revenue = alloc.miner_utility();
                    (q, alloc, revenue)
                }
            }
        };

        records.push(TraceRecord {
            t,
            n: n_t,
            q: posted_q,
            sold: alloc.sold(),
            welfare_achieved: alloc.welfare(),
            welfare_opt: optimal_welfare(&values, config.m),
            revenue,
            utilization: alloc.sold() as f64 / config.m as f64,
        });
    }
    Ok(SimulationTrace { records })
}

/// The default fake-bid grid: the real bids, midpoints of consecutive
/// distinct bids, and zero. Realizes the known deviations (a fake at the
/// m-th highest bid) without continuous search.
pub fn default_fake_grid(arrivals: &[Bid]) -> Vec<f64> {
    let mut points: Vec<f64> = arrivals.iter().map(|b| b.bid).collect();
    points.push(0.0);
    points.sort_unstable_by(f64::total_cmp);
    points.dedup();
    let mids: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    points.extend(mids);
    points.sort_unstable_by(f64::total_cmp);
    points.dedup();
    points
}

/// Outcome of a one-step miner deviation search.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub honest_utility: f64,
    pub best_utility: f64,
    /// A block achieving `best_utility`; fake bids are flagged.
    pub best_block: Vec<Bid>,
}

fn expected_block_revenue<R: Rng>(
    kind: StaticMechanismKind,
    block: &[Bid],
    m: usize,
    rng: &mut R,
) -> f64 {
    match kind {
        StaticMechanismKind::Rsop => rsop_expected(block, |alloc| alloc.miner_utility()),
        _ => settle_block(kind, 0, block, m, rng).miner_utility(),
    }
}

/// Exact expectation over RSOP's 2^n equally likely partitions.
fn rsop_expected<F: Fn(&Allocation) -> f64>(block: &[Bid], f: F) -> f64 {
    let n = block.len();
    assert!(n <= 20, "rsop expectation enumerates 2^n partitions");
    let total = 1u64 << n;
    let mut acc = 0.0;
    for mask in 0..total {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, bid) in block.iter().enumerate() {
            if mask >> i & 1 == 1 {
                a.push(*bid);
            } else {
                b.push(*bid);
            }
        }
        let alloc = crate::market::settle_rsop_split(0, &a, &b);
        acc += f(&alloc);
    }
    acc / total as f64
}

/// Exhaustive one-step deviation search for the active miner: every block
/// `B ⊆ M ∪ F` with at most `m` fake bids drawn (with repetition) from
/// `fake_bid_grid`, against the honest implementation of the intended rule.
/// Myopic: one-step utility only.
pub fn miner_best_deviation(
    kind: StaticMechanismKind,
    arrivals: &[Bid],
    m: usize,
    fake_bid_grid: &[f64],
) -> Result<DeviationReport, GameError> {
    let n = arrivals.len();
    if n > 12 {
        return Err(GameError::SearchSpaceExceeded {
            candidates: 1u64 << n.min(63),
            limit: 1 << 12,
        });
    }
    let capacity = kind.block_capacity(m).unwrap_or(n + m);
    let max_fakes = m.min(capacity);

    // Count candidates before enumerating; RSOP settlement costs 2^|B| per
    // block, which the count weighs in.
    let mut candidates: u64 = 0;
    let subset_count = 1u64 << n.min(63);
    for mask in 0..subset_count {
        let r = mask.count_ones() as usize;
        if r > capacity {
            continue;
        }
        for f in 0..=max_fakes.min(capacity - r) {
            let combos = multiset_count(fake_bid_grid.len(), f);
            let cost = if kind == StaticMechanismKind::Rsop {
                combos.saturating_mul(1 << (r + f).min(62))
            } else {
                combos
            };
            candidates = candidates.saturating_add(cost);
            if candidates > MAX_SEARCH_BLOCKS {
                return Err(GameError::SearchSpaceExceeded {
                    candidates,
                    limit: MAX_SEARCH_BLOCKS,
                });
            }
        }
    }

    let mut scratch_rng = rng::generator(0);
    let honest_utility = honest_miner_utility(kind, arrivals, m);

    let next_fake_id = arrivals.iter().map(|b| b.bidder_id.0).max().unwrap_or(0) + 1;
    let mut best_utility = f64::NEG_INFINITY;
    let mut best_block = Vec::new();
    let mut block = Vec::with_capacity(capacity);
    let mut fake_stack: Vec<usize> = Vec::with_capacity(max_fakes);

    for mask in 0..subset_count {
        let r = mask.count_ones() as usize;
        if r > capacity {
            continue;
        }
        block.clear();
        for (i, bid) in arrivals.iter().enumerate() {
            if mask >> i & 1 == 1 {
                block.push(*bid);
            }
        }
        let fake_budget = max_fakes.min(capacity - r);
        // Depth-first over fake multisets (combinations with repetition).
        fake_stack.clear();
        loop {
            let with_fakes: Vec<Bid> = block
                .iter()
                .copied()
                .chain(fake_stack.iter().enumerate().map(|(j, &gi)| {
                    Bid::fake(next_fake_id + j as u32, fake_bid_grid[gi])
                }))
                .collect();
            let revenue = expected_block_revenue(kind, &with_fakes, m, &mut scratch_rng);
            if revenue > best_utility {
                best_utility = revenue;
                best_block = with_fakes;
            }
            // Advance the multiset odometer.
            if fake_stack.len() < fake_budget && !fake_bid_grid.is_empty() {
                let start = fake_stack.last().copied().unwrap_or(0);
                fake_stack.push(start);
            } else {
                loop {
                    match fake_stack.pop() {
                        None => break,
                        Some(top) if top + 1 < fake_bid_grid.len() => {
                            fake_stack.push(top + 1);
                            break;
                        }
                        Some(_) => continue,
                    }
                }
                if fake_stack.is_empty() {
                    break;
                }
            }
        }
    }

    Ok(DeviationReport { honest_utility, best_utility, best_block })
}

fn multiset_count(grid: usize, k: usize) -> u64 {
    // C(grid + k - 1, k)
    if k == 0 {
        return 1;
    }
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc.saturating_mul((grid + i) as u64) / (i as u64 + 1);
    }
    acc
}

/// Expected miner revenue from implementing the intended allocation rule.
fn honest_miner_utility(kind: StaticMechanismKind, arrivals: &[Bid], m: usize) -> f64 {
    match kind {
        // Any maximal allocation of the eligible set yields the same
        // revenue, so the RM draw integrates out.
        StaticMechanismKind::PostedPriceRm { q } => {
            q * eligible(arrivals, q).len().min(m) as f64
        }
        StaticMechanismKind::Rsop => rsop_expected(arrivals, |a| a.miner_utility()),
        _ => {
            let mut rng = rng::generator(0);
            let block = intended_block(kind, arrivals, m, &mut rng);
            settle_block(kind, 0, &block, m, &mut rng).miner_utility()
        }
    }
}

/// Result of a grid best-response sweep for one bidder.
#[derive(Debug, Clone, Serialize)]
pub struct BestResponse {
    /// All grid bids achieving the maximum (within 1e-9).
    pub best_bids: Vec<f64>,
    pub best_utility: f64,
    pub truthful_utility: f64,
}

/// Exact expected utility of the focal bidder when the intended mechanism
/// runs on `all_bids`. Randomized mechanisms are evaluated in expectation,
/// not by sampling.
fn expected_bidder_utility(
    kind: StaticMechanismKind,
    all_bids: &[Bid],
    focal: &Bid,
    m: usize,
) -> f64 {
    match kind {
        StaticMechanismKind::PostedPriceRm { q } => {
            if focal.bid < q {
                return 0.0;
            }
            let n_eligible = eligible(all_bids, q).len();
            let p_win = (m as f64 / n_eligible as f64).min(1.0);
            p_win * (focal.value - q)
        }
        StaticMechanismKind::Rsop => rsop_expected(all_bids, |alloc| alloc.bidder_utility(focal)),
        _ => {
            let mut rng = rng::generator(0);
            let block = intended_block(kind, all_bids, m, &mut rng);
            settle_block(kind, 0, &block, m, &mut rng).bidder_utility(focal)
        }
    }
}

/// Sweeps `bid_grid` for the bidder with private value `focal_value`,
/// holding `others` fixed, and reports the argmax set alongside the
/// truthful payoff.
///
/// # Panics
/// If the grid does not contain the truthful bid (contract violation).
pub fn bidder_best_response(
    kind: StaticMechanismKind,
    others: &[Bid],
    focal_id: u32,
    focal_value: f64,
    bid_grid: &[f64],
    m: usize,
) -> BestResponse {
    assert!(
        bid_grid.contains(&focal_value),
        "bid grid must contain the truthful bid {focal_value}"
    );
    let mut best_utility = f64::NEG_INFINITY;
    let mut best_bids = Vec::new();
    let mut truthful_utility = 0.0;
    for &bid in bid_grid {
        let focal = Bid::real(focal_id, focal_value, bid);
        let mut all: Vec<Bid> = others.to_vec();
        all.push(focal);
        let u = expected_bidder_utility(kind, &all, &focal, m);
        if bid == focal_value {
            truthful_utility = u;
        }
        if u > best_utility + 1e-9 {
            best_utility = u;
            best_bids = vec![bid];
        } else if (u - best_utility).abs() <= 1e-9 {
            best_bids.push(bid);
        }
    }
    BestResponse { best_bids, best_utility, truthful_utility }
}

/// Family of random small instances for the incentive oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFamily {
    pub dist: ValueDistribution,
    pub n_range: (usize, usize),
    pub m_range: (usize, usize),
    /// For posted-price mechanisms, the posted price is redrawn uniformly
    /// from this range per instance.
    pub posted_price_range: Option<(f64, f64)>,
}

impl InstanceFamily {
    /// The default oracle family: up to 8 bidders, up to 3 slots, posted
    /// prices low enough that excess demand is common.
    pub fn small(dist: ValueDistribution) -> Self {
        let a_bar = dist.support_upper_bound();
        InstanceFamily {
            dist,
            n_range: (2, 8),
            m_range: (1, 3),
            posted_price_range: Some((0.0, 0.7 * a_bar)),
        }
    }
}

/// One incentive-compatibility counterexample: an instance where some
/// bidder strictly gains by deviating from truthful bidding.
#[derive(Debug, Clone, Serialize)]
pub struct IcCounterexample {
    pub mechanism: StaticMechanismKind,
    pub values: Vec<f64>,
    pub m: usize,
    pub bidder_id: u32,
    pub best_bid: f64,
    pub best_utility: f64,
    pub truthful_utility: f64,
}

/// One miner-DSIC counterexample: an instance where some announced block
/// beats honest play.
#[derive(Debug, Clone, Serialize)]
pub struct DsicCounterexample {
    pub mechanism: StaticMechanismKind,
    pub bids: Vec<Bid>,
    pub m: usize,
    pub best_block: Vec<Bid>,
    pub best_utility: f64,
    pub honest_utility: f64,
}

/// Joint report of the two oracles over random instances.
#[derive(Debug, Clone, Serialize)]
pub struct IcDsicReport {
    pub trials: usize,
    pub ic_holds: bool,
    pub dsic_holds: bool,
    pub ic_counterexample: Option<IcCounterexample>,
    pub dsic_counterexample: Option<DsicCounterexample>,
}

/// Runs both oracles over `trials` random instances from the family. IC
/// fails iff some bidder's truthful utility trails the grid optimum by more
/// than 1e-9; DSIC fails iff some block beats honest play by more than
/// 1e-9.
pub fn check_ic_dsic(
    kind: StaticMechanismKind,
    family: &InstanceFamily,
    trials: usize,
    seed: u64,
) -> Result<IcDsicReport, GameError> {
    let mut ic_counterexample = None;
    let mut dsic_counterexample = None;

    for trial in 0..trials {
        let mut trial_rng = rng::child_generator(seed, role::TRIAL, trial as u64);
        let n = trial_rng.random_range(family.n_range.0..=family.n_range.1);
        let m = trial_rng.random_range(family.m_range.0..=family.m_range.1);
        let kind_inst = match (kind, family.posted_price_range) {
            (StaticMechanismKind::PostedPriceMv { .. }, Some((lo, hi))) => {
                StaticMechanismKind::PostedPriceMv { q: trial_rng.random_range(lo..hi) }
            }
            (StaticMechanismKind::PostedPriceRm { .. }, Some((lo, hi))) => {
                StaticMechanismKind::PostedPriceRm { q: trial_rng.random_range(lo..hi) }
            }
            _ => kind,
        };
        let values = sample_values_with(&family.dist, n, &mut trial_rng);
        let bids: Vec<Bid> = values
            .iter()
            .enumerate()
            .map(|(i, v)| Bid::truthful(i as u32 + 1, *v))
            .collect();

        if dsic_counterexample.is_none() {
            let grid = default_fake_grid(&bids);
            let dev = miner_best_deviation(kind_inst, &bids, m, &grid)?;
            if dev.best_utility > dev.honest_utility + 1e-9 {
                dsic_counterexample = Some(DsicCounterexample {
                    mechanism: kind_inst,
                    bids: bids.clone(),
                    m,
                    best_block: dev.best_block,
                    best_utility: dev.best_utility,
                    honest_utility: dev.honest_utility,
                });
            }
        }

        if ic_counterexample.is_none() {
            for focal in &bids {
                let others: Vec<Bid> =
                    bids.iter().filter(|b| b.bidder_id != focal.bidder_id).copied().collect();
                let grid = response_grid(kind_inst, &others, focal.value, &family.dist);
                let br = bidder_best_response(
                    kind_inst,
                    &others,
                    focal.bidder_id.0,
                    focal.value,
                    &grid,
                    m,
                );
                if br.best_utility > br.truthful_utility + 1e-9 {
                    ic_counterexample = Some(IcCounterexample {
                        mechanism: kind_inst,
                        values: values.clone(),
                        m,
                        bidder_id: focal.bidder_id.0,
                        best_bid: br.best_bids[0],
                        best_utility: br.best_utility,
                        truthful_utility: br.truthful_utility,
                    });
                    break;
                }
            }
        }
    }

    Ok(IcDsicReport {
        trials,
        ic_holds: ic_counterexample.is_none(),
        dsic_holds: dsic_counterexample.is_none(),
        ic_counterexample,
        dsic_counterexample,
    })
}

/// Candidate bids for a best-response sweep: zero, the others' bids and
/// their midpoints, the truthful bid, the posted price if any, and a large
/// overbid standing in for an unbounded bid.
fn response_grid(
    kind: StaticMechanismKind,
    others: &[Bid],
    focal_value: f64,
    dist: &ValueDistribution,
) -> Vec<f64> {
    let mut grid: Vec<f64> = others.iter().map(|b| b.bid).collect();
    grid.push(0.0);
    grid.push(focal_value);
    if let Some(q) = kind.posted_price() {
        grid.push(q);
    }
    grid.push(10.0 * dist.support_upper_bound().max(focal_value).max(1.0));
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    let mids: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    grid.extend(mids);
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    grid
}
