//! Dynamic posted-price mechanisms: price-update rules, the per-step
//! transition, the EIP-1559 variant, and Monte-Carlo estimation of the
//! expected-update kernels.
//!
//! An update rule is a pure map `(q, B) -> q'` from the current posted price
//! and the winner set to the next price:
//!
//! * welfare-based: `q' = α·(1/m)·Σ b_i + (1-α)·q`
//! * utilization-based: `q' = α·(|B|/m)·(1+δ)·q + (1-α)·q`
//! * truncated welfare-based: bids are capped at `(1+δ)q`, and a full block
//!   forces the utilization update `q' = q·(1+αδ)`
//!
//! The named mechanisms pair an allocation rule with an update rule: WDPP =
//! MV + welfare, UDPP = RM + utilization, TWDPP = RM + truncated welfare.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::market::{allocate_mv, allocate_rm, Allocation, Bid, BidderId};
use crate::values::{McEstimate, ParamError, ValueDistribution};

/// Update-rule parameters: convergence rate `alpha`, truncation/increase
/// parameter `delta`, supply `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateParams {
    pub alpha: f64,
    pub delta: f64,
    pub m: usize,
}

impl UpdateParams {
    /// # Panics
    /// If `alpha` is outside `(0, 1)`, `delta <= 0`, or `m == 0`.
    pub fn new(alpha: f64, delta: f64, m: usize) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1), got {alpha}");
        assert!(delta > 0.0 && delta.is_finite(), "delta must be positive, got {delta}");
        assert!(m >= 1, "supply must be at least 1");
        UpdateParams { alpha, delta, m }
    }
}

/// A posted price and its step index. Prices stay strictly positive: every
/// rule maps `q > 0` to `q' > 0`, and the theory iterates from a positive
/// starting price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceState {
    q: f64,
    t: u64,
}

impl PriceState {
    /// # Panics
    /// If `q0 <= 0` or is not finite.
    pub fn new(q0: f64) -> Self {
        assert!(q0 > 0.0 && q0.is_finite(), "initial price must be positive, got {q0}");
        PriceState { q: q0, t: 0 }
    }

    pub fn price(&self) -> f64 {
        self.q
    }

    pub fn step(&self) -> u64 {
        self.t
    }

    fn advance(&self, q_next: f64) -> Self {
        debug_assert!(q_next > 0.0);
        PriceState { q: q_next, t: self.t + 1 }
    }
}

/// Which update rule a dynamic mechanism uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRuleKind {
    Welfare,
    Utilization,
    TruncatedWelfare,
}

/// Which allocation rule the miner is instructed to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocRule {
    MaxValue,
    RandomMaximal,
}

/// Welfare-based update: the average winning bid per slot pulls the price.
pub fn update_welfare(q: f64, winners: &[Bid], params: &UpdateParams) -> f64 {
    let bid_sum: f64 = winners.iter().map(|b| b.bid).sum();
    params.alpha * bid_sum / params.m as f64 + (1.0 - params.alpha) * q
}

/// Utilization-based update: a full block scales the price by `1 + αδ`, an
/// empty one by `1 - α`.
pub fn update_utilization(q: f64, winners: &[Bid], params: &UpdateParams) -> f64 {
    let utilization = winners.len() as f64 / params.m as f64;
    q * (params.alpha * utilization * (1.0 + params.delta) + (1.0 - params.alpha))
}

/// Truncated welfare-based update: below capacity, bids count only up to
/// `(1+δ)q`; at capacity the price update ignores bid values entirely.
///
/// # Panics
/// If `|winners| > m` (contract violation).
pub fn update_truncated_welfare(q: f64, winners: &[Bid], params: &UpdateParams) -> f64 {
    assert!(winners.len() <= params.m, "winner set exceeds supply");
    if winners.len() == params.m {
        return q * (1.0 + params.alpha * params.delta);
    }
    let cap = (1.0 + params.delta) * q;
    let truncated_sum: f64 = winners.iter().map(|b| b.bid.min(cap)).sum();
    params.alpha * truncated_sum / params.m as f64 + (1.0 - params.alpha) * q
}

/// Applies the named rule.
pub fn apply_rule(rule: UpdateRuleKind, q: f64, winners: &[Bid], params: &UpdateParams) -> f64 {
    match rule {
        UpdateRuleKind::Welfare => update_welfare(q, winners, params),
        UpdateRuleKind::Utilization => update_utilization(q, winners, params),
        UpdateRuleKind::TruncatedWelfare => update_truncated_welfare(q, winners, params),
    }
}

/// One step of a dynamic posted-price mechanism: allocate at the posted
/// price, charge every winner that price, then update the price from the
/// winner set alone.
pub fn step_dpp<R: Rng>(
    state: PriceState,
    arrivals: &[Bid],
    alloc: AllocRule,
    rule: UpdateRuleKind,
    params: &UpdateParams,
    rng: &mut R,
) -> (Allocation, PriceState) {
    let q = state.price();
    let winners = match alloc {
        AllocRule::MaxValue => allocate_mv(arrivals, q, params.m),
        AllocRule::RandomMaximal => allocate_rm(arrivals, q, params.m, rng),
    };
    step_with_block(state, winners, rule, params)
}

/// One dynamic step for an already-chosen block (the deviating-miner path):
/// every block member pays the posted price and the rule reads the block
/// alone.
pub fn step_with_block(
    state: PriceState,
    winners: Vec<Bid>,
    rule: UpdateRuleKind,
    params: &UpdateParams,
) -> (Allocation, PriceState) {
    let q = state.price();
    let q_next = apply_rule(rule, q, &winners, params);
    let alloc = Allocation::at_uniform_price(state.step() + 1, winners, q);
    (alloc, state.advance(q_next))
}

/// An EIP-1559 submission: a tip `b` for the miner and a cap `c` on total
/// spend. A transaction is includable at posted price `q` iff `b + q <= c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eip1559Bid {
    pub bidder_id: BidderId,
    pub value: f64,
    pub tip: f64,
    pub cap: f64,
    pub is_fake: bool,
}

impl Eip1559Bid {
    /// The restricted strategy under a pure posted-price regime: zero tip,
    /// cap equal to the private value.
    pub fn restricted(id: u32, value: f64) -> Self {
        Eip1559Bid { bidder_id: BidderId(id), value, tip: 0.0, cap: value, is_fake: false }
    }
}

/// One EIP-1559 step: the top-`m` includable tips win, each winner pays
/// `tip + q` (the posted part is burned, the miner keeps the tip), and the
/// price follows the utilization rule.
///
/// Returns the allocation, the next price state, and the miner's income. A
/// fake winner costs the miner the burned `q`.
pub fn step_eip1559<R: Rng>(
    state: PriceState,
    arrivals: &[Eip1559Bid],
    params: &UpdateParams,
    _rng: &mut R,
) -> (Allocation, PriceState, f64) {
    let q = state.price();
    let mut includable: Vec<&Eip1559Bid> =
        arrivals.iter().filter(|b| b.tip >= 0.0 && b.tip + q <= b.cap).collect();
    includable.sort_unstable_by(|a, b| {
        b.tip.total_cmp(&a.tip).then(a.bidder_id.cmp(&b.bidder_id))
    });
    includable.truncate(params.m);

    let mut winners = Vec::with_capacity(includable.len());
    let mut payments = std::collections::BTreeMap::new();
    let mut miner_income = 0.0;
    for tx in &includable {
        // Recorded with bid = cap: the disclosed willingness to pay, which
        // bounds the payment tip + q.
        winners.push(Bid {
            bidder_id: tx.bidder_id,
            value: tx.value,
            bid: tx.cap,
            is_fake: tx.is_fake,
        });
        payments.insert(tx.bidder_id, tx.tip + q);
        miner_income += if tx.is_fake { -q } else { tx.tip };
    }
    let q_next = update_utilization(q, &winners, params);
    let alloc = Allocation::new(state.step() + 1, winners, payments);
    (alloc, state.advance(q_next), miner_income)
}

/// Monte-Carlo estimate of the TWDPP kernel
/// `K(q) = E[(1/m)·Σ min{v_i, (1+δ)q}·x_i(q)·1{N(q) < m} + (1+δ)q·1{N(q) >= m}]`.
///
/// The RM draw integrates out exactly: below capacity every eligible bidder
/// is allocated, and at capacity the term does not depend on who wins.
pub fn kernel_ttw_mc(
    dist: &ValueDistribution,
    n: usize,
    params: &UpdateParams,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, ParamError> {
    dist.validate()?;
    assert!(q > 0.0, "kernel is defined for positive prices");
    let m = params.m;
    let cap = (1.0 + params.delta) * q;
    Ok(crate::values::monte_carlo(dist, n, samples, seed, move |values| {
        let mut eligible_count = 0usize;
        let mut truncated_sum = 0.0;
        for v in values.iter().copied().filter(|v| *v >= q) {
            eligible_count += 1;
            truncated_sum += v.min(cap);
        }
        if eligible_count >= m {
            cap
        } else {
            truncated_sum / m as f64
        }
    }))
}

/// Monte-Carlo estimate of the UDPP kernel `(1+δ)/m · R(q)`.
pub fn kernel_utilization_mc(
    dist: &ValueDistribution,
    n: usize,
    params: &UpdateParams,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate, ParamError> {
    let rev = crate::values::revenue_curve_mc(dist, n, params.m, q, samples, seed)?;
    let scale = (1.0 + params.delta) / params.m as f64;
    Ok(McEstimate {
        value: scale * rev.value,
        std_error: scale * rev.std_error,
        samples: rev.samples,
    })
}
