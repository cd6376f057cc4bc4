//! Bids, allocations, the MV and RM allocation rules, and the static
//! baseline mechanisms.
//!
//! A mechanism is split into two halves that mirror the on-chain division of
//! labor:
//!
//! * [`intended_block`] — what an honest miner announces for a bid set
//!   `M_t` (the winner set, plus any price-setting bids the payment rule
//!   needs, e.g. the (m+1)-st bid under second price).
//! * [`settle_block`] — what the pricing mechanism computes once it sees the
//!   announced block. It never receives `M_t \ B_t`; payments can only
//!   depend on disclosed bids.
//!
//! [`run_static`] composes the two, giving the classic one-shot auction
//! outcome. The deviation oracles in [`crate::game`] call `settle_block`
//! directly on arbitrary blocks.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Identifier of a bidder, unique within one arrival set.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct BidderId(pub u32);

impl std::fmt::Display for BidderId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// One bidder's submission. Fake bids are miner-originated; their payments
/// are refunded, so they carry `value == bid` for bookkeeping and contribute
/// nothing to miner revenue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub bidder_id: BidderId,
    pub value: f64,
    pub bid: f64,
    pub is_fake: bool,
}

impl Bid {
    pub fn real(id: u32, value: f64, bid: f64) -> Self {
        Bid { bidder_id: BidderId(id), value, bid, is_fake: false }
    }

    pub fn truthful(id: u32, value: f64) -> Self {
        Self::real(id, value, value)
    }

    pub fn fake(id: u32, bid: f64) -> Self {
        Bid { bidder_id: BidderId(id), value: bid, bid, is_fake: true }
    }
}

/// Sorts bids by descending bid value, ties broken by smaller bidder id.
fn sort_desc(bids: &mut [Bid]) {
    bids.sort_unstable_by(|a, b| {
        b.bid.total_cmp(&a.bid).then(a.bidder_id.cmp(&b.bidder_id))
    });
}

/// The winning bids of one step plus their payments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Allocation {
    pub step: u64,
    /// Winners, sorted by bidder id.
    pub winners: Vec<Bid>,
    /// Payment per winner id; keyed exactly by the winner set.
    pub payments: BTreeMap<BidderId, f64>,
}

impl Allocation {
    pub fn new(step: u64, mut winners: Vec<Bid>, payments: BTreeMap<BidderId, f64>) -> Self {
        winners.sort_unstable_by_key(|b| b.bidder_id);
        debug_assert_eq!(winners.len(), payments.len());
        debug_assert!(winners.iter().all(|w| payments.contains_key(&w.bidder_id)));
        debug_assert!(payments.values().all(|p| *p >= 0.0));
        Allocation { step, winners, payments }
    }

    pub fn empty(step: u64) -> Self {
        Allocation { step, winners: Vec::new(), payments: BTreeMap::new() }
    }

    /// Winners that all pay the same posted price.
    pub fn at_uniform_price(step: u64, winners: Vec<Bid>, price: f64) -> Self {
        let payments = winners.iter().map(|w| (w.bidder_id, price)).collect();
        Allocation::new(step, winners, payments)
    }

    pub fn sold(&self) -> usize {
        self.winners.len()
    }

    /// Miner revenue: payments of real winners; fake winners net zero.
    pub fn miner_utility(&self) -> f64 {
        self.winners
            .iter()
            .filter(|w| !w.is_fake)
            .map(|w| self.payments[&w.bidder_id])
            .sum()
    }

    /// Quasilinear utility of one bidder: `value - payment` when allocated,
    /// zero otherwise.
    pub fn bidder_utility(&self, bid: &Bid) -> f64 {
        match self.payments.get(&bid.bidder_id) {
            Some(p) => bid.value - p,
            None => 0.0,
        }
    }

    /// Sum of winning real bidders' values.
    pub fn welfare(&self) -> f64 {
        self.winners.iter().filter(|w| !w.is_fake).map(|w| w.value).sum()
    }
}

/// The static baseline mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StaticMechanismKind {
    FirstPrice,
    SecondPrice,
    /// Posted price with the maximum-value allocation rule.
    PostedPriceMv { q: f64 },
    /// Posted price with the random-maximal allocation rule.
    PostedPriceRm { q: f64 },
    Monopolistic,
    Rsop,
    ModifiedGsp,
}

impl StaticMechanismKind {
    /// Mechanisms that sell a fixed supply of `m` slots. Monopolistic and
    /// RSOP sell unlimited supply and are exempt from the `|B| <= m` cap.
    pub fn is_limited_supply(&self) -> bool {
        !matches!(self, StaticMechanismKind::Monopolistic | StaticMechanismKind::Rsop)
    }

    /// How many bids the pricing mechanism accepts in one block: `m`
    /// winners, plus the price-setting (m+1)-st bid under second price;
    /// unbounded for the unlimited-supply mechanisms.
    pub fn block_capacity(&self, m: usize) -> Option<usize> {
        match self {
            StaticMechanismKind::SecondPrice => Some(m + 1),
            StaticMechanismKind::Monopolistic | StaticMechanismKind::Rsop => None,
            _ => Some(m),
        }
    }

    pub fn posted_price(&self) -> Option<f64> {
        match self {
            StaticMechanismKind::PostedPriceMv { q } | StaticMechanismKind::PostedPriceRm { q } => {
                Some(*q)
            }
            _ => None,
        }
    }
}

/// True iff `block` is a maximal allocation of `arrivals`: at most `m` bids,
/// and all of `arrivals` whenever fewer than `m`.
///
/// # Panics
/// If `block` is not a subset of `arrivals` (contract violation).
pub fn is_maximal(block: &[Bid], arrivals: &[Bid], m: usize) -> bool {
    assert!(
        block.iter().all(|b| arrivals.iter().any(|a| a.bidder_id == b.bidder_id)),
        "block must be a subset of the arrival set"
    );
    block.len() <= m && (block.len() == m || block.len() == arrivals.len())
}

/// The eligible set `M(q) = {i : b_i >= q}`.
pub fn eligible(arrivals: &[Bid], q: f64) -> Vec<Bid> {
    arrivals.iter().filter(|b| b.bid >= q).cloned().collect()
}

/// Maximum-value allocation: the top `min(m, |M(q)|)` eligible bids by bid
/// value, ties to the smaller bidder id.
pub fn allocate_mv(arrivals: &[Bid], q: f64, m: usize) -> Vec<Bid> {
    let mut elig = eligible(arrivals, q);
    sort_desc(&mut elig);
    elig.truncate(m);
    elig
}

/// Random maximal allocation: all of `M(q)` when it fits, otherwise a
/// uniformly random `m`-subset of `M(q)`.
pub fn allocate_rm<R: Rng>(arrivals: &[Bid], q: f64, m: usize, rng: &mut R) -> Vec<Bid> {
    let mut elig = eligible(arrivals, q);
    if elig.len() <= m {
        return elig;
    }
    // Canonical order before sampling so the draw depends only on the
    // eligible set and the rng stream.
    elig.sort_unstable_by_key(|b| b.bidder_id);
    rand::seq::index::sample(rng, elig.len(), m)
        .into_iter()
        .map(|i| elig[i])
        .collect()
}

/// Sorted-descending prefix of length `k`.
fn top_k(arrivals: &[Bid], k: usize) -> Vec<Bid> {
    let mut bids = arrivals.to_vec();
    sort_desc(&mut bids);
    bids.truncate(k);
    bids
}

/// Monopolistic price index: with bids sorted descending, the smallest
/// `k` maximizing `k * b_k` (1-based). Returns `(k, price)`.
fn monopolistic_price(sorted_desc: &[Bid]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, bid) in sorted_desc.iter().enumerate() {
        let k = i + 1;
        let rev = k as f64 * bid.bid;
        if best.is_none_or(|(_, _, r)| rev > r) {
            best = Some((k, bid.bid, rev));
        }
    }
    best.map(|(k, price, _)| (k, price))
}

/// The block an honest miner announces for arrivals `M_t`: the intended
/// winners, plus the (m+1)-st bid under second price so the pricing
/// mechanism can compute payments.
pub fn intended_block<R: Rng>(
    kind: StaticMechanismKind,
    arrivals: &[Bid],
    m: usize,
    rng: &mut R,
) -> Vec<Bid> {
    match kind {
        StaticMechanismKind::FirstPrice | StaticMechanismKind::ModifiedGsp => top_k(arrivals, m),
        StaticMechanismKind::SecondPrice => top_k(arrivals, m + 1),
        StaticMechanismKind::PostedPriceMv { q } => allocate_mv(arrivals, q, m),
        StaticMechanismKind::PostedPriceRm { q } => allocate_rm(arrivals, q, m, rng),
        StaticMechanismKind::Monopolistic => {
            let mut bids = arrivals.to_vec();
            sort_desc(&mut bids);
            match monopolistic_price(&bids) {
                Some((k, _)) => {
                    bids.truncate(k);
                    bids
                }
                None => Vec::new(),
            }
        }
        // RSOP prices each group from the other, so every bid must be
        // disclosed (its communication cost scales with n).
        StaticMechanismKind::Rsop => arrivals.to_vec(),
    }
}

/// Settles an announced block: computes winners and payments from the
/// block's bids alone. This is the only payment path in the crate; it never
/// sees undisclosed bids.
pub fn settle_block<R: Rng>(
    kind: StaticMechanismKind,
    step: u64,
    block: &[Bid],
    m: usize,
    rng: &mut R,
) -> Allocation {
    if let Some(cap) = kind.block_capacity(m) {
        assert!(block.len() <= cap, "block exceeds the mechanism's capacity");
    }
    match kind {
        StaticMechanismKind::FirstPrice => {
            let payments = block.iter().map(|b| (b.bidder_id, b.bid)).collect();
            Allocation::new(step, block.to_vec(), payments)
        }
        StaticMechanismKind::SecondPrice => {
            let mut bids = block.to_vec();
            sort_desc(&mut bids);
            // Fewer than m+1 disclosed bids leaves no price-setter.
            let price = if bids.len() == m + 1 { bids[m].bid } else { 0.0 };
            bids.truncate(m);
            Allocation::at_uniform_price(step, bids, price)
        }
        StaticMechanismKind::PostedPriceMv { q } | StaticMechanismKind::PostedPriceRm { q } => {
            let winners = eligible(block, q);
            Allocation::at_uniform_price(step, winners, q)
        }
        StaticMechanismKind::Monopolistic => {
            let mut bids = block.to_vec();
            sort_desc(&mut bids);
            match monopolistic_price(&bids) {
                Some((k, price)) => {
                    bids.truncate(k);
                    Allocation::at_uniform_price(step, bids, price)
                }
                None => Allocation::empty(step),
            }
        }
        StaticMechanismKind::Rsop => {
            // Independent fair coin per bid; each group is sold at the
            // other group's monopolistic price. An empty or priceless
            // group makes no offer to its counterpart.
            let mut group_a = Vec::new();
            let mut group_b = Vec::new();
            for bid in block {
                if rng.random_bool(0.5) {
                    group_a.push(*bid);
                } else {
                    group_b.push(*bid);
                }
            }
            settle_rsop_split(step, &group_a, &group_b)
        }
        StaticMechanismKind::ModifiedGsp => {
            // Every disclosed bid wins and pays the m-th highest, which for
            // a block of at most m bids is its lowest bid.
            let price = block.iter().map(|b| b.bid).fold(f64::INFINITY, f64::min);
            let price = if block.is_empty() { 0.0 } else { price };
            Allocation::at_uniform_price(step, block.to_vec(), price)
        }
    }
}

/// RSOP settlement for a fixed partition (exposed for the exact-expectation
/// oracles, which enumerate partitions).
pub(crate) fn settle_rsop_split(step: u64, group_a: &[Bid], group_b: &[Bid]) -> Allocation {
    let price_of = |group: &[Bid]| -> Option<f64> {
        let mut bids = group.to_vec();
        sort_desc(&mut bids);
        monopolistic_price(&bids).map(|(_, p)| p)
    };
    let mut winners = Vec::new();
    let mut payments = BTreeMap::new();
    if let Some(price_b) = price_of(group_b) {
        for bid in group_a.iter().filter(|b| b.bid >= price_b) {
            winners.push(*bid);
            payments.insert(bid.bidder_id, price_b);
        }
    }
    if let Some(price_a) = price_of(group_a) {
        for bid in group_b.iter().filter(|b| b.bid >= price_a) {
            winners.push(*bid);
            payments.insert(bid.bidder_id, price_a);
        }
    }
    Allocation::new(step, winners, payments)
}

/// Runs a static mechanism end to end on a full arrival set: the honest
/// block is formed and then settled.
pub fn run_static<R: Rng>(
    kind: StaticMechanismKind,
    step: u64,
    arrivals: &[Bid],
    m: usize,
    rng: &mut R,
) -> Allocation {
    assert!(m >= 1 || !kind.is_limited_supply(), "supply must be at least 1");
    let block = intended_block(kind, arrivals, m, rng);
    settle_block(kind, step, &block, m, rng)
}
