//! A mechanism-design laboratory for blockchain transaction-fee markets.
//!
//! The crate models a market that sells `m` identical block slots per time
//! step. It implements the static baseline auctions (first price, second
//! price, posted price, monopolistic, RSOP, modified GSP), dynamic
//! posted-price mechanisms under three price-update rules (welfare-based,
//! utilization-based, truncated welfare-based, plus the EIP-1559 variant),
//! the decentralized multi-round auction game with brute-force
//! strategic-deviation oracles, and an iterative fixed-point solver for
//! Lipschitz, strictly concave kernels that underpins the stability
//! analysis.
//!
//! Everything stochastic is driven by explicit seeds through a portable
//! generator ([`rng`]), so traces, estimates, and oracle reports replay
//! bit-identically.
//!
//! Modules:
//! * [`values`] — value distributions, demand profiles, demand/revenue
//!   curve estimation, curve diagnostics.
//! * [`market`] — bids, allocations, allocation rules, static mechanisms.
//! * [`dynamics`] — price-update rules, per-step transitions, kernels.
//! * [`fixedpoint`] — the concave fixed-point solver and its diagnostics.
//! * [`game`] — the multi-round game and the incentive oracles.
//! * [`experiments`] — scenarios, traces, stability classification.

pub mod dynamics;
pub mod experiments;
pub mod fixedpoint;
pub mod game;
pub mod market;
pub mod rng;
pub mod values;

pub use dynamics::{AllocRule, PriceState, UpdateParams, UpdateRuleKind};
pub use experiments::{
    classify_stability, detect_equilibrium_price, run_scenario, ScenarioConfig, SimulationTrace,
    StabilityVerdict, TraceRecord,
};
pub use game::{
    check_ic_dsic, miner_best_deviation, run_game, BidderStrategy, GameConfig, MechanismSpec,
    MinerStrategy,
};
pub use market::{Allocation, Bid, BidderId, StaticMechanismKind};
pub use values::{DemandProfile, ValueDistribution};
