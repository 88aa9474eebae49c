//! Analysis toolkit for the single-unit continuous double auction.
//!
//! Buyers and sellers with private limit prices arrive one at a time and
//! post a single shout each; the first crossing shout trades at the
//! standing quote. The crate evaluates expected payoffs for arbitrary
//! monotone strategy profiles, solves for Bayesian Nash equilibria
//! (explicitly for linear supply and demand, by separatrix shooting in
//! general), computes population profits and simulates the auction.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod market;
pub mod numeric;
pub mod payoff;
pub mod simulator;
pub mod strategy;
pub mod welfare;

pub use equilibrium::{
    solve_bne_numeric, solve_linear_bne, verify_curves, verify_solution, BneCurves, EquilibriumError,
    EquilibriumSolution, ExistenceViolation, ShoutBounds, LinearBne, NumericOptions, ResidualReport, ShoutCurves,
    SolveMethod,
};
pub use market::{competitive_equilibrium, make_linear_market, Curve, Market, MarketError, MarketKind, Side};
pub use payoff::{one_price_jump, Deviator, PayoffContext, PayoffError, Quotes};
pub use strategy::{
    induced_distributions, one_price_profile, one_price_profile_with, OnePrice, Piece, ProfileKind, Representation,
    ShoutCdf, ShoutDistributions, ShoutMap, StrategyError, StrategyProfile,
};
pub use welfare::{bne_profits, competitive_profits, lambda_identity, profit_density, ProfitRegime, Regime, WelfareError, WelfareReport};
pub use simulator::{
    monte_carlo, probe_deviation, probe_equilibrium, run_auction, run_auction_pool, AuctionState, BinnedProfits,
    MonteCarloOptions, Outcome, ProbeEstimate, ProbeOptions, SimError, SimSummary, Submission,
};
