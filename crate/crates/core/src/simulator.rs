//! Shout-by-shout simulation of the auction.
//!
//! Each step a fair coin picks a side, a fresh trader is drawn from that
//! side's type distribution and posts the shout its profile prescribes.
//! The first shout that crosses the standing quote on the other side
//! trades at that quote.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::equilibrium::{EquilibriumError, EquilibriumSolution};
use crate::market::{Market, Side};
use crate::numeric::{ks_distance, Accumulator};
use crate::strategy::StrategyProfile;

/// Steps after which an auction is declared non-terminating.
pub const STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("no trade after {steps} shouts")]
    NonTermination { steps: u64 },
    #[error("probe bin hit {hits} times, need at least {floor}")]
    InsufficientSamples { hits: u64, floor: u64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// Result of one auction: the trading types, the price and who made it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// Buyer type.
    pub big_m: f64,
    /// Seller type.
    pub m: f64,
    pub t: f64,
    pub price_maker: Side,
    pub tau: u64,
    pub bid: f64,
    pub ask: f64,
}

impl Outcome {
    pub fn buyer_profit(&self) -> f64 {
        self.big_m - self.t
    }
    pub fn seller_profit(&self) -> f64 {
        self.t - self.m
    }
}

/// What happened to a submitted shout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Submission {
    Traded(Outcome),
    Replaced,
    Ignored,
}

/// Standing best bid and ask with the types holding them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionState {
    tau: u64,
    max_bid: f64,
    min_ask: f64,
    typemax: Option<f64>,
    typemin: Option<f64>,
}

impl Default for AuctionState {
    fn default() -> Self {
        Self::new()
    }
}

impl AuctionState {
    pub fn new() -> Self {
        AuctionState { tau: 0, max_bid: 0.0, min_ask: 1.0, typemax: None, typemin: None }
    }
    pub fn tau(&self) -> u64 {
        self.tau
    }
    pub fn max_bid(&self) -> f64 {
        self.max_bid
    }
    pub fn min_ask(&self) -> f64 {
        self.min_ask
    }
    pub fn typemax(&self) -> Option<f64> {
        self.typemax
    }
    pub fn typemin(&self) -> Option<f64> {
        self.typemin
    }

    /// Processes one shout by a trader of type `v`. Crossing the opposite
    /// quote (with equality) trades; otherwise only a strict improvement
    /// replaces the own-side quote.
    pub fn submit(&mut self, side: Side, v: f64, shout: f64) -> Submission {
        self.tau += 1;
        match side {
            Side::Seller => {
                if let Some(big_m) = self.typemax.filter(|_| shout <= self.max_bid) {
                    return Submission::Traded(Outcome {
                        big_m,
                        m: v,
                        t: self.max_bid,
                        price_maker: Side::Buyer,
                        tau: self.tau,
                        bid: self.max_bid,
                        ask: shout,
                    });
                }
                if shout < self.min_ask {
                    self.min_ask = shout;
                    self.typemin = Some(v);
                    return Submission::Replaced;
                }
            }
            Side::Buyer => {
                if let Some(m) = self.typemin.filter(|_| shout >= self.min_ask) {
                    return Submission::Traded(Outcome {
                        big_m: v,
                        m,
                        t: self.min_ask,
                        price_maker: Side::Seller,
                        tau: self.tau,
                        bid: shout,
                        ask: self.min_ask,
                    });
                }
                if shout > self.max_bid {
                    self.max_bid = shout;
                    self.typemax = Some(v);
                    return Submission::Replaced;
                }
            }
        }
        Submission::Ignored
    }
}

fn check_sides(sellers: &StrategyProfile, buyers: &StrategyProfile) -> Result<(), SimError> {
    if sellers.side() != Side::Seller || buyers.side() != Side::Buyer {
        return Err(SimError::InvalidInput("profiles must be (sellers, buyers)".into()));
    }
    Ok(())
}

/// A deviating type bin: traders drawn in `[lo, hi]` on `side` act as type
/// `v` and shout `x`.
#[derive(Debug, Clone, Copy)]
struct Probe {
    side: Side,
    lo: f64,
    hi: f64,
    v: f64,
    x: f64,
}

struct Run {
    outcome: Outcome,
    probe_profit: f64,
    probe_hits: u64,
}

fn run_inner<R: Rng + ?Sized>(
    mkt: &Market,
    sellers: &StrategyProfile,
    buyers: &StrategyProfile,
    rng: &mut R,
    probe: Option<Probe>,
) -> Result<Run, SimError> {
    let mut state = AuctionState::new();
    let (mut max_is_probe, mut min_is_probe) = (false, false);
    let mut hits = 0;
    while state.tau < STEP_CAP {
        let side = if rng.random::<bool>() { Side::Seller } else { Side::Buyer };
        let mut v = mkt.type_quantile(side, rng.random::<f64>());
        let is_probe = match probe {
            Some(p) if p.side == side && v >= p.lo && v <= p.hi => {
                hits += 1;
                v = p.v;
                true
            }
            _ => false,
        };
        let shout = if is_probe {
            probe.map_or(0.0, |p| p.x)
        } else {
            match side {
                Side::Seller => sellers.shout(v, rng),
                Side::Buyer => buyers.shout(v, rng),
            }
        };
        match state.submit(side, v, shout) {
            Submission::Traded(o) => {
                let probe_profit = match (probe, side) {
                    (Some(p), _) if p.side == Side::Buyer && (max_is_probe && side == Side::Seller || is_probe) => {
                        o.buyer_profit()
                    }
                    (Some(p), _) if p.side == Side::Seller && (min_is_probe && side == Side::Buyer || is_probe) => {
                        o.seller_profit()
                    }
                    _ => 0.0,
                };
                return Ok(Run { outcome: o, probe_profit, probe_hits: hits });
            }
            Submission::Replaced => match side {
                Side::Seller => min_is_probe = is_probe,
                Side::Buyer => max_is_probe = is_probe,
            },
            Submission::Ignored => {}
        }
    }
    Err(SimError::NonTermination { steps: state.tau })
}

/// Runs one auction to its first trade.
pub fn run_auction<R: Rng + ?Sized>(
    mkt: &Market,
    sellers: &StrategyProfile,
    buyers: &StrategyProfile,
    rng: &mut R,
) -> Result<Outcome, SimError> {
    check_sides(sellers, buyers)?;
    run_inner(mkt, sellers, buyers, rng, None).map(|r| r.outcome)
}

/// Finite-population variant: `n` sellers and `n` buyers are drawn once and
/// each trader shouts at most once. Not covered by the analytic formulas.
pub fn run_auction_pool<R: Rng + ?Sized>(
    mkt: &Market,
    sellers: &StrategyProfile,
    buyers: &StrategyProfile,
    n: usize,
    rng: &mut R,
) -> Result<Outcome, SimError> {
    check_sides(sellers, buyers)?;
    let mut pool_s: Vec<f64> = (0..n).map(|_| mkt.type_quantile(Side::Seller, rng.random())).collect();
    let mut pool_b: Vec<f64> = (0..n).map(|_| mkt.type_quantile(Side::Buyer, rng.random())).collect();
    let mut state = AuctionState::new();
    loop {
        let side = match (pool_s.is_empty(), pool_b.is_empty()) {
            (true, true) => return Err(SimError::NonTermination { steps: state.tau }),
            (true, false) => Side::Buyer,
            (false, true) => Side::Seller,
            _ if rng.random::<bool>() => Side::Seller,
            _ => Side::Buyer,
        };
        let pool = if side == Side::Seller { &mut pool_s } else { &mut pool_b };
        let v = pool.swap_remove(rng.random_range(0..pool.len()));
        let shout = match side {
            Side::Seller => sellers.shout(v, rng),
            Side::Buyer => buyers.shout(v, rng),
        };
        if let Submission::Traded(o) = state.submit(side, v, shout) {
            return Ok(o);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub runs: usize,
    pub seed: u64,
    /// Type bins per side for the profit breakdown.
    pub bins: usize,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions { runs: 10_000, seed: 0, bins: 20, workers: None }
    }
}

/// Per-auction profit contributions of types in each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedProfits {
    pub edges: Vec<f64>,
    pub stats: Vec<Accumulator>,
}

impl BinnedProfits {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        BinnedProfits { edges, stats: vec![Accumulator::default(); bins] }
    }

    fn index(&self, v: f64) -> usize {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        let n = self.stats.len();
        (((v - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    }

    /// Mean profit per auction in bin `i` and its standard error.
    pub fn estimate(&self, i: usize) -> (f64, f64) {
        (self.stats[i].mean(), self.stats[i].standard_error())
    }

    pub fn total(&self) -> f64 {
        self.stats.iter().map(|s| s.mean()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub runs: usize,
    /// Transaction prices, ascending.
    pub prices: Vec<f64>,
    pub mean_price: f64,
    pub mean_price_se: f64,
    /// Fraction of trades at a standing bid (buyer made the price).
    pub buyer_price_maker: f64,
    pub mean_tau: f64,
    pub seller_profit: Accumulator,
    pub buyer_profit: Accumulator,
    pub seller_bins: BinnedProfits,
    pub buyer_bins: BinnedProfits,
    /// KS distance to the reference price CDF, when one was supplied.
    pub ks: Option<f64>,
}

impl SimSummary {
    pub fn ks_against<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        ks_distance(&self.prices, cdf)
    }

    /// Empirical price CDF at `t`.
    pub fn empirical_cdf(&self, t: f64) -> f64 {
        self.prices.partition_point(|&p| p <= t) as f64 / self.prices.len() as f64
    }
}

fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimError::ThreadPool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `opts.runs` independent auctions. Run `i` uses its own ChaCha
/// stream of the master seed, so results do not depend on scheduling.
pub fn monte_carlo(
    mkt: &Market,
    sellers: &StrategyProfile,
    buyers: &StrategyProfile,
    opts: &MonteCarloOptions,
    reference: Option<&dyn Fn(f64) -> f64>,
) -> Result<SimSummary, SimError> {
    check_sides(sellers, buyers)?;
    if opts.runs == 0 || opts.bins == 0 {
        return Err(SimError::InvalidInput("runs and bins must be positive".into()));
    }
    let outcomes: Vec<Outcome> = in_pool(opts.workers, || {
        (0..opts.runs as u64)
            .into_par_iter()
            .map(|i| run_auction(mkt, sellers, buyers, &mut run_rng(opts.seed, i)))
            .collect::<Result<Vec<_>, _>>()
    })??;
    log::debug!("monte carlo: {} runs, seed {}", opts.runs, opts.seed);

    let (s_lo, s_hi) = mkt.support(Side::Seller);
    let (b_lo, b_hi) = mkt.support(Side::Buyer);
    let mut seller_bins = BinnedProfits::new(s_lo, s_hi, opts.bins);
    let mut buyer_bins = BinnedProfits::new(b_lo, b_hi, opts.bins);
    let (mut price, mut sp, mut bp) = (Accumulator::default(), Accumulator::default(), Accumulator::default());
    let (mut buyer_made, mut tau) = (0usize, 0u64);
    for o in &outcomes {
        price.push(o.t);
        sp.push(o.seller_profit());
        bp.push(o.buyer_profit());
        if o.price_maker == Side::Buyer {
            buyer_made += 1;
        }
        tau += o.tau;
        let i = seller_bins.index(o.m);
        let s = &mut seller_bins.stats[i];
        s.sum += o.seller_profit();
        s.sum_sq += o.seller_profit().powi(2);
        let j = buyer_bins.index(o.big_m);
        let b = &mut buyer_bins.stats[j];
        b.sum += o.buyer_profit();
        b.sum_sq += o.buyer_profit().powi(2);
    }
    // Every run contributes (possibly zero) to every bin.
    for s in seller_bins.stats.iter_mut().chain(buyer_bins.stats.iter_mut()) {
        s.n = opts.runs as u64;
    }
    let mut prices: Vec<f64> = outcomes.iter().map(|o| o.t).collect();
    prices.sort_by(f64::total_cmp);
    let ks = reference.map(|f| ks_distance(&prices, f));
    let r = opts.runs as f64;
    Ok(SimSummary {
        runs: opts.runs,
        prices,
        mean_price: price.mean(),
        mean_price_se: price.standard_error(),
        buyer_price_maker: buyer_made as f64 / r,
        mean_tau: tau as f64 / r,
        seller_profit: sp,
        buyer_profit: bp,
        seller_bins,
        buyer_bins,
        ks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub runs: usize,
    pub seed: u64,
    /// Width of the type bin that plays the probe.
    pub delta: f64,
    /// Minimum number of bin draws per probe shout.
    pub min_hits: u64,
    pub workers: Option<usize>,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { runs: 100_000, seed: 0, delta: 0.005, min_hits: 100, workers: None }
    }
}

/// Simulated payoff density of shouting `x` as type `v`, with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeEstimate {
    pub x: f64,
    pub value: f64,
    pub se: f64,
    pub hits: u64,
}

impl ProbeEstimate {
    /// 95% confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.value - 1.96 * self.se, self.value + 1.96 * self.se)
    }
}

/// Estimates the payoff of a type-`v` trader on `side` shouting each `x`
/// while everybody else follows the given profiles. Realised probe profit
/// per auction is divided by the probability mass of the type bin, which
/// makes the estimate comparable with the analytic payoff densities.
#[allow(clippy::too_many_arguments)]
pub fn probe_deviation(
    mkt: &Market,
    sellers: &StrategyProfile,
    buyers: &StrategyProfile,
    side: Side,
    v: f64,
    x_grid: &[f64],
    opts: &ProbeOptions,
) -> Result<Vec<ProbeEstimate>, SimError> {
    check_sides(sellers, buyers)?;
    if opts.runs == 0 || !(opts.delta > 0.0) {
        return Err(SimError::InvalidInput("runs and delta must be positive".into()));
    }
    let (lo, hi) = (v - 0.5 * opts.delta, v + 0.5 * opts.delta);
    let mass = mkt.type_cdf(side, hi) - mkt.type_cdf(side, lo);
    if !(mass > 0.0) {
        return Err(SimError::InvalidInput(format!("type {v} has no mass on the {side} side")));
    }
    x_grid
        .iter()
        .map(|&x| {
            let probe = Probe { side, lo, hi, v, x };
            let runs: Vec<(f64, u64)> = in_pool(opts.workers, || {
                (0..opts.runs as u64)
                    .into_par_iter()
                    .map(|i| {
                        run_inner(mkt, sellers, buyers, &mut run_rng(opts.seed, i), Some(probe))
                            .map(|r| (r.probe_profit, r.probe_hits))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })??;
            let mut acc = Accumulator::default();
            let mut hits = 0;
            for &(p, h) in &runs {
                acc.push(p);
                hits += h;
            }
            if hits < opts.min_hits {
                return Err(SimError::InsufficientSamples { hits, floor: opts.min_hits });
            }
            Ok(ProbeEstimate { x, value: acc.mean() / mass, se: acc.standard_error() / mass, hits })
        })
        .collect()
}

/// [`probe_deviation`] against the equilibrium profiles of `sol`.
pub fn probe_equilibrium(
    sol: &EquilibriumSolution,
    side: Side,
    v: f64,
    x_grid: &[f64],
    opts: &ProbeOptions,
) -> Result<Vec<ProbeEstimate>, SimError> {
    let sellers = sol.ask_profile()?;
    let buyers = sol.bid_profile()?;
    probe_deviation(sol.market(), &sellers, &buyers, side, v, x_grid, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::make_linear_market;
    use crate::strategy::{one_price_profile, Piece, ShoutMap};

    fn constant(mkt: &Market, side: Side, c: f64) -> StrategyProfile {
        let (lo, hi) = mkt.support(side);
        StrategyProfile::deterministic(side, mkt, vec![Piece::new(lo, hi, ShoutMap::Constant(c))]).unwrap()
    }

    #[test]
    fn forced_sequences() {
        let mut s = AuctionState::new();
        assert_eq!(s.submit(Side::Seller, 0.2, 0.4), Submission::Replaced);
        match s.submit(Side::Buyer, 0.9, 0.6) {
            Submission::Traded(o) => {
                assert_eq!((o.t, o.price_maker, o.tau), (0.4, Side::Seller, 2));
                assert_eq!((o.m, o.big_m), (0.2, 0.9));
            }
            other => panic!("{other:?}"),
        }
        let mut s = AuctionState::new();
        s.submit(Side::Buyer, 0.9, 0.6);
        match s.submit(Side::Seller, 0.2, 0.4) {
            Submission::Traded(o) => assert_eq!((o.t, o.price_maker, o.tau), (0.6, Side::Buyer, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equal_quotes_do_not_replace_but_cross() {
        let mut s = AuctionState::new();
        s.submit(Side::Buyer, 0.9, 0.3);
        assert_eq!(s.submit(Side::Buyer, 0.8, 0.3), Submission::Ignored);
        assert_eq!(s.typemax(), Some(0.9));
        assert!(matches!(s.submit(Side::Seller, 0.1, 0.3), Submission::Traded(o) if o.t == 0.3));
    }

    #[test]
    fn one_price_trades_at_price() {
        let u = make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap();
        let op = one_price_profile(&u, 0.5).unwrap();
        let opts = MonteCarloOptions { runs: 2000, seed: 3, ..Default::default() };
        let s = monte_carlo(&u, &op.sellers, &op.buyers, &opts, None).unwrap();
        assert!(s.prices.iter().all(|&t| t == 0.5));
        assert!((s.seller_profit.mean() - 0.25).abs() < 0.02);
    }

    #[test]
    fn non_termination_is_reported() {
        let u = make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap();
        let (a, b) = (constant(&u, Side::Seller, 0.9), constant(&u, Side::Buyer, 0.1));
        let err = run_auction(&u, &a, &b, &mut run_rng(1, 0)).unwrap_err();
        assert_eq!(err, SimError::NonTermination { steps: STEP_CAP });
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let u = make_linear_market(0.1, 0.7, 0.55, 0.05).unwrap();
        let (a, b) = (StrategyProfile::zic(Side::Seller, &u), StrategyProfile::zic(Side::Buyer, &u));
        let o1 = MonteCarloOptions { runs: 500, seed: 7, bins: 5, workers: Some(1) };
        let o4 = MonteCarloOptions { workers: Some(4), ..o1 };
        assert_eq!(monte_carlo(&u, &a, &b, &o1, None).unwrap(), monte_carlo(&u, &a, &b, &o4, None).unwrap());
    }

    #[test]
    fn pool_mode_terminates() {
        let u = make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap();
        let (a, b) = (StrategyProfile::zic(Side::Seller, &u), StrategyProfile::zic(Side::Buyer, &u));
        let mut rng = run_rng(5, 0);
        for _ in 0..200 {
            match run_auction_pool(&u, &a, &b, 50, &mut rng) {
                Ok(o) => assert!(o.bid >= o.ask && o.tau <= 100),
                Err(SimError::NonTermination { steps }) => assert_eq!(steps, 100),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn probe_below_a_minus_earns_nothing() {
        let u = make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap();
        let sol = crate::equilibrium::solve_linear_bne(&u).unwrap();
        let opts = ProbeOptions { runs: 20_000, seed: 1, ..Default::default() };
        let est = probe_equilibrium(&sol, Side::Buyer, 0.9, &[0.2], &opts).unwrap();
        assert_eq!(est[0].value, 0.0);
        let few = ProbeOptions { runs: 10, ..opts };
        assert!(matches!(probe_equilibrium(&sol, Side::Buyer, 0.9, &[0.2], &few), Err(SimError::InsufficientSamples { .. })));
    }
}
