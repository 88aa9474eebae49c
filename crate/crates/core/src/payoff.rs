//! Expected payoffs, outcome weights γ₁/γ₂ and the transaction price
//! distribution.

use crate::market::{Market, Side};
use crate::numeric::{integrate_with_breaks, QuadratureError};
use crate::strategy::ShoutDistributions;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PayoffError {
    #[error("degenerate distributions at x = {x}: a γ denominator is not positive")]
    Degenerate { x: f64 },
    #[error("payoff is not differentiable at x = {x}")]
    NotDifferentiableHere { x: f64 },
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Which trader deviates when querying outcome weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deviator {
    Buyer,
    Seller,
}

/// The four CDF values at a point, possibly as one-sided limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quotes {
    /// `A(x)`
    pub a: f64,
    /// `𝓐(x)`
    pub cal_a: f64,
    /// `B(x)`
    pub b: f64,
    /// `𝓑(x)`
    pub cal_b: f64,
}

impl Quotes {
    pub fn gamma1(&self) -> Option<f64> {
        let d1 = 1.0 - self.b + self.a;
        let d2 = 1.0 - self.cal_b + self.a;
        (d1 > 0.0 && d2 > 0.0).then(|| 1.0 / (d1 * d2))
    }

    pub fn gamma2(&self) -> Option<f64> {
        let d1 = 1.0 - self.cal_b + self.a;
        let d2 = 1.0 - self.cal_b + self.cal_a;
        (d1 > 0.0 && d2 > 0.0).then(|| 1.0 / (d1 * d2))
    }
}

/// Inputs shared by all payoff evaluations.
#[derive(Debug, Clone)]
pub struct PayoffContext {
    pub mkt: Market,
    pub dists: ShoutDistributions,
    pub tol: f64,
}

const DEFAULT_TOL: f64 = 1e-10;
const KINK_GUARD: f64 = 1e-12;

impl PayoffContext {
    pub fn new(mkt: Market, dists: ShoutDistributions) -> Self {
        PayoffContext { mkt, dists, tol: DEFAULT_TOL }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn quotes(&self, x: f64) -> Quotes {
        let d = &self.dists;
        Quotes { a: d.a(x), cal_a: d.cal_a(x), b: d.b(x), cal_b: d.cal_b(x) }
    }

    /// Limits as the shout approaches `x` from above: strict and weak
    /// inequalities coincide with the weak ones.
    pub fn quotes_right(&self, x: f64) -> Quotes {
        let (a, b) = (self.dists.a(x), self.dists.b(x));
        Quotes { a, cal_a: a, b, cal_b: b }
    }

    /// Limits as the shout approaches `x` from below.
    pub fn quotes_left(&self, x: f64) -> Quotes {
        let (a, b) = (self.dists.cal_a(x), self.dists.cal_b(x));
        Quotes { a, cal_a: a, b, cal_b: b }
    }

    /// `γ₁(x) = 1/((1 − B + A)(1 − 𝓑 + A))`.
    pub fn gamma1(&self, x: f64) -> Result<f64, PayoffError> {
        self.quotes(x).gamma1().ok_or(PayoffError::Degenerate { x })
    }

    /// `γ₂(x) = 1/((1 − 𝓑 + A)(1 − 𝓑 + 𝓐))`.
    pub fn gamma2(&self, x: f64) -> Result<f64, PayoffError> {
        self.quotes(x).gamma2().ok_or(PayoffError::Degenerate { x })
    }

    /// Truncated-series evaluation of `(γ₁, γ₂)` from the auction's
    /// step-by-step probabilities. Serves as an independent oracle for
    /// [`gamma1`](Self::gamma1) and [`gamma2`](Self::gamma2).
    pub fn gamma_series_oracle(&self, x: f64, tol: f64) -> (f64, f64) {
        let q = self.quotes(x);
        // γ₁: a buyer at x waits for an ask ≤ x while no bid ≥ x or better arrives.
        let g1 = series(1.0 - q.a, q.b, q.cal_b, tol);
        // γ₂: the roles of the two sides swap, using strict inequalities.
        let g2 = series(q.cal_b, 1.0 - q.cal_a, 1.0 - q.a, tol);
        (g1, g2)
    }

    /// Weights of the two price outcomes when one trader shouts `x`
    /// against an opponent shouting `opponent`: `(maker, taker)`.
    ///
    /// For a deviating buyer the trade happens iff `x ≥ a`; it occurs at
    /// `x` with weight γ₁(x) and at `a` with weight γ₂(a). For a seller the
    /// condition is `b ≥ x` with weights γ₂(x) and γ₁(b).
    pub fn outcome_density_coefficients(&self, who: Deviator, x: f64, opponent: f64) -> Result<(f64, f64), PayoffError> {
        match who {
            Deviator::Buyer if x >= opponent => Ok((self.gamma1(x)?, self.gamma2(opponent)?)),
            Deviator::Seller if opponent >= x => Ok((self.gamma2(x)?, self.gamma1(opponent)?)),
            _ => Ok((0.0, 0.0)),
        }
    }

    fn breaks(&self) -> Vec<f64> {
        self.dists.breakpoints()
    }

    /// `∫_{[lo, hi]} g(q) dA(q)` including atoms in the closed interval.
    fn stieltjes_asks<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64) -> Result<f64, PayoffError> {
        let asks = self.dists.asks();
        let atoms: f64 = asks.atoms().iter().filter(|a| a.0 >= lo && a.0 <= hi).map(|a| g(a.0) * a.1).sum();
        let cont = integrate_with_breaks(|q| g(q) * asks.density(q), lo, hi, &self.breaks(), self.tol)?;
        Ok(atoms + cont.value)
    }

    /// `∫_{[lo, hi]} g(q) d𝓑(q)` including atoms in the closed interval.
    fn stieltjes_bids<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64) -> Result<f64, PayoffError> {
        let bids = self.dists.bids();
        let atoms: f64 = bids.atoms().iter().filter(|a| a.0 >= lo && a.0 <= hi).map(|a| g(a.0) * a.1).sum();
        let cont = integrate_with_breaks(|q| g(q) * bids.density(q), lo, hi, &self.breaks(), self.tol)?;
        Ok(atoms + cont.value)
    }

    fn gamma_or_nan(g: Option<f64>) -> f64 {
        g.unwrap_or(f64::NAN)
    }

    fn buyer_payoff_with(&self, x: f64, big_m: f64, at_x: Quotes) -> Result<f64, PayoffError> {
        let g1 = at_x.gamma1().ok_or(PayoffError::Degenerate { x })?;
        let maker = (big_m - x) * at_x.a * g1;
        let taker = self.stieltjes_asks(|q| (big_m - q) * Self::gamma_or_nan(self.quotes(q).gamma2()), 0.0, x)?;
        Ok(maker + taker)
    }

    fn seller_payoff_with(&self, x: f64, m: f64, at_x: Quotes) -> Result<f64, PayoffError> {
        let g2 = at_x.gamma2().ok_or(PayoffError::Degenerate { x })?;
        let maker = (x - m) * (1.0 - at_x.cal_b) * g2;
        let taker = self.stieltjes_bids(|q| (q - m) * Self::gamma_or_nan(self.quotes(q).gamma1()), x, 1.0)?;
        Ok(maker + taker)
    }

    /// Expected payoff density `π_b(x, M)` of a buyer of type `M` bidding `x`.
    pub fn buyer_payoff(&self, x: f64, big_m: f64) -> Result<f64, PayoffError> {
        self.buyer_payoff_with(x, big_m, self.quotes(x))
    }

    /// `lim_{y↓x} π_b(y, M)`; differs from [`buyer_payoff`](Self::buyer_payoff)
    /// only where `x` carries an atom.
    pub fn buyer_payoff_right_limit(&self, x: f64, big_m: f64) -> Result<f64, PayoffError> {
        self.buyer_payoff_with(x, big_m, self.quotes_right(x))
    }

    /// Expected payoff density `π_a(x, m)` of a seller of type `m` asking `x`.
    pub fn seller_payoff(&self, x: f64, m: f64) -> Result<f64, PayoffError> {
        self.seller_payoff_with(x, m, self.quotes(x))
    }

    /// `lim_{y↑x} π_a(y, m)`.
    pub fn seller_payoff_left_limit(&self, x: f64, m: f64) -> Result<f64, PayoffError> {
        self.seller_payoff_with(x, m, self.quotes_left(x))
    }

    fn smooth_state(&self, x: f64) -> Result<(f64, f64, f64, f64), PayoffError> {
        if self.dists.has_atoms() || self.breaks().iter().any(|k| (k - x).abs() < KINK_GUARD) {
            return Err(PayoffError::NotDifferentiableHere { x });
        }
        let a = self.dists.a(x);
        let bc = self.dists.b_c(x);
        let a_slope = self.dists.asks().density(x);
        let bc_slope = -self.dists.bids().density(x);
        Ok((a, bc, a_slope, bc_slope))
    }

    /// `dπ/dx` for an explicit type `v`, for continuous profiles.
    pub fn payoff_derivative_for_type(&self, side: Side, x: f64, v: f64) -> Result<f64, PayoffError> {
        let (a, bc, ap, bcp) = self.smooth_state(x)?;
        let s = a + bc;
        let cross = -bcp * a + bc * ap;
        let num = match side {
            Side::Seller => 2.0 * (v - x) * cross + bc * s,
            Side::Buyer => 2.0 * (v - x) * cross - a * s,
        };
        Ok(num / (s * s * s))
    }

    /// `dπ/dx` with the type recovered from the distributions themselves,
    /// `m = S(A(x))` or `M = D(B_c(x))`. Vanishes along an equilibrium.
    pub fn payoff_derivative(&self, side: Side, x: f64) -> Result<f64, PayoffError> {
        let v = match side {
            Side::Seller => self.mkt.supply(self.dists.a(x)),
            Side::Buyer => self.mkt.demand(self.dists.b_c(x)),
        };
        self.payoff_derivative_for_type(side, x, v)
    }

    /// Transaction price CDF `T(t) = A/(1 − B + A)` (continuous profiles only).
    pub fn price_cdf(&self, t: f64) -> Result<f64, PayoffError> {
        if self.dists.has_atoms() {
            return Err(PayoffError::AssumptionViolated("price CDF formula needs atomless distributions".into()));
        }
        let a = self.dists.a(t);
        let den = self.dists.b_c(t) + a;
        if den <= 0.0 {
            return Err(PayoffError::Degenerate { x: t });
        }
        Ok(a / den)
    }

    /// Mean transaction price `∫₀¹ (1 − T)`.
    pub fn mean_price(&self) -> Result<f64, PayoffError> {
        self.price_cdf(0.5)?;
        let q = integrate_with_breaks(
            |t| 1.0 - self.price_cdf(t).unwrap_or(f64::NAN),
            0.0,
            1.0,
            &self.breaks(),
            self.tol,
        )?;
        Ok(q.value)
    }

    /// Probabilities that the buyer resp. the seller sets the price:
    /// `(∫ γ A dB, ∫ γ B_c dA)`.
    pub fn price_maker_split(&self) -> Result<(f64, f64), PayoffError> {
        self.price_cdf(0.5)?;
        let d = &self.dists;
        let gamma = |x: f64| 1.0 / (d.a(x) + d.b_c(x)).powi(2);
        let br = self.breaks();
        let buyer = integrate_with_breaks(|x| gamma(x) * d.a(x) * d.bids().density(x), 0.0, 1.0, &br, self.tol)?;
        let seller = integrate_with_breaks(|x| gamma(x) * d.b_c(x) * d.asks().density(x), 0.0, 1.0, &br, self.tol)?;
        Ok((buyer.value, seller.value))
    }

    /// Relative payoff jump at a one-price atom `p`:
    /// `q_d/(q_s(q_s + q_d))` for buyers, `q_s/(q_d(q_s + q_d))` for sellers.
    pub fn one_price_jump(&self, p: f64, side: Side) -> Result<f64, PayoffError> {
        let q_s = self.dists.asks().atom_at(p);
        let q_d = self.dists.bids().atom_at(p);
        if q_s <= 0.0 || q_d <= 0.0 {
            return Err(PayoffError::AssumptionViolated(format!("no one-price atoms at {p}")));
        }
        Ok(one_price_jump(q_s, q_d, side))
    }
}

/// Relative payoff jump for intramarginal fractions `q_s`, `q_d`.
pub fn one_price_jump(q_s: f64, q_d: f64, side: Side) -> f64 {
    match side {
        Side::Buyer => q_d / (q_s * (q_s + q_d)),
        Side::Seller => q_s / (q_d * (q_s + q_d)),
    }
}

/// `½ Σ_{N≥1} u_N` with `u_N = Σ_k C(N,k) 2^{-N} c^{N-k} h_k` and
/// `h_{k+1} = p h_k + q^k`, `h_0 = 0`.
fn series(c: f64, p: f64, q: f64, tol: f64) -> f64 {
    const N_MAX: usize = 50_000;
    let ln_half = 0.5f64.ln();
    let ln_c = c.ln();
    let mut ln_fact = vec![0.0f64; N_MAX + 2];
    for i in 1..ln_fact.len() {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let mut h = vec![0.0f64; 1];
    let mut total = 0.0;
    let mut small_run = 0;
    for n in 1..=N_MAX {
        // Extend h to index n.
        let k = h.len() - 1;
        h.push(p * h[k] + q.powi(k as i32));
        let mut u = 0.0;
        for (k, &hk) in h.iter().enumerate().skip(1) {
            if hk == 0.0 {
                continue;
            }
            let rest = n - k;
            let ln_cpow = if rest == 0 { 0.0 } else { rest as f64 * ln_c };
            let ln_w = ln_fact[n] - ln_fact[k] - ln_fact[rest] + n as f64 * ln_half + ln_cpow;
            u += (ln_w + hk.ln()).exp();
        }
        let term = 0.5 * u;
        total += term;
        if term < tol * 1e-2 && n > 4 {
            small_run += 1;
            if small_run > 8 {
                break;
            }
        } else {
            small_run = 0;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::make_linear_market;
    use crate::strategy::{induced_distributions, one_price_profile, Piece, ShoutMap, StrategyProfile};

    fn uniform() -> Market {
        make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn uniform_bne() -> PayoffContext {
        let m = uniform();
        let s = StrategyProfile::deterministic(
            Side::Seller,
            &m,
            vec![
                Piece::new(0.0, 0.75, ShoutMap::Affine { intercept: 0.25, slope: 2.0 / 3.0 }),
                Piece::new(0.75, 1.0, ShoutMap::Identity),
            ],
        )
        .unwrap();
        let b = StrategyProfile::deterministic(
            Side::Buyer,
            &m,
            vec![
                Piece::new(0.0, 0.25, ShoutMap::Identity),
                Piece::new(0.25, 1.0, ShoutMap::Affine { intercept: 1.0 / 12.0, slope: 2.0 / 3.0 }),
            ],
        )
        .unwrap();
        let d = induced_distributions(&m, &s, &b).unwrap();
        PayoffContext::new(m, d)
    }

    fn uniform_one_price(p: f64) -> PayoffContext {
        let m = uniform();
        let op = one_price_profile(&m, p).unwrap();
        let d = induced_distributions(&m, &op.sellers, &op.buyers).unwrap();
        PayoffContext::new(m, d)
    }

    #[test]
    fn gammas_at_known_points() {
        let ctx = uniform_bne();
        assert!((ctx.gamma1(0.5).unwrap() - 16.0 / 9.0).abs() < 1e-14);
        assert!((ctx.gamma2(0.5).unwrap() - 16.0 / 9.0).abs() < 1e-14);
        let op = uniform_one_price(0.5);
        assert!((op.gamma1(0.5).unwrap() - 2.0).abs() < 1e-14);
        assert!((op.gamma2(0.5).unwrap() - 2.0).abs() < 1e-14);
        let empty = Quotes { a: 0.0, cal_a: 0.0, b: 0.0, cal_b: 0.0 };
        assert_eq!((empty.gamma1(), empty.gamma2()), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn series_oracle_matches_closed_form() {
        assert!((series(1.0, 0.0, 0.0, 1e-14) - 1.0).abs() < 1e-12);
        let ctx = uniform_bne();
        let (g1, g2) = ctx.gamma_series_oracle(0.5, 1e-12);
        assert!((g1 - 16.0 / 9.0).abs() < 1e-10 && (g2 - 16.0 / 9.0).abs() < 1e-10);
        let op = uniform_one_price(0.5);
        let (g1, g2) = op.gamma_series_oracle(0.5, 1e-12);
        assert!((g1 - 2.0).abs() < 1e-10 && (g2 - 2.0).abs() < 1e-10, "{g1} {g2}");
    }

    #[test]
    fn outcome_coefficients() {
        let ctx = uniform_bne();
        assert_eq!(ctx.outcome_density_coefficients(Deviator::Buyer, 0.3, 0.5).unwrap(), (0.0, 0.0));
        let (m, t) = ctx.outcome_density_coefficients(Deviator::Buyer, 0.5, 0.4).unwrap();
        assert!((m - 16.0 / 9.0).abs() < 1e-14);
        assert!((t - ctx.gamma2(0.4).unwrap()).abs() < 1e-15);
        let (m, t) = ctx.outcome_density_coefficients(Deviator::Seller, 0.5, 0.5).unwrap();
        assert!(m > 0.0 && t > 0.0);
    }

    #[test]
    fn one_price_payoffs_and_jump() {
        let ctx = uniform_one_price(0.5);
        assert!((ctx.buyer_payoff(0.5, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ctx.buyer_payoff_right_limit(0.5, 1.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((ctx.seller_payoff(0.5, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ctx.seller_payoff_left_limit(0.5, 0.0).unwrap() - 1.5).abs() < 1e-12);
        assert!((ctx.one_price_jump(0.5, Side::Buyer).unwrap() - 1.0).abs() < 1e-15);
        let ctx6 = uniform_one_price(0.6);
        assert!((ctx6.one_price_jump(0.6, Side::Buyer).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((ctx6.one_price_jump(0.6, Side::Seller).unwrap() - 1.5).abs() < 1e-12);
        assert!(ctx6.price_cdf(0.5).is_err());
    }

    #[test]
    fn bne_seller_payoff_at_lowest_type() {
        // (1/4)(3/4)(16/9) + (16/9)∫_{1/4}^{3/4} (3/2) q dq = 1/3 + 2/3
        let ctx = uniform_bne();
        assert!((ctx.seller_payoff(0.25, 0.0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ctx.buyer_payoff(0.2, 1.0).unwrap(), 0.0);
        assert_eq!(ctx.seller_payoff(0.8, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn bne_first_order_conditions() {
        let ctx = uniform_bne();
        assert!(ctx.payoff_derivative(Side::Seller, 0.5).unwrap().abs() < 1e-12);
        assert!(ctx.payoff_derivative(Side::Buyer, 0.5).unwrap().abs() < 1e-12);
        assert!(matches!(ctx.payoff_derivative(Side::Buyer, 0.25), Err(PayoffError::NotDifferentiableHere { .. })));
        // At x = m the seller gains from raising the ask.
        let (a, bc) = (ctx.dists.a(0.4), ctx.dists.b_c(0.4));
        let d = ctx.payoff_derivative_for_type(Side::Seller, 0.4, 0.4).unwrap();
        assert!((d - bc * (bc + a) / (bc + a).powi(3)).abs() < 1e-14 && d > 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ctx = uniform_bne();
        let h = 1e-5;
        for &x in &[0.3, 0.45, 0.6, 0.7] {
            let big_m = 0.9;
            let fd = (ctx.buyer_payoff(x + h, big_m).unwrap() - ctx.buyer_payoff(x - h, big_m).unwrap()) / (2.0 * h);
            assert!((fd - ctx.payoff_derivative_for_type(Side::Buyer, x, big_m).unwrap()).abs() < 1e-5);
            let m = 0.1;
            let fd = (ctx.seller_payoff(x + h, m).unwrap() - ctx.seller_payoff(x - h, m).unwrap()) / (2.0 * h);
            assert!((fd - ctx.payoff_derivative_for_type(Side::Seller, x, m).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn price_cdf_and_split() {
        let ctx = uniform_bne();
        assert_eq!(ctx.price_cdf(0.25).unwrap(), 0.0);
        assert!((ctx.price_cdf(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((ctx.price_cdf(0.75).unwrap() - 1.0).abs() < 1e-15);
        assert!((ctx.mean_price().unwrap() - 0.5).abs() < 1e-10);
        let (b, s) = ctx.price_maker_split().unwrap();
        assert!((b + s - 1.0).abs() < 1e-9 && (b - s).abs() < 1e-9);
    }
}
