//! Expected profits of the seller and buyer populations under competitive
//! and equilibrium play.

use crate::equilibrium::{EquilibriumError, EquilibriumSolution};
use crate::market::{Market, MarketKind, Side};
use crate::numeric::{integrate, integrate_with_breaks, QuadratureError};
use crate::payoff::PayoffError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WelfareError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(#[from] QuadratureError),
    #[error(transparent)]
    Payoff(#[from] PayoffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Competitive,
    Bne,
}

/// Population profits in price units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelfareReport {
    pub regime: Regime,
    pub p_a: f64,
    pub p_b: f64,
    pub p_total: f64,
    /// Fractions of sellers and buyers that can trade.
    pub intramarginal_sellers: f64,
    pub intramarginal_buyers: f64,
    /// Seller and buyer profits from the single-integral form that uses
    /// the first-order conditions (equilibrium only).
    pub reduced: Option<(f64, f64)>,
}

const TOL: f64 = 1e-11;

/// Profits when everybody trades at the competitive price.
pub fn competitive_profits(mkt: &Market) -> Result<WelfareReport, WelfareError> {
    let (p, q) = mkt.competitive_equilibrium();
    let (p_a, p_b) = match mkt.kind() {
        MarketKind::Linear { .. } => (0.5 * (p - mkt.s_minus()), 0.5 * (mkt.d_plus() - p)),
        MarketKind::General => {
            let a = integrate(|x| p - mkt.supply(x), 0.0, q, TOL)?.value / q;
            let b = integrate(|x| mkt.demand(x) - p, 0.0, q, TOL)?.value / q;
            (a, b)
        }
    };
    Ok(WelfareReport {
        regime: Regime::Competitive,
        p_a,
        p_b,
        p_total: p_a + p_b,
        intramarginal_sellers: q,
        intramarginal_buyers: q,
        reduced: None,
    })
}

/// Equilibrium profits by direct double quadrature, with the reduced
/// single-integral form attached as a cross-check.
pub fn bne_profits(sol: &EquilibriumSolution) -> Result<WelfareReport, WelfareError> {
    if !sol.exists {
        return Err(EquilibriumError::DoesNotExist(sol.describe_violation()).into());
    }
    let p_a = seller_profit_direct(sol)?;
    let p_b = buyer_profit_direct(sol)?;
    let reduced = reduced_profits(sol)?;
    let mkt = sol.market();
    Ok(WelfareReport {
        regime: Regime::Bne,
        p_a,
        p_b,
        p_total: p_a + p_b,
        intramarginal_sellers: mkt.supply_inverse(sol.b_plus).clamp(0.0, 1.0),
        intramarginal_buyers: mkt.demand_inverse(sol.a_minus).clamp(0.0, 1.0),
        reduced: Some(reduced),
    })
}

fn weight(sol: &EquilibriumSolution, q: f64) -> f64 {
    (sol.ask_cdf(q) + sol.bid_survival(q)).powi(-2)
}

/// `∫ A′(x) π_a(x, S(A(x))) dx` over `[a₋, b₊]`, with the seller payoff
/// written out for atomless distributions.
fn seller_profit_direct(sol: &EquilibriumSolution) -> Result<f64, WelfareError> {
    let (lo, hi) = (sol.a_minus, sol.b_plus);
    let mkt = sol.market();
    let failure = std::cell::Cell::new(None);
    let outer = integrate(
        |x| {
            let (a, bc) = (sol.ask_cdf(x), sol.bid_survival(x));
            let m = mkt.supply(a);
            let inner = integrate(|q| (q - m) * sol.bid_density(q) * weight(sol, q), x, hi, TOL);
            match inner {
                Ok(i) => sol.ask_density(x) * ((x - m) * bc * weight(sol, x) + i.value),
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        1e-10,
    );
    if let Some(e) = failure.take() {
        return Err(e.into());
    }
    Ok(outer?.value)
}

/// `∫ (−B_c′(x)) π_b(x, D(B_c(x))) dx` over `[a₋, b₊]`.
fn buyer_profit_direct(sol: &EquilibriumSolution) -> Result<f64, WelfareError> {
    let (lo, hi) = (sol.a_minus, sol.b_plus);
    let mkt = sol.market();
    let failure = std::cell::Cell::new(None);
    let outer = integrate(
        |x| {
            let (a, bc) = (sol.ask_cdf(x), sol.bid_survival(x));
            let big_m = mkt.demand(bc);
            let inner = integrate(|q| (big_m - q) * sol.ask_density(q) * weight(sol, q), lo, x, TOL);
            match inner {
                Ok(i) => sol.bid_density(x) * ((big_m - x) * a * weight(sol, x) + i.value),
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        1e-10,
    );
    if let Some(e) = failure.take() {
        return Err(e.into());
    }
    Ok(outer?.value)
}

/// `P_a = ½∫(1 − T) − ∫ B_c′ G(A)/(A + B_c)²` and
/// `P_b = ½∫T + ∫ A′ H(B_c)/(A + B_c)²`, where `G(A) = A S(A) − ∫₀^A S`
/// and `H(B) = ∫₀^B D − B D(B)`.
fn reduced_profits(sol: &EquilibriumSolution) -> Result<(f64, f64), WelfareError> {
    let mkt = sol.market();
    let (lo, hi) = (sol.a_minus, sol.b_plus);
    let g = |a: f64| -> f64 {
        match mkt.kind() {
            MarketKind::Linear { alpha, .. } => 0.5 * alpha * a * a,
            MarketKind::General => a * mkt.supply(a) - integrate(|u| mkt.supply(u), 0.0, a, TOL).map_or(f64::NAN, |q| q.value),
        }
    };
    let h = |b: f64| -> f64 {
        match mkt.kind() {
            MarketKind::Linear { beta, .. } => 0.5 * beta * b * b,
            MarketKind::General => integrate(|u| mkt.demand(u), 0.0, b, TOL).map_or(f64::NAN, |q| q.value) - b * mkt.demand(b),
        }
    };
    let one_minus_t = integrate(|x| 1.0 - sol.transaction_cdf(x), lo, hi, TOL)?.value;
    let seller_rest = integrate(|q| sol.bid_density(q) * g(sol.ask_cdf(q)) * weight(sol, q), lo, hi, 1e-10)?.value;
    let buyer_rest = integrate(|q| sol.ask_density(q) * h(sol.bid_survival(q)) * weight(sol, q), lo, hi, 1e-10)?.value;
    let span = hi - lo;
    Ok((0.5 * one_minus_t + seller_rest, 0.5 * (span - one_minus_t) + buyer_rest))
}

/// What a profit density is evaluated under.
#[derive(Debug, Clone, Copy)]
pub enum ProfitRegime<'a> {
    Competitive,
    Bne(&'a EquilibriumSolution),
}

/// Expected profit of a trader of type `v`: `π_a(a(v), v)` or `π_b(b(v), v)`
/// in equilibrium, `(p* − v)/q*` (sellers) or `(v − p*)/q*` (buyers) for
/// intramarginal traders in the competitive market.
pub fn profit_density(mkt: &Market, regime: ProfitRegime<'_>, side: Side, v: f64) -> Result<f64, WelfareError> {
    match regime {
        ProfitRegime::Competitive => {
            let (p, q) = mkt.competitive_equilibrium();
            Ok(match side {
                Side::Seller if v <= p => (p - v) / q,
                Side::Buyer if v >= p => (v - p) / q,
                _ => 0.0,
            })
        }
        ProfitRegime::Bne(sol) => {
            let ctx = sol.payoff_context()?;
            match side {
                Side::Seller => {
                    let x = sol.ask(v).ok_or_else(|| EquilibriumError::DoesNotExist(sol.describe_violation()))?;
                    Ok(ctx.seller_payoff(x, v)?)
                }
                Side::Buyer => {
                    let x = sol.bid(v).ok_or_else(|| EquilibriumError::DoesNotExist(sol.describe_violation()))?;
                    Ok(ctx.buyer_payoff(x, v)?)
                }
            }
        }
    }
}

/// Evaluates the normalised total-profit expression for `λ = √(β/α)`.
/// For every `λ > 0` it equals one, which is equivalent to equilibrium
/// profits matching competitive ones.
pub fn lambda_identity(lambda: f64) -> Result<f64, WelfareError> {
    if (lambda - 1.0).abs() < 1e-12 {
        // A′ = 3/2 and 1 − T = 3/2 − 2x on [1/4, 3/4].
        let i = integrate(|x| 1.5 * (1.5 - 2.0 * x).powi(2), 0.25, 0.75, 1e-14)?.value;
        return Ok(0.5 + 2.0 * i);
    }
    let l = lambda;
    let lo = 2.0 * l / (1.0 + l);
    let hi = 2.0 * l * l / (1.0 + l);
    let c = 4.0 * l.powi(6) / (1.0 + l).powi(2);
    let integral = integrate_with_breaks(|y| (1.0 + l) * y - 3.0 * l * l + c / (y * y), lo, hi, &[], 1e-14)?.value;
    let factor = (1.0 + l * l) / (2.0 * l * l * (1.0 - l).powi(2) * (l * l - 1.0));
    Ok(2.0 * l / (1.0 + l).powi(2) + factor * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_linear_bne;
    use crate::market::make_linear_market;

    #[test]
    fn competitive_linear() {
        let u = make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap();
        let r = competitive_profits(&u).unwrap();
        assert!((r.p_a - 0.25).abs() < 1e-15 && (r.p_total - 0.5).abs() < 1e-15);
        let f = competitive_profits(&make_linear_market(0.1, 0.7, 0.55, 0.05).unwrap()).unwrap();
        assert!((f.p_a - 0.21).abs() < 1e-12 && (f.p_b - 0.015).abs() < 1e-12);
    }

    #[test]
    fn competitive_general_matches_linear_formula() {
        use crate::market::Curve;
        let g = Market::general(Curve::custom(|q| 0.3 + 0.6 * q, |_| 0.6), Curve::custom(|q| 1.0 - q, |_| -1.0)).unwrap();
        let r = competitive_profits(&g).unwrap();
        assert!((r.p_a - 0.5 * (0.5625 - 0.3)).abs() < 1e-10);
        assert!((r.p_b - 0.5 * (1.0 - 0.5625)).abs() < 1e-10);
    }

    #[test]
    fn uniform_bne_profits() {
        let sol = solve_linear_bne(&make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let r = bne_profits(&sol).unwrap();
        assert!((r.p_total - 0.5).abs() < 1e-9, "{r:?}");
        assert!((r.p_a - 0.25).abs() < 1e-9 && (r.p_b - 0.25).abs() < 1e-9);
        let (ra, rb) = r.reduced.unwrap();
        assert!((ra - r.p_a).abs() < 1e-9 && (rb - r.p_b).abs() < 1e-9);
        assert!(r.intramarginal_sellers > 0.5 && r.intramarginal_buyers > 0.5);
    }

    #[test]
    fn asymmetric_bne_total() {
        let sol = solve_linear_bne(&make_linear_market(0.3, 0.6, 1.0, 1.0).unwrap()).unwrap();
        let r = bne_profits(&sol).unwrap();
        assert!((r.p_total - 0.35).abs() < 1e-8, "{r:?}");
        let (ra, rb) = r.reduced.unwrap();
        assert!((ra - r.p_a).abs() < 1e-8 && (rb - r.p_b).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn profit_densities() {
        let u = make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(profit_density(&u, ProfitRegime::Competitive, Side::Seller, 0.0).unwrap(), 1.0);
        assert_eq!(profit_density(&u, ProfitRegime::Competitive, Side::Seller, 0.6).unwrap(), 0.0);
        let sol = solve_linear_bne(&u).unwrap();
        assert!((profit_density(&u, ProfitRegime::Bne(&sol), Side::Seller, 0.0).unwrap() - 1.0).abs() < 1e-9);
        let total = integrate(|v| profit_density(&u, ProfitRegime::Bne(&sol), Side::Seller, v).unwrap(), 0.0, 1.0, 1e-10)
            .unwrap()
            .value;
        assert!((total - 0.25).abs() < 1e-8, "{total}");
    }

    #[test]
    fn lambda_identity_is_one() {
        for &l in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            assert!((lambda_identity(l).unwrap() - 1.0).abs() < 1e-12, "λ = {l}");
        }
    }
}
