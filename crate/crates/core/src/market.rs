//! Supply and demand curves, type distributions and the competitive
//! equilibrium.

use std::fmt;
use std::sync::Arc;

use crate::numeric::{bisect, solve_monotone, CubicHermite};

/// Which population a trader belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Seller,
    Buyer,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Seller => Side::Buyer,
            Side::Buyer => Side::Seller,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Seller => "seller",
            Side::Buyer => "buyer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarketError {
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("argument {value} outside [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
}

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum CurveRepr {
    Affine { intercept: f64, slope: f64 },
    Tabulated(CubicHermite),
    Custom { value: Func, slope: Func },
}

/// A strictly monotone, continuously differentiable price map on `[0, 1]`.
///
/// Evaluation outside `[0, 1]` continues the curve linearly with its end
/// slope. The equilibrium solver relies on this to follow trajectories a
/// little past the physical domain.
#[derive(Clone)]
pub struct Curve {
    repr: CurveRepr,
}

impl fmt::Debug for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            CurveRepr::Affine { intercept, slope } => {
                write!(f, "Curve::Affine({intercept} + {slope}·q)")
            }
            CurveRepr::Tabulated(t) => write!(f, "Curve::Tabulated({} knots)", t.knots().len()),
            CurveRepr::Custom { .. } => f.write_str("Curve::Custom"),
        }
    }
}

impl Curve {
    pub fn affine(intercept: f64, slope: f64) -> Self {
        Curve { repr: CurveRepr::Affine { intercept, slope } }
    }

    /// Monotone cubic through `(q, price)` pairs spanning `q ∈ [0, 1]`.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self, MarketError> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        if xs.first() != Some(&0.0) || xs.last() != Some(&1.0) {
            return Err(MarketError::InvalidMarket("tabulated curve must cover q from 0 to 1".into()));
        }
        let t = CubicHermite::monotone(xs, ys).map_err(|e| MarketError::InvalidMarket(e.to_string()))?;
        Ok(Curve { repr: CurveRepr::Tabulated(t) })
    }

    /// A curve given by a value function and its derivative.
    pub fn custom<V, D>(value: V, slope: D) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Curve { repr: CurveRepr::Custom { value: Arc::new(value), slope: Arc::new(slope) } }
    }

    fn raw_value(&self, q: f64) -> f64 {
        match &self.repr {
            CurveRepr::Affine { intercept, slope } => intercept + slope * q,
            CurveRepr::Tabulated(t) => t.value(q),
            CurveRepr::Custom { value, .. } => value(q),
        }
    }

    fn raw_slope(&self, q: f64) -> f64 {
        match &self.repr {
            CurveRepr::Affine { slope, .. } => *slope,
            CurveRepr::Tabulated(t) => t.derivative(q),
            CurveRepr::Custom { slope, .. } => slope(q),
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        if let CurveRepr::Affine { .. } = self.repr {
            return self.raw_value(q);
        }
        if q < 0.0 {
            self.raw_value(0.0) + self.raw_slope(0.0) * q
        } else if q > 1.0 {
            self.raw_value(1.0) + self.raw_slope(1.0) * (q - 1.0)
        } else {
            self.raw_value(q)
        }
    }

    pub fn slope(&self, q: f64) -> f64 {
        self.raw_slope(q.clamp(0.0, 1.0))
    }

    /// Inverse on the (linearly extended) curve.
    pub fn inverse(&self, p: f64) -> f64 {
        match &self.repr {
            CurveRepr::Affine { intercept, slope } => (p - intercept) / slope,
            _ => {
                let (v0, v1) = (self.raw_value(0.0), self.raw_value(1.0));
                let inc = v1 > v0;
                let below = if inc { p < v0 } else { p > v0 };
                let above = if inc { p > v1 } else { p < v1 };
                if below {
                    (p - v0) / self.raw_slope(0.0)
                } else if above {
                    1.0 + (p - v1) / self.raw_slope(1.0)
                } else {
                    solve_monotone(|q| self.raw_value(q) - p, |q| self.raw_slope(q), 0.0, 1.0, 1e-14)
                }
            }
        }
    }
}

/// Whether the market was built from straight lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarketKind {
    Linear { alpha: f64, beta: f64 },
    General,
}

/// A market: supply `S` (strictly increasing) and demand `D` (strictly
/// decreasing) on `[0, 1]`, with prices in `[0, 1]`.
///
/// Seller types are `m = S(U)` and buyer types `M = D(U)` for uniform `U`.
#[derive(Debug, Clone)]
pub struct Market {
    kind: MarketKind,
    supply: Curve,
    demand: Curve,
    s_minus: f64,
    s_plus: f64,
    d_minus: f64,
    d_plus: f64,
}

const PRICE_EPS: f64 = 1e-12;

fn in_unit(p: f64) -> bool {
    p.is_finite() && (-PRICE_EPS..=1.0 + PRICE_EPS).contains(&p)
}

/// Builds the linear market `S(x) = s_minus + alpha·x`, `D(x) = d_plus − beta·x`.
pub fn make_linear_market(s_minus: f64, alpha: f64, d_plus: f64, beta: f64) -> Result<Market, MarketError> {
    Market::linear(s_minus, alpha, d_plus, beta)
}

impl Market {
    /// See [`make_linear_market`].
    pub fn linear(s_minus: f64, alpha: f64, d_plus: f64, beta: f64) -> Result<Self, MarketError> {
        let bad = |msg: String| Err(MarketError::InvalidMarket(msg));
        if !(alpha > 0.0) || !(beta > 0.0) {
            return bad(format!("slopes must be positive (alpha = {alpha}, beta = {beta})"));
        }
        let s_plus = s_minus + alpha;
        let d_minus = d_plus - beta;
        for (name, v) in [("s_minus", s_minus), ("s_plus", s_plus), ("d_minus", d_minus), ("d_plus", d_plus)] {
            if !in_unit(v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        let m = Market {
            kind: MarketKind::Linear { alpha, beta },
            supply: Curve::affine(s_minus, alpha),
            demand: Curve::affine(d_plus, -beta),
            s_minus,
            s_plus,
            d_minus,
            d_plus,
        };
        m.check_intersection()?;
        Ok(m)
    }

    /// A market with arbitrary curves, validated on a sample grid.
    pub fn general(supply: Curve, demand: Curve) -> Result<Self, MarketError> {
        const N: usize = 1000;
        let mut prev_s = supply.value(0.0);
        let mut prev_d = demand.value(0.0);
        for i in 0..=N {
            let q = i as f64 / N as f64;
            let (s, d) = (supply.value(q), demand.value(q));
            if !in_unit(s) || !in_unit(d) {
                return Err(MarketError::InvalidMarket(format!("curve leaves [0, 1] at q = {q}")));
            }
            if i > 0 && (s <= prev_s || d >= prev_d) {
                return Err(MarketError::InvalidMarket(format!("curve not strictly monotone near q = {q}")));
            }
            prev_s = s;
            prev_d = d;
        }
        let m = Market {
            kind: MarketKind::General,
            s_minus: supply.value(0.0),
            s_plus: supply.value(1.0),
            d_minus: demand.value(1.0),
            d_plus: demand.value(0.0),
            supply,
            demand,
        };
        m.check_intersection()?;
        Ok(m)
    }

    // Strict on the top end; s_plus = d_minus (q* = 1) is allowed.
    fn check_intersection(&self) -> Result<(), MarketError> {
        if !(self.d_plus > self.s_minus) {
            return Err(MarketError::InvalidMarket(format!(
                "curves do not intersect: d_plus = {} ≤ s_minus = {}",
                self.d_plus, self.s_minus
            )));
        }
        if self.s_plus < self.d_minus {
            return Err(MarketError::InvalidMarket(format!(
                "curves do not intersect: s_plus = {} < d_minus = {}",
                self.s_plus, self.d_minus
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> MarketKind {
        self.kind
    }

    /// `(alpha, beta)` for linear markets.
    pub fn linear_slopes(&self) -> Option<(f64, f64)> {
        match self.kind {
            MarketKind::Linear { alpha, beta } => Some((alpha, beta)),
            MarketKind::General => None,
        }
    }

    pub fn s_minus(&self) -> f64 {
        self.s_minus
    }
    pub fn s_plus(&self) -> f64 {
        self.s_plus
    }
    pub fn d_minus(&self) -> f64 {
        self.d_minus
    }
    pub fn d_plus(&self) -> f64 {
        self.d_plus
    }

    /// Type support `[lo, hi]` of one side.
    pub fn support(&self, side: Side) -> (f64, f64) {
        match side {
            Side::Seller => (self.s_minus, self.s_plus),
            Side::Buyer => (self.d_minus, self.d_plus),
        }
    }

    pub fn supply(&self, q: f64) -> f64 {
        self.supply.value(q)
    }
    pub fn demand(&self, q: f64) -> f64 {
        self.demand.value(q)
    }
    pub fn supply_slope(&self, q: f64) -> f64 {
        self.supply.slope(q)
    }
    pub fn demand_slope(&self, q: f64) -> f64 {
        self.demand.slope(q)
    }
    /// `S⁻¹`, continued linearly outside `[s_minus, s_plus]`.
    pub fn supply_inverse(&self, p: f64) -> f64 {
        self.supply.inverse(p)
    }
    /// `D⁻¹`, continued linearly outside `[d_minus, d_plus]`.
    pub fn demand_inverse(&self, p: f64) -> f64 {
        self.demand.inverse(p)
    }

    /// `S(q)` or `D(q)` for `q ∈ [0, 1]`.
    pub fn eval_curve(&self, side: Side, q: f64) -> Result<f64, MarketError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(MarketError::OutOfDomain { value: q, lo: 0.0, hi: 1.0 });
        }
        Ok(match side {
            Side::Seller => self.supply(q),
            Side::Buyer => self.demand(q),
        })
    }

    /// `S⁻¹(p)` or `D⁻¹(p)` for `p` in the curve's range.
    pub fn invert_curve(&self, side: Side, p: f64) -> Result<f64, MarketError> {
        let (lo, hi) = self.support(side);
        if !(p >= lo - PRICE_EPS && p <= hi + PRICE_EPS) {
            return Err(MarketError::OutOfDomain { value: p, lo, hi });
        }
        let q = match side {
            Side::Seller => self.supply_inverse(p),
            Side::Buyer => self.demand_inverse(p),
        };
        Ok(q.clamp(0.0, 1.0))
    }

    /// Type density σ (sellers) or μ (buyers); zero outside the support.
    ///
    /// At the support endpoints the one-sided limit is returned.
    pub fn type_density(&self, side: Side, v: f64) -> f64 {
        let (lo, hi) = self.support(side);
        if v < lo || v > hi {
            return 0.0;
        }
        match (side, self.kind) {
            (Side::Seller, MarketKind::Linear { alpha, .. }) => 1.0 / alpha,
            (Side::Buyer, MarketKind::Linear { beta, .. }) => 1.0 / beta,
            (Side::Seller, MarketKind::General) => 1.0 / self.supply_slope(self.supply_inverse(v)),
            (Side::Buyer, MarketKind::General) => -1.0 / self.demand_slope(self.demand_inverse(v)),
        }
    }

    /// Probability that a type of this side is `≤ v`.
    pub fn type_cdf(&self, side: Side, v: f64) -> f64 {
        let (lo, hi) = self.support(side);
        if v <= lo {
            return 0.0;
        }
        if v >= hi {
            return 1.0;
        }
        match side {
            Side::Seller => self.supply_inverse(v).clamp(0.0, 1.0),
            Side::Buyer => (1.0 - self.demand_inverse(v)).clamp(0.0, 1.0),
        }
    }

    /// Quantile function of the type distribution (increasing in `u`).
    pub fn type_quantile(&self, side: Side, u: f64) -> f64 {
        match side {
            Side::Seller => self.supply(u),
            Side::Buyer => self.demand(1.0 - u),
        }
    }

    /// Competitive price and quantity `(p*, q*)` with `S(q*) = D(q*) = p*`.
    pub fn competitive_equilibrium(&self) -> (f64, f64) {
        match self.kind {
            MarketKind::Linear { alpha, beta } => {
                let q = (self.d_plus - self.s_minus) / (alpha + beta);
                let p = (alpha * self.d_plus + beta * self.s_minus) / (alpha + beta);
                (p, q)
            }
            MarketKind::General => {
                let g = |q: f64| self.supply(q) - self.demand(q);
                let q = bisect(g, 0.0, 1.0, 1e-15).unwrap_or(1.0);
                (0.5 * (self.supply(q) + self.demand(q)), q)
            }
        }
    }
}

/// Convenience wrapper for [`Market::competitive_equilibrium`].
pub fn competitive_equilibrium(mkt: &Market) -> (f64, f64) {
    mkt.competitive_equilibrium()
}
