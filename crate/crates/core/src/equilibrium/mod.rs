//! Bayesian Nash equilibria: closed form for linear markets and a numeric
//! shooting solver for general ones.

mod linear;
mod shooting;

use std::sync::Arc;

pub use linear::{ExistenceViolation, LinearBne};
pub use shooting::NumericOptions;

use crate::market::{Market, MarketKind, Side};
use crate::numeric::CubicHermite;
use crate::payoff::PayoffContext;
use crate::strategy::{
    ProfileKind, Piece, Representation, ShoutCdf, ShoutDistributions, ShoutMap, StrategyError, StrategyProfile,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EquilibriumError {
    #[error("closed-form equilibrium needs a linear market")]
    NotLinear,
    #[error("equilibrium does not exist ({0})")]
    DoesNotExist(String),
    #[error("shooting did not converge: {0}")]
    NoConvergence(String),
    #[error("could not project onto the consistency surface at x = {x} (residual {residual:e})")]
    SurfaceProjectionFailure { x: f64, residual: f64 },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

/// Access to an equilibrium's `A(x)` and `B_c(x)` on `[a₋, b₊]`.
pub trait ShoutCurves {
    fn ask_cdf(&self, x: f64) -> f64;
    fn ask_cdf_slope(&self, x: f64) -> f64;
    fn bid_survival(&self, x: f64) -> f64;
    fn bid_survival_slope(&self, x: f64) -> f64;
}

impl ShoutCurves for LinearBne {
    fn ask_cdf(&self, x: f64) -> f64 {
        LinearBne::ask_cdf(self, x)
    }
    fn ask_cdf_slope(&self, x: f64) -> f64 {
        LinearBne::ask_cdf_slope(self, x)
    }
    fn bid_survival(&self, x: f64) -> f64 {
        LinearBne::bid_survival(self, x)
    }
    fn bid_survival_slope(&self, x: f64) -> f64 {
        LinearBne::bid_survival_slope(self, x)
    }
}

/// Equilibrium curves in either representation.
#[derive(Debug, Clone)]
pub enum BneCurves {
    ClosedForm(LinearBne),
    Tabulated { ask_cdf: Arc<CubicHermite>, bid_survival: Arc<CubicHermite> },
}

impl ShoutCurves for BneCurves {
    fn ask_cdf(&self, x: f64) -> f64 {
        match self {
            BneCurves::ClosedForm(b) => b.ask_cdf(x),
            BneCurves::Tabulated { ask_cdf, .. } => ask_cdf.value(x),
        }
    }
    fn ask_cdf_slope(&self, x: f64) -> f64 {
        match self {
            BneCurves::ClosedForm(b) => b.ask_cdf_slope(x),
            BneCurves::Tabulated { ask_cdf, .. } => ask_cdf.derivative(x),
        }
    }
    fn bid_survival(&self, x: f64) -> f64 {
        match self {
            BneCurves::ClosedForm(b) => b.bid_survival(x),
            BneCurves::Tabulated { bid_survival, .. } => bid_survival.value(x),
        }
    }
    fn bid_survival_slope(&self, x: f64) -> f64 {
        match self {
            BneCurves::ClosedForm(b) => b.bid_survival_slope(x),
            BneCurves::Tabulated { bid_survival, .. } => bid_survival.derivative(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    ClosedForm,
    Shooting,
}

/// Checks of the structural equilibrium properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShoutBounds {
    /// Every intramarginal seller asks strictly above its type.
    pub asks_above_types: bool,
    /// Every intramarginal buyer bids strictly below its type.
    pub bids_below_types: bool,
    pub a_minus_ge_d_minus: bool,
    pub b_plus_le_s_plus: bool,
    /// `|a(b₊) − b₊|`
    pub ask_fixed_point_gap: f64,
    /// `|b(a₋) − a₋|`
    pub bid_fixed_point_gap: f64,
}

impl ShoutBounds {
    pub fn holds(&self, tol: f64) -> bool {
        self.asks_above_types
            && self.bids_below_types
            && self.a_minus_ge_d_minus
            && self.b_plus_le_s_plus
            && self.ask_fixed_point_gap < tol
            && self.bid_fixed_point_gap < tol
    }
}

/// Maximum residuals of an equilibrium over an interior grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// Largest `|dπ/dx|` over both sides.
    pub foc: f64,
    /// Largest `|B_c(D(B_c) − x) − A(x − S(A))|`.
    pub consistency: f64,
    pub bounds: ShoutBounds,
    pub points: usize,
}

/// A solved (or proven absent) equilibrium.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub exists: bool,
    pub violation: Option<ExistenceViolation>,
    pub a_minus: f64,
    pub b_plus: f64,
    pub method: SolveMethod,
    /// Set for general markets, where the solver's structure is not proven.
    pub experimental: bool,
    /// `√β/(√α + √β)` (linear markets).
    pub gamma_const: Option<f64>,
    /// `√(β/α)` (linear markets).
    pub lambda_const: Option<f64>,
    /// Saddle abscissa (linear markets).
    pub x_bar: Option<f64>,
    pub residuals: Option<ResidualReport>,
    market: Market,
    curves: Option<BneCurves>,
}

const DIAGNOSTIC_POINTS: usize = 1000;

/// Closed-form equilibrium of a linear market.
pub fn solve_linear_bne(mkt: &Market) -> Result<EquilibriumSolution, EquilibriumError> {
    let bne = LinearBne::for_market(mkt).ok_or(EquilibriumError::NotLinear)?;
    let violation = bne.violation();
    let mut sol = EquilibriumSolution {
        exists: violation.is_none(),
        violation,
        a_minus: bne.a_minus,
        b_plus: bne.b_plus,
        method: SolveMethod::ClosedForm,
        experimental: false,
        gamma_const: Some(bne.gamma),
        lambda_const: Some(bne.lambda()),
        x_bar: Some(bne.x_bar()),
        residuals: None,
        market: mkt.clone(),
        curves: violation.is_none().then_some(BneCurves::ClosedForm(bne)),
    };
    if sol.exists {
        sol.residuals = Some(verify_solution(&sol, DIAGNOSTIC_POINTS)?);
    }
    Ok(sol)
}

/// Equilibrium by separatrix shooting; works for linear and general markets.
pub fn solve_bne_numeric(mkt: &Market, opts: &NumericOptions) -> Result<EquilibriumSolution, EquilibriumError> {
    let raw = shooting::solve(mkt, opts)?;
    log::info!(
        "shooting: a_minus = {:.12}, b_plus = {:.12}, bridge width {:.3e}",
        raw.a_minus,
        raw.b_plus,
        raw.bridge_width
    );
    const EXIST_TOL: f64 = 1e-9;
    let top = raw.b_plus > mkt.s_plus() + EXIST_TOL;
    let bottom = raw.a_minus < mkt.d_minus() - EXIST_TOL;
    let violation = match (top, bottom) {
        (false, false) => None,
        (true, false) => Some(ExistenceViolation::BPlusAboveSPlus),
        (false, true) => Some(ExistenceViolation::AMinusBelowDMinus),
        (true, true) => Some(ExistenceViolation::Both),
    };
    let linear = LinearBne::for_market(mkt);
    let mut sol = EquilibriumSolution {
        exists: violation.is_none(),
        violation,
        a_minus: raw.a_minus,
        b_plus: raw.b_plus,
        method: SolveMethod::Shooting,
        experimental: mkt.kind() == MarketKind::General,
        gamma_const: linear.map(|b| b.gamma),
        lambda_const: linear.map(|b| b.lambda()),
        x_bar: linear.map(|b| b.x_bar()),
        residuals: None,
        market: mkt.clone(),
        curves: violation.is_none().then(|| BneCurves::Tabulated {
            ask_cdf: Arc::new(raw.ask_cdf),
            bid_survival: Arc::new(raw.bid_survival),
        }),
    };
    if sol.exists {
        sol.residuals = Some(verify_solution(&sol, opts.grid_size.max(2))?);
    }
    Ok(sol)
}

/// Residuals and structural checks of an existing equilibrium.
pub fn verify_solution(sol: &EquilibriumSolution, points: usize) -> Result<ResidualReport, EquilibriumError> {
    let curves = sol.curves.as_ref().ok_or_else(|| EquilibriumError::DoesNotExist(sol.describe_violation()))?;
    Ok(verify_curves(&sol.market, sol.a_minus, sol.b_plus, curves, points))
}

/// Residuals of arbitrary curves on `[a_minus, b_plus]`, evaluated at
/// `points` interior grid points.
pub fn verify_curves<C: ShoutCurves + ?Sized>(mkt: &Market, a_minus: f64, b_plus: f64, curves: &C, points: usize) -> ResidualReport {
    let mut foc: f64 = 0.0;
    let mut consistency: f64 = 0.0;
    let mut asks_above = true;
    let mut bids_below = true;
    for i in 1..=points {
        let x = a_minus + (b_plus - a_minus) * i as f64 / (points + 1) as f64;
        let (a, bc) = (curves.ask_cdf(x), curves.bid_survival(x));
        let (ap, bcp) = (curves.ask_cdf_slope(x), curves.bid_survival_slope(x));
        let (m, big_m) = (mkt.supply(a), mkt.demand(bc));
        let s = a + bc;
        let cross = -bcp * a + bc * ap;
        let seller = (2.0 * (m - x) * cross + bc * s) / s.powi(3);
        let buyer = (2.0 * (big_m - x) * cross - a * s) / s.powi(3);
        foc = foc.max(seller.abs()).max(buyer.abs());
        consistency = consistency.max((bc * (big_m - x) - a * (x - m)).abs());
        asks_above &= x > m;
        bids_below &= big_m > x;
    }
    let (s_lo, _) = mkt.support(Side::Seller);
    asks_above &= a_minus > s_lo;
    let bounds = ShoutBounds {
        asks_above_types: asks_above,
        bids_below_types: bids_below,
        a_minus_ge_d_minus: a_minus >= mkt.d_minus() - 1e-9,
        b_plus_le_s_plus: b_plus <= mkt.s_plus() + 1e-9,
        ask_fixed_point_gap: (mkt.supply(curves.ask_cdf(b_plus)) - b_plus).abs(),
        bid_fixed_point_gap: (mkt.demand(curves.bid_survival(a_minus)) - a_minus).abs(),
    };
    ResidualReport { foc, consistency, bounds, points }
}

impl EquilibriumSolution {
    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn curves(&self) -> Option<&BneCurves> {
        self.curves.as_ref()
    }

    pub fn describe_violation(&self) -> String {
        match self.violation {
            None => "none".into(),
            Some(v) => format!(
                "{v}: a_minus = {}, b_plus = {}, d_minus = {}, s_plus = {}",
                self.a_minus,
                self.b_plus,
                self.market.d_minus(),
                self.market.s_plus()
            ),
        }
    }

    fn require(&self) -> Result<&BneCurves, EquilibriumError> {
        self.curves.as_ref().ok_or_else(|| EquilibriumError::DoesNotExist(self.describe_violation()))
    }

    /// `A(x)` on all of `[0, 1]`: zero below `a₋`, the equilibrium curve on
    /// `[a₋, b₊]`, and truthful extramarginal asks above `b₊`.
    pub fn ask_cdf(&self, x: f64) -> f64 {
        let Some(c) = &self.curves else { return f64::NAN };
        if x <= self.a_minus {
            0.0
        } else if x >= self.b_plus {
            self.market.type_cdf(Side::Seller, x)
        } else {
            c.ask_cdf(x).clamp(0.0, 1.0)
        }
    }

    pub fn ask_density(&self, x: f64) -> f64 {
        let Some(c) = &self.curves else { return f64::NAN };
        if x <= self.a_minus {
            0.0
        } else if x >= self.b_plus {
            self.market.type_density(Side::Seller, x)
        } else {
            c.ask_cdf_slope(x)
        }
    }

    /// `B_c(x)` on all of `[0, 1]`; truthful extramarginal bids below `a₋`.
    pub fn bid_survival(&self, x: f64) -> f64 {
        let Some(c) = &self.curves else { return f64::NAN };
        if x <= self.a_minus {
            1.0 - self.market.type_cdf(Side::Buyer, x)
        } else if x >= self.b_plus {
            0.0
        } else {
            c.bid_survival(x).clamp(0.0, 1.0)
        }
    }

    /// Density of bids, `−B_c′(x)`.
    pub fn bid_density(&self, x: f64) -> f64 {
        let Some(c) = &self.curves else { return f64::NAN };
        if x < self.a_minus {
            self.market.type_density(Side::Buyer, x)
        } else if x >= self.b_plus {
            0.0
        } else {
            -c.bid_survival_slope(x)
        }
    }

    /// Transaction price CDF `A/(A + B_c)`.
    pub fn transaction_cdf(&self, x: f64) -> f64 {
        let (a, bc) = (self.ask_cdf(x), self.bid_survival(x));
        if a + bc <= 0.0 {
            return if x >= self.b_plus { 1.0 } else { 0.0 };
        }
        a / (a + bc)
    }

    /// Shout distributions of the equilibrium, built directly from the
    /// curves.
    pub fn distributions(&self) -> Result<ShoutDistributions, EquilibriumError> {
        self.require()?;
        let (s1, s2, s3, s4) = (self.clone(), self.clone(), self.clone(), self.clone());
        let asks = ShoutCdf::new(
            move |x| s1.ask_cdf(x),
            move |x| s2.ask_density(x),
            Vec::new(),
            vec![self.a_minus, self.b_plus, self.market.s_plus()],
        );
        let bids = ShoutCdf::new(
            move |x| 1.0 - s3.bid_survival(x),
            move |x| s4.bid_density(x),
            Vec::new(),
            vec![self.market.d_minus(), self.a_minus, self.b_plus],
        );
        let repr = match self.method {
            SolveMethod::ClosedForm => Representation::ClosedForm,
            SolveMethod::Shooting => Representation::TabulatedMonotone,
        };
        Ok(ShoutDistributions::new(asks, bids, repr))
    }

    pub fn payoff_context(&self) -> Result<PayoffContext, EquilibriumError> {
        Ok(PayoffContext::new(self.market.clone(), self.distributions()?))
    }

    /// Equilibrium ask `a(m)`; truthful for extramarginal sellers.
    pub fn ask(&self, m: f64) -> Option<f64> {
        match self.curves.as_ref()? {
            _ if m >= self.b_plus => Some(m),
            BneCurves::ClosedForm(b) => Some(b.ask(m)),
            BneCurves::Tabulated { ask_cdf, .. } => {
                let q = self.market.supply_inverse(m);
                Some(ask_cdf.inverse(q).clamp(self.a_minus, self.b_plus))
            }
        }
    }

    /// Equilibrium bid `b(M)`; truthful for extramarginal buyers.
    pub fn bid(&self, big_m: f64) -> Option<f64> {
        match self.curves.as_ref()? {
            _ if big_m <= self.a_minus => Some(big_m),
            BneCurves::ClosedForm(b) => Some(b.bid(big_m)),
            BneCurves::Tabulated { bid_survival, .. } => {
                let q = self.market.demand_inverse(big_m);
                Some(bid_survival.inverse(q).clamp(self.a_minus, self.b_plus))
            }
        }
    }

    /// Seller profile `a(m)`.
    pub fn ask_profile(&self) -> Result<StrategyProfile, EquilibriumError> {
        let curves = self.require()?;
        let mkt = &self.market;
        let (s_lo, s_hi) = mkt.support(Side::Seller);
        let (map, kind) = match curves {
            BneCurves::ClosedForm(b) => (ShoutMap::LinearAsk(*b), ProfileKind::LinearBne(*b)),
            BneCurves::Tabulated { .. } => (self.tabulated_map(Side::Seller)?, ProfileKind::PiecewiseDeterministic),
        };
        let pieces = vec![Piece::new(s_lo, self.b_plus, map), Piece::new(self.b_plus, s_hi, ShoutMap::Identity)];
        Ok(StrategyProfile::with_kind(Side::Seller, mkt, kind, pieces)?)
    }

    /// Buyer profile `b(M)`.
    pub fn bid_profile(&self) -> Result<StrategyProfile, EquilibriumError> {
        let curves = self.require()?;
        let mkt = &self.market;
        let (d_lo, d_hi) = mkt.support(Side::Buyer);
        let (map, kind) = match curves {
            BneCurves::ClosedForm(b) => (ShoutMap::LinearBid(*b), ProfileKind::LinearBne(*b)),
            BneCurves::Tabulated { .. } => (self.tabulated_map(Side::Buyer)?, ProfileKind::PiecewiseDeterministic),
        };
        let pieces = vec![Piece::new(d_lo, self.a_minus, ShoutMap::Identity), Piece::new(self.a_minus, d_hi, map)];
        Ok(StrategyProfile::with_kind(Side::Buyer, mkt, kind, pieces)?)
    }

    /// Type → shout table from the tabulated curves.
    fn tabulated_map(&self, side: Side) -> Result<ShoutMap, EquilibriumError> {
        const N: usize = 2001;
        let mut types = Vec::with_capacity(N);
        let mut shouts = Vec::with_capacity(N);
        for i in 0..N {
            let x = self.a_minus + (self.b_plus - self.a_minus) * i as f64 / (N - 1) as f64;
            let v = match side {
                Side::Seller => self.market.supply(self.ask_cdf(x).max(0.0)),
                Side::Buyer => self.market.demand(self.bid_survival(x).max(0.0)),
            };
            if types.last().is_some_and(|&last| v <= last) {
                continue;
            }
            types.push(v);
            shouts.push(x);
        }
        let t = CubicHermite::monotone(types, shouts)
            .map_err(|e| EquilibriumError::NoConvergence(format!("equilibrium curve is not monotone: {e}")))?;
        Ok(ShoutMap::Table(Arc::new(t)))
    }
}
