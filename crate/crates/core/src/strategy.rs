//! Strategy profiles and the shout distributions they induce.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::equilibrium::LinearBne;
use crate::market::{Market, MarketKind, Side};
use crate::numeric::{integrate_with_breaks, CubicHermite};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrategyError {
    #[error("profile does not match the market: {0}")]
    ProfileMismatch(String),
    #[error("price {p} leaves no intramarginal mass on one side")]
    NoIntramarginalMass { p: f64 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// A monotone map from a trader type to a shout.
#[derive(Clone)]
pub enum ShoutMap {
    Constant(f64),
    Identity,
    Affine { intercept: f64, slope: f64 },
    /// Monotone interpolant through `(type, shout)` knots.
    Table(Arc<CubicHermite>),
    /// Closed-form equilibrium ask of a linear market.
    LinearAsk(LinearBne),
    /// Closed-form equilibrium bid of a linear market.
    LinearBid(LinearBne),
}

impl fmt::Debug for ShoutMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShoutMap::Constant(c) => write!(f, "Constant({c})"),
            ShoutMap::Identity => f.write_str("Identity"),
            ShoutMap::Affine { intercept, slope } => write!(f, "Affine({intercept} + {slope}·v)"),
            ShoutMap::Table(t) => write!(f, "Table({} knots)", t.knots().len()),
            ShoutMap::LinearAsk(_) => f.write_str("LinearAsk"),
            ShoutMap::LinearBid(_) => f.write_str("LinearBid"),
        }
    }
}

impl ShoutMap {
    pub fn value(&self, v: f64) -> f64 {
        match self {
            ShoutMap::Constant(c) => *c,
            ShoutMap::Identity => v,
            ShoutMap::Affine { intercept, slope } => intercept + slope * v,
            ShoutMap::Table(t) => t.value(v),
            ShoutMap::LinearAsk(b) => b.ask(v),
            ShoutMap::LinearBid(b) => b.bid(v),
        }
    }

    pub fn slope(&self, v: f64) -> f64 {
        match self {
            ShoutMap::Constant(_) => 0.0,
            ShoutMap::Identity => 1.0,
            ShoutMap::Affine { slope, .. } => *slope,
            ShoutMap::Table(t) => t.derivative(v),
            ShoutMap::LinearAsk(b) => b.ask_slope(v),
            ShoutMap::LinearBid(b) => b.bid_slope(v),
        }
    }

    /// Type whose shout is `x`; only meaningful for increasing maps.
    pub fn inverse(&self, x: f64) -> f64 {
        match self {
            ShoutMap::Constant(c) => *c,
            ShoutMap::Identity => x,
            ShoutMap::Affine { intercept, slope } => (x - intercept) / slope,
            ShoutMap::Table(t) => t.inverse(x),
            ShoutMap::LinearAsk(b) => b.ask_inverse(x),
            ShoutMap::LinearBid(b) => b.bid_inverse(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ShoutMap::Constant(_)) || matches!(self, ShoutMap::Affine { slope, .. } if *slope == 0.0)
    }

    fn is_tabulated(&self) -> bool {
        matches!(self, ShoutMap::Table(_))
    }
}

/// A shout map restricted to the type interval `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub map: ShoutMap,
}

impl Piece {
    pub fn new(lo: f64, hi: f64, map: ShoutMap) -> Self {
        Piece { lo, hi, map }
    }
}

/// How a profile was constructed.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    PiecewiseDeterministic,
    OnePrice(f64),
    /// Zero-intelligence constrained: uniform on `[m, 1]` (sellers) or `[0, M]` (buyers).
    Zic,
    LinearBne(LinearBne),
}

/// The shout rule of one side of the market.
#[derive(Debug, Clone)]
pub struct StrategyProfile {
    side: Side,
    kind: ProfileKind,
    support: (f64, f64),
    pieces: Vec<Piece>,
}

const COVER_TOL: f64 = 1e-9;

impl StrategyProfile {
    pub fn zic(side: Side, mkt: &Market) -> Self {
        StrategyProfile { side, kind: ProfileKind::Zic, support: mkt.support(side), pieces: Vec::new() }
    }

    /// Deterministic profile from pieces that tile the side's type support.
    /// Each piece must be constant or strictly increasing.
    pub fn deterministic(side: Side, mkt: &Market, pieces: Vec<Piece>) -> Result<Self, StrategyError> {
        Self::with_kind(side, mkt, ProfileKind::PiecewiseDeterministic, pieces)
    }

    /// Deterministic profile through monotone `(type, shout)` knots.
    pub fn from_table(side: Side, mkt: &Market, knots: &[(f64, f64)]) -> Result<Self, StrategyError> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = knots.iter().copied().unzip();
        let t = CubicHermite::monotone(xs, ys).map_err(|e| StrategyError::InvalidProfile(e.to_string()))?;
        let piece = Piece::new(t.x_min(), t.x_max(), ShoutMap::Table(Arc::new(t)));
        Self::deterministic(side, mkt, vec![piece])
    }

    pub(crate) fn with_kind(side: Side, mkt: &Market, kind: ProfileKind, pieces: Vec<Piece>) -> Result<Self, StrategyError> {
        let support = mkt.support(side);
        let pieces: Vec<Piece> = pieces.into_iter().filter(|p| p.hi > p.lo).collect();
        let first = pieces.first().ok_or_else(|| StrategyError::InvalidProfile("no pieces".into()))?;
        if (first.lo - support.0).abs() > COVER_TOL || (pieces[pieces.len() - 1].hi - support.1).abs() > COVER_TOL {
            return Err(StrategyError::ProfileMismatch(format!(
                "pieces cover [{}, {}] but the {side} support is [{}, {}]",
                first.lo,
                pieces[pieces.len() - 1].hi,
                support.0,
                support.1
            )));
        }
        for w in pieces.windows(2) {
            if (w[0].hi - w[1].lo).abs() > COVER_TOL {
                return Err(StrategyError::ProfileMismatch(format!("gap between pieces at {}", w[0].hi)));
            }
        }
        for p in &pieces {
            check_piece(p)?;
        }
        Ok(StrategyProfile { side, kind, support, pieces })
    }

    pub fn side(&self) -> Side {
        self.side
    }
    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }
    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Shouts of the lowest and highest type (for ZI-C, the shout range).
    pub fn endpoints(&self) -> (f64, f64) {
        match (&self.kind, self.side) {
            (ProfileKind::Zic, Side::Seller) => (self.support.0, 1.0),
            (ProfileKind::Zic, Side::Buyer) => (0.0, self.support.1),
            _ => {
                let last = &self.pieces[self.pieces.len() - 1];
                (self.pieces[0].map.value(self.support.0), last.map.value(self.support.1))
            }
        }
    }

    /// Deterministic shout of type `v`; `None` for ZI-C.
    pub fn deterministic_shout(&self, v: f64) -> Option<f64> {
        if self.kind == ProfileKind::Zic {
            return None;
        }
        let piece = self.pieces.iter().find(|p| v <= p.hi).unwrap_or(&self.pieces[self.pieces.len() - 1]);
        Some(piece.map.value(v).clamp(0.0, 1.0))
    }

    /// Shout of a trader of type `v`.
    pub fn shout<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> f64 {
        match (&self.kind, self.side) {
            (ProfileKind::Zic, Side::Seller) => v + (1.0 - v) * rng.random::<f64>(),
            (ProfileKind::Zic, Side::Buyer) => v * rng.random::<f64>(),
            _ => self.deterministic_shout(v).expect("deterministic profile"),
        }
    }
}

fn check_piece(p: &Piece) -> Result<(), StrategyError> {
    const N: usize = 64;
    let mut prev = p.map.value(p.lo);
    if !(-COVER_TOL..=1.0 + COVER_TOL).contains(&prev) {
        return Err(StrategyError::InvalidProfile(format!("shout {prev} outside [0, 1]")));
    }
    let constant = p.map.is_constant();
    for i in 1..=N {
        let v = p.lo + (p.hi - p.lo) * i as f64 / N as f64;
        let s = p.map.value(v);
        if !(-COVER_TOL..=1.0 + COVER_TOL).contains(&s) {
            return Err(StrategyError::InvalidProfile(format!("shout {s} outside [0, 1]")));
        }
        if !constant && s <= prev - COVER_TOL * 1e-3 {
            return Err(StrategyError::InvalidProfile(format!("shout map decreasing near type {v}")));
        }
        prev = s;
    }
    Ok(())
}

/// Both sides of a one-price profile plus the intramarginal fractions.
#[derive(Debug, Clone)]
pub struct OnePrice {
    pub price: f64,
    pub sellers: StrategyProfile,
    pub buyers: StrategyProfile,
    /// Fraction of sellers shouting `p`, `S⁻¹(p)`.
    pub q_s: f64,
    /// Fraction of buyers shouting `p`, `D⁻¹(p)`.
    pub q_d: f64,
}

/// One-price profile at `p`, with truthful extramarginal shouts.
pub fn one_price_profile(mkt: &Market, p: f64) -> Result<OnePrice, StrategyError> {
    one_price_profile_with(mkt, p, ShoutMap::Identity, ShoutMap::Identity)
}

/// One-price profile with explicit extramarginal maps (`ā(m) ≥ m` for
/// sellers above `p`, `b̄(M) ≤ M` for buyers below `p`).
pub fn one_price_profile_with(
    mkt: &Market,
    p: f64,
    ask_extra: ShoutMap,
    bid_extra: ShoutMap,
) -> Result<OnePrice, StrategyError> {
    let lo = mkt.s_minus().max(mkt.d_minus());
    let hi = mkt.s_plus().min(mkt.d_plus());
    if !(p > lo && p < hi) {
        return Err(StrategyError::NoIntramarginalMass { p });
    }
    let (s_lo, s_hi) = mkt.support(Side::Seller);
    let (d_lo, d_hi) = mkt.support(Side::Buyer);
    for i in 0..=32 {
        let m = p + (s_hi - p) * i as f64 / 32.0;
        let big_m = d_lo + (p - d_lo) * i as f64 / 32.0;
        if ask_extra.value(m) < m - COVER_TOL || bid_extra.value(big_m) > big_m + COVER_TOL {
            return Err(StrategyError::InvalidProfile("extramarginal shouts must not undercut the type".into()));
        }
    }
    let kind = ProfileKind::OnePrice(p);
    let sellers = StrategyProfile::with_kind(
        Side::Seller,
        mkt,
        kind.clone(),
        vec![Piece::new(s_lo, p, ShoutMap::Constant(p)), Piece::new(p, s_hi, ask_extra)],
    )?;
    let buyers = StrategyProfile::with_kind(
        Side::Buyer,
        mkt,
        kind,
        vec![Piece::new(d_lo, p, bid_extra), Piece::new(p, d_hi, ShoutMap::Constant(p))],
    )?;
    Ok(OnePrice { price: p, sellers, buyers, q_s: mkt.supply_inverse(p), q_d: mkt.demand_inverse(p) })
}

type Func = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A shout CDF: an absolutely continuous part plus finitely many atoms.
#[derive(Clone)]
pub struct ShoutCdf {
    smooth: Func,
    density: Func,
    atoms: Vec<(f64, f64)>,
    kinks: Vec<f64>,
}

impl fmt::Debug for ShoutCdf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShoutCdf").field("atoms", &self.atoms).field("kinks", &self.kinks).finish_non_exhaustive()
    }
}

impl ShoutCdf {
    /// Builds a CDF from its continuous part (value and derivative), a list
    /// of `(location, mass)` atoms and the points where the density jumps.
    pub fn new<F, D>(smooth: F, density: D, atoms: Vec<(f64, f64)>, kinks: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().filter(|a| a.1 > 0.0).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut kinks: Vec<f64> = kinks.into_iter().filter(|k| k.is_finite()).collect();
        kinks.extend(atoms.iter().map(|a| a.0));
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        ShoutCdf { smooth: Arc::new(smooth), density: Arc::new(density), atoms, kinks }
    }

    /// `Pr(shout ≤ x)`.
    pub fn le(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum();
        ((self.smooth)(x) + atoms).clamp(0.0, 1.0)
    }

    /// `Pr(shout < x)`.
    pub fn lt(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 < x).map(|a| a.1).sum();
        ((self.smooth)(x) + atoms).clamp(0.0, 1.0)
    }

    /// Density of the continuous part.
    pub fn density(&self, x: f64) -> f64 {
        (self.density)(x)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Atom mass at exactly `x` (zero if none).
    pub fn atom_at(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 == x).map(|a| a.1).sum()
    }

    /// Points where the CDF is not smooth.
    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }
}

/// How a [`ShoutDistributions`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    ClosedForm,
    Quadrature,
    TabulatedMonotone,
}

/// The ask and bid CDFs induced by a market and a pair of profiles.
#[derive(Debug, Clone)]
pub struct ShoutDistributions {
    asks: ShoutCdf,
    bids: ShoutCdf,
    representation: Representation,
}

impl ShoutDistributions {
    pub fn new(asks: ShoutCdf, bids: ShoutCdf, representation: Representation) -> Self {
        ShoutDistributions { asks, bids, representation }
    }

    pub fn asks(&self) -> &ShoutCdf {
        &self.asks
    }
    pub fn bids(&self) -> &ShoutCdf {
        &self.bids
    }
    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// `A(x) = Pr(ask ≤ x)`.
    pub fn a(&self, x: f64) -> f64 {
        self.asks.le(x)
    }
    /// `𝓐(x) = Pr(ask < x)`.
    pub fn cal_a(&self, x: f64) -> f64 {
        self.asks.lt(x)
    }
    /// `B(x) = Pr(bid ≤ x)`.
    pub fn b(&self, x: f64) -> f64 {
        self.bids.le(x)
    }
    /// `𝓑(x) = Pr(bid < x)`.
    pub fn cal_b(&self, x: f64) -> f64 {
        self.bids.lt(x)
    }
    /// `B_c(x) = 1 − B(x)`.
    pub fn b_c(&self, x: f64) -> f64 {
        1.0 - self.b(x)
    }

    /// True if either side has atoms.
    pub fn has_atoms(&self) -> bool {
        !self.asks.atoms.is_empty() || !self.bids.atoms.is_empty()
    }

    /// All kink and atom locations of both CDFs, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.asks.kinks.iter().chain(self.bids.kinks.iter()).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// Shout distributions induced by `sellers` and `buyers` on `mkt`.
pub fn induced_distributions(
    mkt: &Market,
    sellers: &StrategyProfile,
    buyers: &StrategyProfile,
) -> Result<ShoutDistributions, StrategyError> {
    if sellers.side != Side::Seller || buyers.side != Side::Buyer {
        return Err(StrategyError::ProfileMismatch("expected a seller profile and a buyer profile".into()));
    }
    for prof in [sellers, buyers] {
        let (lo, hi) = mkt.support(prof.side);
        if (prof.support.0 - lo).abs() > COVER_TOL || (prof.support.1 - hi).abs() > COVER_TOL {
            return Err(StrategyError::ProfileMismatch(format!("{} profile built for another market", prof.side)));
        }
    }
    let asks = side_cdf(mkt, sellers);
    let bids = side_cdf(mkt, buyers);
    let zic = sellers.kind == ProfileKind::Zic || buyers.kind == ProfileKind::Zic;
    let tabulated = [sellers, buyers].iter().any(|p| p.pieces.iter().any(|q| q.map.is_tabulated()));
    let representation = if zic && mkt.kind() == MarketKind::General {
        Representation::Quadrature
    } else if tabulated {
        Representation::TabulatedMonotone
    } else {
        Representation::ClosedForm
    };
    Ok(ShoutDistributions { asks, bids, representation })
}

fn side_cdf(mkt: &Market, prof: &StrategyProfile) -> ShoutCdf {
    if prof.kind == ProfileKind::Zic {
        return match (prof.side, mkt.kind()) {
            (Side::Seller, MarketKind::Linear { alpha, .. }) => zic_ask_linear(mkt.s_minus(), alpha),
            (Side::Buyer, MarketKind::Linear { beta, .. }) => zic_bid_linear(mkt.d_plus(), beta),
            (side, MarketKind::General) => zic_general(mkt, side),
        };
    }
    let side = prof.side;
    let mut atoms = Vec::new();
    let mut kinks = Vec::new();
    let mut smooth_pieces = Vec::new();
    for p in &prof.pieces {
        let mass = mkt.type_cdf(side, p.hi) - mkt.type_cdf(side, p.lo);
        if p.map.is_constant() {
            atoms.push((p.map.value(p.lo), mass));
        } else {
            let (x_lo, x_hi) = (p.map.value(p.lo), p.map.value(p.hi));
            kinks.push(x_lo);
            kinks.push(x_hi);
            smooth_pieces.push((p.clone(), x_lo, x_hi, mkt.type_cdf(side, p.lo), mass));
        }
    }
    let pieces = Arc::new(smooth_pieces);
    let (m1, m2) = (mkt.clone(), mkt.clone());
    let p1 = Arc::clone(&pieces);
    ShoutCdf::new(
        move |x| {
            p1.iter()
                .map(|(p, x_lo, x_hi, f_lo, mass)| {
                    if x < *x_lo {
                        0.0
                    } else if x >= *x_hi {
                        *mass
                    } else {
                        let v = p.map.inverse(x).clamp(p.lo, p.hi);
                        (m1.type_cdf(side, v) - f_lo).clamp(0.0, *mass)
                    }
                })
                .sum()
        },
        move |x| {
            pieces
                .iter()
                .filter(|(_, x_lo, x_hi, _, _)| x >= *x_lo && x < *x_hi)
                .map(|(p, ..)| {
                    let v = p.map.inverse(x).clamp(p.lo, p.hi);
                    m2.type_density(side, v) / p.map.slope(v)
                })
                .sum()
        },
        atoms,
        kinks,
    )
}

/// ZI-C asks over linear supply, in closed form.
fn zic_ask_linear(s_minus: f64, alpha: f64) -> ShoutCdf {
    let s_plus = s_minus + alpha;
    let value = move |x: f64| {
        if x <= s_minus {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let u = x.min(s_plus);
        ((u - s_minus) + (1.0 - x) * ((1.0 - u).ln() - (1.0 - s_minus).ln())) / alpha
    };
    let density = move |x: f64| {
        if x <= s_minus || x >= 1.0 {
            return 0.0;
        }
        let u = x.min(s_plus);
        ((1.0 - s_minus).ln() - (1.0 - u).ln()) / alpha
    };
    ShoutCdf::new(value, density, Vec::new(), vec![s_minus, s_plus, 1.0])
}

/// ZI-C bids under linear demand, in closed form.
fn zic_bid_linear(d_plus: f64, beta: f64) -> ShoutCdf {
    let d_minus = d_plus - beta;
    let value = move |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= d_plus {
            return 1.0;
        }
        let v = x.max(d_minus);
        ((v - d_minus) + x * (d_plus.ln() - v.ln())) / beta
    };
    let density = move |x: f64| {
        if x <= 0.0 || x >= d_plus {
            return 0.0;
        }
        (d_plus.ln() - x.max(d_minus).ln()) / beta
    };
    ShoutCdf::new(value, density, Vec::new(), vec![0.0, d_minus, d_plus])
}

/// ZI-C CDFs for a general market, tabulated once by quadrature.
fn zic_general(mkt: &Market, side: Side) -> ShoutCdf {
    const KNOTS: usize = 1025;
    let (lo, hi) = match side {
        Side::Seller => (mkt.s_minus(), 1.0),
        Side::Buyer => (0.0, mkt.d_plus()),
    };
    let cdf_at = |x: f64| -> f64 {
        let r = match side {
            Side::Seller => integrate_with_breaks(
                |q| {
                    let s = mkt.supply(q);
                    if s >= 1.0 {
                        0.0
                    } else {
                        ((x - s) / (1.0 - s)).clamp(0.0, 1.0)
                    }
                },
                0.0,
                1.0,
                &[mkt.supply_inverse(x).clamp(0.0, 1.0)],
                1e-12,
            ),
            Side::Buyer => integrate_with_breaks(
                |q| (x / mkt.demand(q)).min(1.0),
                0.0,
                1.0,
                &[mkt.demand_inverse(x).clamp(0.0, 1.0)],
                1e-12,
            ),
        };
        r.map(|q| q.value.clamp(0.0, 1.0)).unwrap_or(f64::NAN)
    };
    // Cluster knots near the ends where the density is logarithmically singular.
    let xs: Vec<f64> = (0..KNOTS)
        .map(|i| {
            let t = i as f64 / (KNOTS - 1) as f64;
            lo + (hi - lo) * 0.5 * (1.0 - (std::f64::consts::PI * t).cos())
        })
        .collect();
    let mut ys: Vec<f64> = xs.iter().map(|&x| cdf_at(x)).collect();
    ys[0] = 0.0;
    ys[KNOTS - 1] = 1.0;
    for i in 1..KNOTS {
        ys[i] = ys[i].max(ys[i - 1]);
    }
    let table = Arc::new(CubicHermite::monotone(xs, ys).expect("monotone ZI-C table"));
    let t2 = Arc::clone(&table);
    ShoutCdf::new(
        move |x| if x <= lo { 0.0 } else if x >= hi { 1.0 } else { table.value(x) },
        move |x| if x <= lo || x >= hi { 0.0 } else { t2.derivative(x) },
        Vec::new(),
        vec![lo, hi],
    )
}
