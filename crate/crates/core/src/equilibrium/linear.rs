//! Closed-form equilibrium of a linear market.

use crate::market::Market;

/// Coefficients of the explicit equilibrium for `S(x) = s₋ + αx`,
/// `D(x) = d₊ − βx`.
///
/// All formulas are evaluated for any admissible slopes; whether the
/// result is an actual equilibrium is reported by [`LinearBne::exists`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBne {
    pub s_minus: f64,
    pub alpha: f64,
    pub d_plus: f64,
    pub beta: f64,
    /// `√β / (√α + √β)`
    pub gamma: f64,
    pub a_minus: f64,
    pub b_plus: f64,
}

/// Which existence condition a linear market violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExistenceViolation {
    /// The highest bid exceeds the highest seller type.
    BPlusAboveSPlus,
    /// The lowest ask falls below the lowest buyer type.
    AMinusBelowDMinus,
    Both,
}

impl std::fmt::Display for ExistenceViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExistenceViolation::BPlusAboveSPlus => "b_plus > s_plus",
            ExistenceViolation::AMinusBelowDMinus => "a_minus < d_minus",
            ExistenceViolation::Both => "b_plus > s_plus and a_minus < d_minus",
        })
    }
}

const EXIST_TOL: f64 = 1e-13;

impl LinearBne {
    pub fn new(s_minus: f64, alpha: f64, d_plus: f64, beta: f64) -> Self {
        let (ra, rb) = (alpha.sqrt(), beta.sqrt());
        let gamma = rb / (ra + rb);
        let span = d_plus - s_minus;
        LinearBne {
            s_minus,
            alpha,
            d_plus,
            beta,
            gamma,
            a_minus: s_minus + (1.0 - gamma).powi(2) * span,
            b_plus: d_plus - gamma * gamma * span,
        }
    }

    /// `None` for general markets.
    pub fn for_market(mkt: &Market) -> Option<Self> {
        mkt.linear_slopes().map(|(a, b)| Self::new(mkt.s_minus(), a, mkt.d_plus(), b))
    }

    pub fn span(&self) -> f64 {
        self.d_plus - self.s_minus
    }
    pub fn s_plus(&self) -> f64 {
        self.s_minus + self.alpha
    }
    pub fn d_minus(&self) -> f64 {
        self.d_plus - self.beta
    }

    pub fn violation(&self) -> Option<ExistenceViolation> {
        let top = self.b_plus > self.s_plus() + EXIST_TOL;
        let bottom = self.a_minus < self.d_minus() - EXIST_TOL;
        match (top, bottom) {
            (false, false) => None,
            (true, false) => Some(ExistenceViolation::BPlusAboveSPlus),
            (false, true) => Some(ExistenceViolation::AMinusBelowDMinus),
            (true, true) => Some(ExistenceViolation::Both),
        }
    }

    pub fn exists(&self) -> bool {
        self.violation().is_none()
    }

    /// `λ = √(β/α)`.
    pub fn lambda(&self) -> f64 {
        (self.beta / self.alpha).sqrt()
    }

    /// Abscissa of the saddle, `γ s₋ + (1 − γ) d₊`.
    pub fn x_bar(&self) -> f64 {
        self.gamma * self.s_minus + (1.0 - self.gamma) * self.d_plus
    }

    fn common(&self, x: f64) -> (f64, f64, f64) {
        let k = 2.0 * self.alpha * self.beta * self.span();
        let root = 2.0 * (self.alpha * self.beta).sqrt();
        let l2 = self.span() + (self.alpha * (self.d_plus - x) + self.beta * (x - self.s_minus)) / root;
        let l2_slope = (self.beta - self.alpha) / root;
        (k, l2, l2_slope)
    }

    /// Ask CDF `A(x)` on the intramarginal range (quadratic in `x`).
    pub fn ask_cdf(&self, x: f64) -> f64 {
        let (k, l2, _) = self.common(x);
        let g = self.gamma;
        let l1 = -g * self.alpha * (self.d_plus - x) + (2.0 - g) * self.beta * (x - self.s_minus);
        l1 * l2 / k
    }

    pub fn ask_cdf_slope(&self, x: f64) -> f64 {
        let (k, l2, l2s) = self.common(x);
        let g = self.gamma;
        let l1 = -g * self.alpha * (self.d_plus - x) + (2.0 - g) * self.beta * (x - self.s_minus);
        let l1s = g * self.alpha + (2.0 - g) * self.beta;
        (l1s * l2 + l1 * l2s) / k
    }

    /// `B_c(x) = 1 − B(x)` on the intramarginal range.
    pub fn bid_survival(&self, x: f64) -> f64 {
        let (k, l2, _) = self.common(x);
        let g = self.gamma;
        let l3 = (1.0 + g) * self.alpha * (self.d_plus - x) - (1.0 - g) * self.beta * (x - self.s_minus);
        l3 * l2 / k
    }

    pub fn bid_survival_slope(&self, x: f64) -> f64 {
        let (k, l2, l2s) = self.common(x);
        let g = self.gamma;
        let l3 = (1.0 + g) * self.alpha * (self.d_plus - x) - (1.0 - g) * self.beta * (x - self.s_minus);
        let l3s = -(1.0 + g) * self.alpha - (1.0 - g) * self.beta;
        (l3s * l2 + l3 * l2s) / k
    }

    /// Transaction price CDF `T(x) = A/(A + B_c)`.
    pub fn transaction_cdf(&self, x: f64) -> f64 {
        let g = self.gamma;
        let (u, w) = (self.alpha * (self.d_plus - x), self.beta * (x - self.s_minus));
        (-g * u + (2.0 - g) * w) / (u + w)
    }

    /// Equilibrium ask of a seller of type `m ∈ [s₋, b₊]`.
    ///
    /// This is the root of the quadratic `A(a) = S⁻¹(m)`, written so that
    /// the `α → β` limit is evaluated without cancellation; at `α = β` it
    /// reduces to `2m/3 + d₊/4 + s₋/12`.
    pub fn ask(&self, m: f64) -> f64 {
        let (ra, rb) = (self.alpha.sqrt(), self.beta.sqrt());
        let t = (m - self.s_minus) / self.span();
        let w = 2.0 * ra + rb;
        let k = 4.0 * (self.alpha - self.beta) / (w * w * (1.0 - self.gamma));
        let s = (1.0 - k * t).max(0.0).sqrt();
        let rel = (1.0 - self.gamma).powi(2) + 4.0 * (self.beta + 2.0 * ra * rb) * t / (w * w * (1.0 + s));
        self.s_minus + self.span() * rel
    }

    /// Equilibrium bid of a buyer of type `M ∈ [a₋, d₊]`.
    pub fn bid(&self, big_m: f64) -> f64 {
        let (ra, rb) = (self.alpha.sqrt(), self.beta.sqrt());
        let u = (self.d_plus - big_m) / self.span();
        let w = ra + 2.0 * rb;
        let k = 4.0 * (self.alpha - self.beta) / (w * w * self.gamma);
        let s = (1.0 + k * u).max(0.0).sqrt();
        let rel = self.gamma * self.gamma + 4.0 * (self.alpha + 2.0 * ra * rb) * u / (w * w * (1.0 + s));
        self.d_plus - self.span() * rel
    }

    /// `a′(m) = 1 / (α A′(a(m)))`.
    pub fn ask_slope(&self, m: f64) -> f64 {
        1.0 / (self.alpha * self.ask_cdf_slope(self.ask(m)))
    }

    /// `b′(M) = −1 / (β B_c′(b(M)))`.
    pub fn bid_slope(&self, big_m: f64) -> f64 {
        -1.0 / (self.beta * self.bid_survival_slope(self.bid(big_m)))
    }

    /// Inverse ask map `a⁻¹(x) = S(A(x))`.
    pub fn ask_inverse(&self, x: f64) -> f64 {
        self.s_minus + self.alpha * self.ask_cdf(x)
    }

    /// Inverse bid map `b⁻¹(x) = D(B_c(x))`.
    pub fn bid_inverse(&self, x: f64) -> f64 {
        self.d_plus - self.beta * self.bid_survival(x)
    }

    /// First integral `V(x, T) = α(d₊ − x)T² − β(s₋ − x)(1 − T)²`,
    /// constant along the equilibrium flow.
    pub fn potential(&self, x: f64, t: f64) -> f64 {
        self.alpha * (self.d_plus - x) * t * t - self.beta * (self.s_minus - x) * (1.0 - t) * (1.0 - t)
    }

    /// Level of `V` through the saddle, `αβ(d₊ − s₋)/(√α + √β)²`.
    pub fn saddle_level(&self) -> f64 {
        let s = self.alpha.sqrt() + self.beta.sqrt();
        self.alpha * self.beta * self.span() / (s * s)
    }
}
