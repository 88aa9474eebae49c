//! Numeric equilibrium by two-sided separatrix shooting.
//!
//! The equilibrium curve `x ↦ (A(x), B_c(x))` lies on the consistency
//! surface `f = B_c(D(B_c) − x) − A(x − S(A)) = 0` and is tangent to the
//! first-order-condition 1-form. Its tangent is therefore `v₁ × ∇f`. The
//! curve runs from the plane `A = 0` (at `x = a₋`) through a saddle to the
//! plane `B_c = 0` (at `x = b₊`).
//!
//! Forward shots start on `A = 0` and use the seller form of the 1-form,
//! which is regular there. Backward shots start on `B_c = 0` and use the
//! buyer form. Each free boundary is bisected: a shot whose `A` turns
//! decreasing started too high, one whose `B_c` turns increasing started
//! too low. The two converged legs are joined across the saddle.

use crate::market::Market;
use crate::numeric::interp::CubicHermite;
use crate::numeric::ode::{dopri_step, next_step_size};

use super::EquilibriumError;

/// Tuning knobs for [`solve_bne_numeric`](super::solve_bne_numeric).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericOptions {
    /// Points used for residual diagnostics.
    pub grid_size: usize,
    /// Bisection stops once the bracket on a boundary shout is this narrow
    /// (0 runs to machine precision).
    pub shoot_tol: f64,
    pub max_bisections: usize,
    /// Absolute and relative tolerance of the Runge–Kutta stepper.
    pub ode_tol: f64,
    pub max_step: f64,
    /// Two bracketing shots are considered to agree while their states
    /// differ by less than this.
    pub agreement_tol: f64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        NumericOptions {
            grid_size: 1001,
            shoot_tol: 0.0,
            max_bisections: 200,
            ode_tol: 1e-12,
            max_step: 2e-3,
            agreement_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leg {
    /// From `A = 0` with increasing `x`, seller form.
    Forward,
    /// From `B_c = 0` with decreasing `x`, buyer form.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    TooHigh,
    TooLow,
    /// Reached the far plane.
    Hit,
    Stalled,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    a: f64,
    bc: f64,
    da: f64,
    dbc: f64,
}

struct Shot {
    nodes: Vec<Node>,
    outcome: Outcome,
}

impl Shot {
    fn hermite(&self) -> Option<(CubicHermite, CubicHermite)> {
        let mut nodes = self.nodes.clone();
        nodes.sort_by(|p, q| p.x.total_cmp(&q.x));
        let xs: Vec<f64> = nodes.iter().map(|n| n.x).collect();
        let a = CubicHermite::with_slopes(xs.clone(), nodes.iter().map(|n| n.a).collect(), nodes.iter().map(|n| n.da).collect());
        let b = CubicHermite::with_slopes(xs, nodes.iter().map(|n| n.bc).collect(), nodes.iter().map(|n| n.dbc).collect());
        a.ok().zip(b.ok())
    }
}

struct Field<'a> {
    mkt: &'a Market,
}

impl Field<'_> {
    /// Gradient of the consistency function with respect to `(A, B_c, x)`.
    fn grad(&self, a: f64, bc: f64, x: f64) -> [f64; 3] {
        let m = self.mkt;
        [
            -(x - m.supply(a)) + a * m.supply_slope(a),
            m.demand(bc) - x + bc * m.demand_slope(bc),
            -bc - a,
        ]
    }

    fn consistency(&self, a: f64, bc: f64, x: f64) -> f64 {
        bc * (self.mkt.demand(bc) - x) - a * (x - self.mkt.supply(a))
    }

    fn tangent(&self, leg: Leg, a: f64, bc: f64, x: f64) -> [f64; 3] {
        let v1 = match leg {
            Leg::Forward => {
                let e = self.mkt.supply(a) - x;
                [2.0 * e * bc, -2.0 * e * a, bc * (bc + a)]
            }
            Leg::Backward => {
                let e = self.mkt.demand(bc) - x;
                [2.0 * e * bc, -2.0 * e * a, -a * (a + bc)]
            }
        };
        let v2 = self.grad(a, bc, x);
        [
            v1[1] * v2[2] - v1[2] * v2[1],
            v1[2] * v2[0] - v1[0] * v2[2],
            v1[0] * v2[1] - v1[1] * v2[0],
        ]
    }

    /// `(dA/dx, dB_c/dx)`, or `None` where the curve is vertical in `x`.
    fn slope(&self, leg: Leg, x: f64, y: &[f64; 2]) -> Option<[f64; 2]> {
        let f = self.tangent(leg, y[0], y[1], x);
        if f[2] == 0.0 {
            return None;
        }
        let d = [f[0] / f[2], f[1] / f[2]];
        (d[0].is_finite() && d[1].is_finite()).then_some(d)
    }

    /// One Newton step back onto the surface at fixed `x`.
    fn project(&self, x: f64, y: [f64; 2]) -> [f64; 2] {
        let r = self.consistency(y[0], y[1], x);
        let g = self.grad(y[0], y[1], x);
        let n2 = g[0] * g[0] + g[1] * g[1];
        if n2 == 0.0 {
            return y;
        }
        [y[0] - r * g[0] / n2, y[1] - r * g[1] / n2]
    }
}

const PROJECTION_TOL: f64 = 1e-9;
const MAX_STEPS: usize = 200_000;

fn shoot(mkt: &Market, leg: Leg, start: f64, opts: &NumericOptions) -> Result<Shot, EquilibriumError> {
    let field = Field { mkt };
    let (mut y, dir) = match leg {
        Leg::Forward => ([0.0, mkt.demand_inverse(start)], 1.0),
        Leg::Backward => ([mkt.supply_inverse(start), 0.0], -1.0),
    };
    let mut x = start;
    let orientation = field.tangent(leg, y[0], y[1], x)[2].signum();
    let rhs = |x: f64, y: &[f64; 2]| field.slope(leg, x, y);
    let d0 = rhs(x, &y).ok_or_else(|| EquilibriumError::NoConvergence("vertical tangent at the boundary".into()))?;
    let mut nodes = vec![Node { x, a: y[0], bc: y[1], da: d0[0], dbc: d0[1] }];
    let mut h = 0.1 * opts.max_step;
    for _ in 0..MAX_STEPS {
        let step = dopri_step(&rhs, x, &y, dir * h, opts.ode_tol, opts.ode_tol);
        let Some(step) = step else {
            h *= 0.25;
            if h < 1e-14 {
                return Ok(Shot { nodes, outcome: Outcome::Stalled });
            }
            continue;
        };
        if step.error > 1.0 {
            h = next_step_size(h, step.error);
            if h < 1e-14 {
                return Ok(Shot { nodes, outcome: Outcome::Stalled });
            }
            continue;
        }
        x += dir * h;
        y = field.project(x, step.y);
        let residual = field.consistency(y[0], y[1], x);
        if residual.abs() > PROJECTION_TOL {
            return Err(EquilibriumError::SurfaceProjectionFailure { x, residual });
        }
        h = next_step_size(h, step.error).min(opts.max_step);
        let Some(d) = rhs(x, &y) else {
            return Ok(Shot { nodes, outcome: Outcome::Stalled });
        };
        if field.tangent(leg, y[0], y[1], x)[2].signum() != orientation {
            return Ok(Shot { nodes, outcome: Outcome::Stalled });
        }
        let outcome = if d[0] < 0.0 {
            Some(Outcome::TooHigh)
        } else if d[1] > 0.0 {
            Some(Outcome::TooLow)
        } else if (leg == Leg::Forward && y[1] <= 0.0) || (leg == Leg::Backward && y[0] <= 0.0) {
            Some(Outcome::Hit)
        } else {
            None
        };
        nodes.push(Node { x, a: y[0], bc: y[1], da: d[0], dbc: d[1] });
        if let Some(outcome) = outcome {
            return Ok(Shot { nodes, outcome });
        }
        if !(-1.0..=2.0).contains(&x) {
            return Ok(Shot { nodes, outcome: Outcome::Stalled });
        }
    }
    Ok(Shot { nodes, outcome: Outcome::Stalled })
}

/// A converged leg: the boundary shout and the trusted part of the curve.
struct LegSolution {
    boundary: f64,
    nodes: Vec<Node>,
    /// The leg is trusted up to (forward) or down to (backward) this `x`.
    reach: f64,
}

fn solve_leg(mkt: &Market, leg: Leg, lo: f64, hi: f64, opts: &NumericOptions) -> Result<LegSolution, EquilibriumError> {
    let name = match leg {
        Leg::Forward => "a_minus",
        Leg::Backward => "b_plus",
    };
    let (mut lo, mut hi, mut lo_shot, mut hi_shot) = bracket(mkt, leg, lo, hi, opts)
        .map_err(|msg| EquilibriumError::NoConvergence(format!("{name}: {msg}")))?;
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= opts.shoot_tol {
            break;
        }
        iterations += 1;
        if iterations > opts.max_bisections {
            return Err(EquilibriumError::NoConvergence(format!("{name}: {} bisections exceeded", opts.max_bisections)));
        }
        let shot = shoot(mkt, leg, mid, opts)?;
        match shot.outcome {
            Outcome::TooLow => {
                lo = mid;
                lo_shot = shot;
            }
            Outcome::TooHigh => {
                hi = mid;
                hi_shot = shot;
            }
            // Reaching the far plane, or running into the saddle without
            // diverging either way, only happens on the separatrix itself.
            Outcome::Hit | Outcome::Stalled => {
                log::debug!("{name} = {mid:.17}: shot ended {:?} after {iterations} bisections", shot.outcome);
                let reach = shot.nodes[shot.nodes.len() - 1].x;
                return Ok(LegSolution { boundary: mid, nodes: shot.nodes, reach });
            }
        }
    }
    log::debug!("{name} bracket [{lo:.17}, {hi:.17}] after {iterations} bisections");
    let reach = agreement_reach(&lo_shot, &hi_shot, leg, opts.agreement_tol);
    Ok(LegSolution { boundary: 0.5 * (lo + hi), nodes: lo_shot.nodes, reach })
}

/// Scans `[lo, hi]` for adjacent parameters classified low and high.
/// Shots very close to the ends may stall, so the scan is denser there.
fn bracket(mkt: &Market, leg: Leg, lo: f64, hi: f64, opts: &NumericOptions) -> Result<(f64, f64, Shot, Shot), String> {
    const FRACTIONS: [f64; 17] =
        [0.0, 1e-4, 1e-3, 0.01, 0.03, 0.06, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.97, 1.0];
    let mut prev: Option<(f64, Shot)> = None;
    for f in FRACTIONS {
        let p = lo + (hi - lo) * f;
        let shot = shoot(mkt, leg, p, opts).map_err(|e| e.to_string())?;
        match (&prev, shot.outcome) {
            (Some((_, s)), Outcome::TooHigh) if s.outcome == Outcome::TooLow => {
                let (p0, s0) = prev.take().expect("checked above");
                return Ok((p0, p, s0, shot));
            }
            _ => prev = Some((p, shot)),
        }
    }
    Err(format!("no low/high transition found in [{lo}, {hi}]"))
}

/// How far the two bracketing shots agree to within `tol`.
fn agreement_reach(lo: &Shot, hi: &Shot, leg: Leg, tol: f64) -> f64 {
    let end = |s: &Shot| s.nodes[s.nodes.len() - 1].x;
    let limit = match leg {
        Leg::Forward => end(lo).min(end(hi)),
        Leg::Backward => end(lo).max(end(hi)),
    };
    let Some((ha, hb)) = hi.hermite() else {
        return lo.nodes[0].x;
    };
    let mut reach = lo.nodes[0].x;
    for n in &lo.nodes {
        let inside = match leg {
            Leg::Forward => n.x <= limit,
            Leg::Backward => n.x >= limit,
        };
        if !inside || (ha.value(n.x) - n.a).abs() > tol || (hb.value(n.x) - n.bc).abs() > tol {
            break;
        }
        reach = n.x;
    }
    reach
}

/// Raw solver output: boundaries and Hermite tables for `A` and `B_c`.
pub(crate) struct ShootingResult {
    pub a_minus: f64,
    pub b_plus: f64,
    pub ask_cdf: CubicHermite,
    pub bid_survival: CubicHermite,
    /// Width of the interval bridged by a single cubic segment (0 if the
    /// legs overlapped).
    pub bridge_width: f64,
}

pub(crate) fn solve(mkt: &Market, opts: &NumericOptions) -> Result<ShootingResult, EquilibriumError> {
    let (p_star, _) = mkt.competitive_equilibrium();
    let eps_lo = 1e-6 * (p_star - mkt.s_minus());
    let eps_hi = 1e-6 * (mkt.d_plus() - p_star);
    let fwd = solve_leg(mkt, Leg::Forward, mkt.s_minus() + eps_lo, p_star, opts)?;
    let bwd = solve_leg(mkt, Leg::Backward, p_star, mkt.d_plus() - eps_hi, opts)?;
    let (cut_lo, cut_hi, bridge_width) = if bwd.reach <= fwd.reach {
        let mid = 0.5 * (bwd.reach + fwd.reach);
        (mid, mid, 0.0)
    } else {
        (fwd.reach, bwd.reach, bwd.reach - fwd.reach)
    };
    log::debug!(
        "legs: a_minus = {:.15}, b_plus = {:.15}, forward reach {:.6}, backward reach {:.6}",
        fwd.boundary,
        bwd.boundary,
        fwd.reach,
        bwd.reach
    );
    let mut nodes: Vec<Node> = fwd.nodes.iter().filter(|n| n.x <= cut_lo).copied().collect();
    nodes.extend(bwd.nodes.iter().filter(|n| n.x >= cut_hi && n.x > cut_lo));
    nodes.sort_by(|p, q| p.x.total_cmp(&q.x));
    nodes.dedup_by(|p, q| p.x <= q.x);
    if nodes.len() < 4 {
        return Err(EquilibriumError::NoConvergence("too few nodes on the equilibrium curve".into()));
    }
    let xs: Vec<f64> = nodes.iter().map(|n| n.x).collect();
    let build = |vals: Vec<f64>, ds: Vec<f64>| {
        CubicHermite::with_slopes(xs.clone(), vals, ds).map_err(|e| EquilibriumError::NoConvergence(e.to_string()))
    };
    let ask_cdf = build(nodes.iter().map(|n| n.a).collect(), nodes.iter().map(|n| n.da).collect())?;
    let bid_survival = build(nodes.iter().map(|n| n.bc).collect(), nodes.iter().map(|n| n.dbc).collect())?;
    Ok(ShootingResult { a_minus: fwd.boundary, b_plus: bwd.boundary, ask_cdf, bid_survival, bridge_width })
}
