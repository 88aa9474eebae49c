//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use cda_core::numeric::integrate;
use cda_core::*;
use rand::{Rng, SeedableRng};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn uniform() -> Market {
    make_linear_market(0.0, 1.0, 1.0, 1.0).unwrap()
}

fn asymmetric() -> Market {
    make_linear_market(0.3, 0.6, 1.0, 1.0).unwrap()
}

fn flat_demand() -> Market {
    make_linear_market(0.1, 0.7, 0.55, 0.05).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn uniform_closed_form() -> Result<String, String> {
    let sol = solve_linear_bne(&uniform()).map_err(err)?;
    ensure(sol.exists, "no equilibrium")?;
    let mut worst: f64 = 0.0;
    for i in 0..=1000 {
        let v = i as f64 / 1000.0;
        if v <= 0.75 {
            worst = worst.max((sol.ask(v).unwrap() - (2.0 * v / 3.0 + 0.25)).abs());
        }
        if v >= 0.25 {
            worst = worst.max((sol.bid(v).unwrap() - (2.0 * v / 3.0 + 1.0 / 12.0)).abs());
        }
    }
    worst = worst.max((sol.a_minus - 0.25).abs()).max((sol.b_plus - 0.75).abs());
    ensure(worst < 1e-12, format!("max error {worst:e}"))?;
    Ok(format!("max error {worst:.1e}"))
}

fn asymmetric_boundaries() -> Result<String, String> {
    let sol = solve_linear_bne(&asymmetric()).map_err(err)?;
    let (da, db) = ((sol.a_minus - 0.43).abs(), (sol.b_plus - 0.78).abs());
    ensure(da < 0.005 && db < 0.005, format!("a_minus {} b_plus {}", sol.a_minus, sol.b_plus))?;
    Ok(format!("a_minus {:.6} b_plus {:.6}", sol.a_minus, sol.b_plus))
}

fn zic_reproduction() -> Result<String, String> {
    let mkt = flat_demand();
    let (a, b) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
    let ctx = PayoffContext::new(mkt.clone(), induced_distributions(&mkt, &a, &b).map_err(err)?);
    let cdf = |t: f64| ctx.price_cdf(t).unwrap_or(f64::NAN);
    let opts = MonteCarloOptions { runs: 50_000, seed: 7, ..Default::default() };
    let s = monte_carlo(&mkt, &a, &b, &opts, Some(&cdf)).map_err(err)?;
    let ks = s.ks.unwrap();
    let (p, _) = mkt.competitive_equilibrium();
    ensure((s.mean_price - 0.438).abs() < 0.01, format!("mean price {}", s.mean_price))?;
    ensure(ks < 0.012, format!("KS {ks}"))?;
    ensure((p - 0.52).abs() < 1e-12, format!("competitive price {p}"))?;
    Ok(format!("mean {:.4}, KS {ks:.4}, p* {p:.2}", s.mean_price))
}

fn welfare_equality() -> Result<String, String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let (mut found, mut worst) = (0, 0.0f64);
    while found < 20 {
        let (s, a, d, b) =
            (rng.random_range(0.0..0.4), rng.random_range(0.2..1.0), rng.random_range(0.6..1.0), rng.random_range(0.2..1.0));
        let Ok(mkt) = make_linear_market(s, a, d, b) else { continue };
        let sol = solve_linear_bne(&mkt).map_err(err)?;
        if !sol.exists {
            continue;
        }
        found += 1;
        let r = bne_profits(&sol).map_err(err)?;
        worst = worst.max((r.p_total - 0.5 * (d - s)).abs());
    }
    ensure(worst < 1e-6, format!("worst gap {worst:e}"))?;
    let c = competitive_profits(&uniform()).map_err(err)?;
    ensure((c.p_a - 0.25).abs() < 1e-10, format!("competitive P_a {}", c.p_a))?;
    Ok(format!("20 markets, worst gap {worst:.1e}; competitive P_a {}", c.p_a))
}

fn numeric_vs_closed() -> Result<String, String> {
    let existing = [(0.0, 1.0, 1.0, 1.0), (0.3, 0.6, 1.0, 1.0), (0.1, 0.6, 0.9, 0.8), (0.0, 0.8, 1.0, 0.9), (0.2, 0.7, 0.95, 0.6)];
    let absent = [(0.0, 0.5, 1.0, 0.5), (0.1, 0.9, 0.9, 0.5), (0.0, 0.9, 0.7, 0.2)];
    let opts = NumericOptions::default();
    let mut worst: f64 = 0.0;
    for &(s, a, d, b) in existing.iter().chain(absent.iter()) {
        let mkt = make_linear_market(s, a, d, b).map_err(err)?;
        let exact = solve_linear_bne(&mkt).map_err(err)?;
        let num = solve_bne_numeric(&mkt, &opts).map_err(err)?;
        ensure(num.exists == exact.exists, format!("existence mismatch on ({s}, {a}, {d}, {b})"))?;
        if !exact.exists {
            continue;
        }
        worst = worst.max((num.a_minus - exact.a_minus).abs()).max((num.b_plus - exact.b_plus).abs());
        for i in 0..=2000 {
            let x = exact.a_minus + (exact.b_plus - exact.a_minus) * i as f64 / 2000.0;
            worst = worst
                .max((num.ask_cdf(x) - exact.ask_cdf(x)).abs())
                .max((num.bid_survival(x) - exact.bid_survival(x)).abs());
        }
    }
    ensure(existing.len() == 5, "need 5 markets")?;
    ensure(worst < 1e-4, format!("max error {worst:e}"))?;
    Ok(format!("5 solved + {} absent, max error {worst:.1e}", absent.len()))
}

fn sweep() -> Vec<Market> {
    let mut out = Vec::new();
    for &s in &[0.0, 0.1, 0.2, 0.3] {
        for &a in &[0.4, 0.6, 0.8, 1.0] {
            for &d in &[0.7, 0.85, 1.0] {
                for &b in &[0.4, 0.6, 0.8, 1.0] {
                    if let Ok(m) = make_linear_market(s, a, d, b) {
                        out.push(m);
                    }
                }
            }
        }
    }
    out
}

fn residuals() -> Result<String, String> {
    let (mut foc, mut cons, mut n) = (0.0f64, 0.0f64, 0);
    let opts = NumericOptions::default();
    for (k, mkt) in sweep().iter().enumerate() {
        let mut sols = vec![solve_linear_bne(mkt).map_err(err)?];
        if k % 8 == 0 {
            sols.push(solve_bne_numeric(mkt, &opts).map_err(err)?);
        }
        for sol in sols.iter().filter(|s| s.exists) {
            let r = verify_solution(sol, 1000).map_err(err)?;
            foc = foc.max(r.foc);
            cons = cons.max(r.consistency);
            n += 1;
        }
    }
    ensure(n > 0, "no equilibria in sweep")?;
    ensure(foc < 1e-6 && cons < 1e-6, format!("foc {foc:e} consistency {cons:e}"))?;
    Ok(format!("{n} equilibria, foc {foc:.1e}, consistency {cons:.1e}"))
}

fn gamma_oracle() -> Result<String, String> {
    let u = uniform();
    let bne = solve_linear_bne(&u).map_err(err)?.payoff_context().map_err(err)?;
    let mkt = flat_demand();
    let (a, b) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
    let zic = PayoffContext::new(mkt.clone(), induced_distributions(&mkt, &a, &b).map_err(err)?);
    let op = one_price_profile(&u, 0.5).map_err(err)?;
    let one = PayoffContext::new(u.clone(), induced_distributions(&u, &op.sellers, &op.buyers).map_err(err)?);
    let mut worst: f64 = 0.0;
    for ctx in [&bne, &zic, &one] {
        for i in 0..100 {
            let x = (i as f64 + 0.5) / 100.0;
            let (g1, g2) = (ctx.gamma1(x).map_err(err)?, ctx.gamma2(x).map_err(err)?);
            let (s1, s2) = ctx.gamma_series_oracle(x, 1e-13);
            worst = worst.max((s1 - g1).abs()).max((s2 - g2).abs());
        }
    }
    ensure(worst < 1e-9, format!("max gap {worst:e}"))?;
    Ok(format!("300 points, max gap {worst:.1e}"))
}

fn one_price_discontinuity() -> Result<String, String> {
    let u = uniform();
    let (p, _) = u.competitive_equilibrium();
    let op = one_price_profile(&u, p).map_err(err)?;
    let ctx = PayoffContext::new(u.clone(), induced_distributions(&u, &op.sellers, &op.buyers).map_err(err)?);
    let mut worst: f64 = 0.0;
    for &big_m in &[0.6, 0.75, 0.9, 1.0] {
        let jump = ctx.buyer_payoff_right_limit(p, big_m).map_err(err)? - ctx.buyer_payoff(p, big_m).map_err(err)?;
        let expect = (big_m - p) * op.q_d / (op.q_s * (op.q_s + op.q_d));
        worst = worst.max((jump - expect).abs());
    }
    ensure(worst < 1e-10, format!("jump error {worst:e}"))?;
    let opts = ProbeOptions { runs: 1_000_000, seed: 8, ..Default::default() };
    let est = probe_deviation(&u, &op.sellers, &op.buyers, Side::Buyer, 1.0, &[p, p + 0.01], &opts).map_err(err)?;
    let (at_p, above) = (est[0].ci95(), est[1].ci95());
    ensure(above.0 > at_p.1, format!("CIs overlap: {at_p:?} vs {above:?}"))?;
    Ok(format!("jump error {worst:.1e}; probe {:.3} vs {:.3}", est[0].value, est[1].value))
}

fn shout_bounds_sweep() -> Result<String, String> {
    let (mut solved, mut total) = (0, 0);
    let opts = NumericOptions::default();
    for (k, mkt) in sweep().iter().enumerate() {
        total += 1;
        let mut sols = vec![solve_linear_bne(mkt).map_err(err)?];
        if k % 8 == 0 {
            sols.push(solve_bne_numeric(mkt, &opts).map_err(err)?);
        }
        for sol in sols.iter().filter(|s| s.exists) {
            let r = verify_solution(sol, 1000).map_err(err)?;
            ensure(r.bounds.holds(1e-9), format!("{:?}", r.bounds))?;
            solved += 1;
        }
    }
    Ok(format!("{solved} equilibria over {total} markets"))
}

fn payoff_consistency() -> Result<String, String> {
    let u = uniform();
    let sol = solve_linear_bne(&u).map_err(err)?;
    let ctx = sol.payoff_context().map_err(err)?;
    let (sellers, buyers) = (sol.ask_profile().map_err(err)?, sol.bid_profile().map_err(err)?);
    let opts = MonteCarloOptions { runs: 100_000, seed: 11, bins: 20, workers: None };
    let s = monte_carlo(&u, &sellers, &buyers, &opts, None).map_err(err)?;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (lo, hi) = (s.buyer_bins.edges[i], s.buyer_bins.edges[i + 1]);
        let want = integrate(|v| u.type_density(Side::Buyer, v) * ctx.buyer_payoff(sol.bid(v).unwrap(), v).unwrap(), lo, hi, 1e-10)
            .map_err(err)?
            .value;
        let (got, se) = s.buyer_bins.estimate(i);
        worst = worst.max(z_score(got, want, se)?);
        let (lo, hi) = (s.seller_bins.edges[i], s.seller_bins.edges[i + 1]);
        let want = integrate(|v| u.type_density(Side::Seller, v) * ctx.seller_payoff(sol.ask(v).unwrap(), v).unwrap(), lo, hi, 1e-10)
            .map_err(err)?
            .value;
        let (got, se) = s.seller_bins.estimate(i);
        worst = worst.max(z_score(got, want, se)?);
    }
    ensure(worst < 3.0, format!("worst |z| {worst:.2}"))?;
    Ok(format!("40 bins, worst |z| {worst:.2}"))
}

fn z_score(got: f64, want: f64, se: f64) -> Result<f64, String> {
    if se > 0.0 {
        Ok(((got - want) / se).abs())
    } else if (got - want).abs() < 1e-12 {
        Ok(0.0)
    } else {
        Err(format!("empty bin with nonzero target {want}"))
    }
}

fn main() {
    let checks: [(&str, Check, Duration); 10] = [
        ("closed-form BNE on the uniform market", uniform_closed_form, Duration::from_secs(1)),
        ("boundaries of the 0.3 + 0.6x market", asymmetric_boundaries, Duration::from_secs(1)),
        ("ZI-C price distribution", zic_reproduction, Duration::from_secs(30)),
        ("equilibrium welfare equals competitive welfare", welfare_equality, Duration::from_secs(60)),
        ("shooting solver against the closed form", numeric_vs_closed, Duration::from_secs(120)),
        ("first-order and consistency residuals", residuals, Duration::MAX),
        ("series oracle for the waiting weights", gamma_oracle, Duration::MAX),
        ("one-price payoff discontinuity", one_price_discontinuity, Duration::from_secs(300)),
        ("bounds on equilibrium shouts", shout_bounds_sweep, Duration::MAX),
        ("simulated profits per type bin", payoff_consistency, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in checks.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let took = start.elapsed();
        if result.is_ok() && took > *budget {
            result = Err(format!("took {took:?}, budget {budget:?}"));
        }
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{:.2?}]", i + 1, took),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{:.2?}]", i + 1, took);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
