use std::path::{Path, PathBuf};

use cda_core::strategy::induced_distributions;
use cda_core::*;

use crate::config::{Method, RunConfig, StrategyBlock};
use crate::table::{num, Table};
use crate::CliError;

/// Resolved invocation: config plus command-line overrides.
pub struct Job {
    pub command: &'static str,
    pub cfg: RunConfig,
    pub out: Option<PathBuf>,
}

impl Job {
    fn table(&self, header: &[&str]) -> Table {
        let mut t = Table::new(header);
        t.meta("command", self.command)
            .meta("config_sha256", &self.cfg.hash)
            .meta("seed", self.cfg.params.seed)
            .meta("version", env!("CARGO_PKG_VERSION"));
        t
    }

    fn save(&self, t: &Table) -> Result<(), CliError> {
        t.save(self.out.as_deref()).map_err(|e| CliError::Compute(format!("writing output: {e}")))
    }

    /// Human-readable summary: stdout when the CSV goes to a file.
    fn report(&self, line: &str) {
        if self.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }

    fn market(&self) -> Result<Market, CliError> {
        self.cfg.market()
    }
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

fn solve(cfg: &RunConfig, mkt: &Market) -> Result<EquilibriumSolution, CliError> {
    let linear = mkt.linear_slopes().is_some();
    match cfg.params.method {
        Method::Auto if linear => solve_linear_bne(mkt).map_err(compute),
        Method::ClosedForm if !linear => Err(CliError::Config("closed-form method needs a linear market".into())),
        Method::ClosedForm => solve_linear_bne(mkt).map_err(compute),
        _ => solve_bne_numeric(mkt, &NumericOptions::default()).map_err(compute),
    }
}

struct Profiles {
    sellers: StrategyProfile,
    buyers: StrategyProfile,
    solution: Option<EquilibriumSolution>,
}

fn profiles(cfg: &RunConfig, mkt: &Market) -> Result<Profiles, CliError> {
    match cfg.strategy {
        StrategyBlock::Bne => {
            let sol = solve(cfg, mkt)?;
            if !sol.exists {
                return Err(CliError::Compute(format!("no equilibrium: {}", sol.describe_violation())));
            }
            Ok(Profiles { sellers: sol.ask_profile().map_err(compute)?, buyers: sol.bid_profile().map_err(compute)?, solution: Some(sol) })
        }
        StrategyBlock::Zic => {
            Ok(Profiles { sellers: StrategyProfile::zic(Side::Seller, mkt), buyers: StrategyProfile::zic(Side::Buyer, mkt), solution: None })
        }
        StrategyBlock::OnePrice { price } => {
            let p = price.unwrap_or_else(|| mkt.competitive_equilibrium().0);
            let op = one_price_profile(mkt, p).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Profiles { sellers: op.sellers, buyers: op.buyers, solution: None })
        }
    }
}

fn context(mkt: &Market, p: &Profiles) -> Result<PayoffContext, CliError> {
    match &p.solution {
        Some(sol) => sol.payoff_context().map_err(compute),
        None => Ok(PayoffContext::new(mkt.clone(), induced_distributions(mkt, &p.sellers, &p.buyers).map_err(compute)?)),
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

pub fn bne(job: &Job) -> Result<(), CliError> {
    let mkt = job.market()?;
    let sol = solve(&job.cfg, &mkt)?;
    let mut t = job.table(&[
        "exists", "method", "a_minus", "b_plus", "gamma", "lambda", "x_bar", "foc_residual", "consistency_residual", "violation",
    ]);
    let res = sol.residuals.as_ref();
    t.row(vec![
        sol.exists.to_string(),
        format!("{:?}", sol.method),
        num(sol.a_minus),
        num(sol.b_plus),
        opt(sol.gamma_const),
        opt(sol.lambda_const),
        opt(sol.x_bar),
        opt(res.map(|r| r.foc)),
        opt(res.map(|r| r.consistency)),
        sol.violation.map(|_| sol.describe_violation().replace(',', ";")).unwrap_or_default(),
    ]);
    if sol.experimental {
        t.meta("experimental", true);
    }
    job.save(&t)?;
    if let (true, Some(out)) = (sol.exists, &job.out) {
        let mut c = job.table(&["x", "ask_cdf", "bid_survival", "transaction_cdf"]);
        for x in grid(sol.a_minus, sol.b_plus, job.cfg.params.grid) {
            c.row(vec![num(x), num(sol.ask_cdf(x)), num(sol.bid_survival(x)), num(sol.transaction_cdf(x))]);
        }
        c.save(Some(&sibling(out, "curves"))).map_err(compute)?;
    }
    if sol.exists {
        job.report(&format!("equilibrium: a_minus {:.6} b_plus {:.6}", sol.a_minus, sol.b_plus));
    } else {
        job.report(&format!("no equilibrium: {}", sol.describe_violation()));
    }
    Ok(())
}

pub fn price_cdf(job: &Job) -> Result<(), CliError> {
    let mkt = job.market()?;
    let p = profiles(&job.cfg, &mkt)?;
    let ctx = context(&mkt, &p)?;
    let mut t = job.table(&["t", "price_cdf", "ask_cdf", "bid_survival"]);
    for x in grid(0.0, 1.0, job.cfg.params.grid) {
        let f = ctx.price_cdf(x).map_err(compute)?;
        t.row(vec![num(x), num(f), num(ctx.dists.a(x)), num(ctx.dists.b_c(x))]);
    }
    let mean = ctx.mean_price().map_err(compute)?;
    let (buyer, _) = ctx.price_maker_split().map_err(compute)?;
    t.meta("mean_price", num(mean)).meta("buyer_price_maker", num(buyer));
    job.save(&t)?;
    job.report(&format!("mean price {mean:.6}, buyer price maker {buyer:.4}"));
    Ok(())
}

pub fn payoff(job: &Job) -> Result<(), CliError> {
    let mkt = job.market()?;
    let params = &job.cfg.params;
    let v = params.trader_type.ok_or_else(|| CliError::Config("payoff needs params.type".into()))?;
    let side: Side = params.side.into();
    let p = profiles(&job.cfg, &mkt)?;
    let ctx = context(&mkt, &p)?;
    let shouts: Vec<f64> = params.shouts.clone().unwrap_or_else(|| grid(0.0, 1.0, params.grid).collect());
    let mut t = job.table(&["x", "payoff"]);
    t.meta("side", side).meta("type", num(v));
    if let Some(sol) = &p.solution {
        let x = match side {
            Side::Seller => sol.ask(v),
            Side::Buyer => sol.bid(v),
        };
        t.meta("equilibrium_shout", opt(x));
    }
    for x in shouts {
        let value = match side {
            Side::Buyer => ctx.buyer_payoff(x, v),
            Side::Seller => ctx.seller_payoff(x, v),
        }
        .map_err(compute)?;
        t.row(vec![num(x), num(value)]);
    }
    job.save(&t)
}

pub fn welfare(job: &Job) -> Result<(), CliError> {
    let mkt = job.market()?;
    let mut reports = vec![competitive_profits(&mkt).map_err(compute)?];
    let sol = solve(&job.cfg, &mkt)?;
    if sol.exists {
        reports.push(bne_profits(&sol).map_err(compute)?);
    }
    let mut t = job.table(&["regime", "p_a", "p_b", "p_total", "intramarginal_sellers", "intramarginal_buyers"]);
    if !sol.exists {
        t.meta("bne", "absent");
    }
    for r in &reports {
        let regime = match r.regime {
            Regime::Competitive => "competitive",
            Regime::Bne => "bne",
        };
        t.row(vec![
            regime.into(),
            num(r.p_a),
            num(r.p_b),
            num(r.p_total),
            num(r.intramarginal_sellers),
            num(r.intramarginal_buyers),
        ]);
        job.report(&format!("{regime}: P_a {:.6} P_b {:.6} total {:.6}", r.p_a, r.p_b, r.p_total));
    }
    job.save(&t)
}

pub fn simulate(job: &Job) -> Result<(), CliError> {
    let mkt = job.market()?;
    let params = &job.cfg.params;
    let p = profiles(&job.cfg, &mkt)?;
    let ctx = context(&mkt, &p)?;
    let atomless = !ctx.dists.has_atoms();
    let cdf = |x: f64| ctx.price_cdf(x).unwrap_or(f64::NAN);
    let reference: Option<&dyn Fn(f64) -> f64> = if atomless { Some(&cdf) } else { None };
    let opts = MonteCarloOptions { runs: params.runs, seed: params.seed, bins: params.bins, workers: params.workers };
    let s = monte_carlo(&mkt, &p.sellers, &p.buyers, &opts, reference).map_err(compute)?;
    let mut t = job.table(&["t", "empirical_cdf"]);
    t.meta("runs", s.runs)
        .meta("mean_price", num(s.mean_price))
        .meta("mean_price_se", num(s.mean_price_se))
        .meta("buyer_price_maker", num(s.buyer_price_maker))
        .meta("ks", opt(s.ks));
    let n = s.prices.len();
    for (i, &x) in s.prices.iter().enumerate() {
        // One row per distinct price, at the top of its jump.
        if i + 1 == n || s.prices[i + 1] != x {
            t.row(vec![num(x), num((i + 1) as f64 / n as f64)]);
        }
    }
    job.save(&t)?;
    let ks = s.ks.map_or_else(|| "n/a".to_string(), |k| format!("{k:.5}"));
    job.report(&format!(
        "runs {} mean price {:.6} ± {:.6}, KS {ks}, price maker buyer {:.4} seller {:.4}",
        s.runs,
        s.mean_price,
        s.mean_price_se,
        s.buyer_price_maker,
        1.0 - s.buyer_price_maker
    ));
    Ok(())
}

struct Battery {
    table: Table,
    scale: f64,
    failures: Vec<String>,
}

impl Battery {
    fn check(&mut self, name: &str, value: f64, threshold: f64) {
        let threshold = threshold * self.scale;
        let passed = value < threshold;
        self.table.row(vec![name.into(), passed.to_string(), num(value), num(threshold)]);
        if !passed {
            self.failures.push(format!("{name}: {value:e} ≥ {threshold:e}"));
        }
    }

    fn flag(&mut self, name: &str, passed: bool) {
        let scale = std::mem::replace(&mut self.scale, 1.0);
        self.check(name, if passed { 0.0 } else { 1.0 }, 0.5);
        self.scale = scale;
    }
}

/// Runs the invariant battery on the configured market.
pub fn verify(job: &Job) -> Result<(), CliError> {
    let mkt = job.market()?;
    let params = &job.cfg.params;
    let mut b = Battery {
        table: job.table(&["check", "passed", "value", "threshold"]),
        scale: params.verify_tolerance,
        failures: Vec::new(),
    };
    let linear = mkt.linear_slopes().is_some();

    let numeric = solve_bne_numeric(&mkt, &NumericOptions::default()).map_err(compute)?;
    let sol = if linear {
        let exact = solve_linear_bne(&mkt).map_err(compute)?;
        b.flag("existence agrees between solvers", exact.exists == numeric.exists);
        if exact.exists && numeric.exists {
            let mut gap = (exact.a_minus - numeric.a_minus).abs().max((exact.b_plus - numeric.b_plus).abs());
            for x in grid(exact.a_minus, exact.b_plus, 1001) {
                gap = gap
                    .max((exact.ask_cdf(x) - numeric.ask_cdf(x)).abs())
                    .max((exact.bid_survival(x) - numeric.bid_survival(x)).abs());
            }
            b.check("numeric vs closed-form curves", gap, 1e-4);
        }
        exact
    } else {
        numeric.clone()
    };
    job.report(&if sol.exists {
        format!("equilibrium exists: a_minus {:.6} b_plus {:.6}", sol.a_minus, sol.b_plus)
    } else {
        format!("equilibrium does not exist: {}", sol.describe_violation())
    });
    b.table.meta("bne_exists", sol.exists);

    for s in [&sol, &numeric].into_iter().filter(|s| s.exists) {
        let r = verify_solution(s, 1000).map_err(compute)?;
        let tag = format!("{:?}", s.method);
        b.check(&format!("{tag} first-order residual"), r.foc, 1e-6);
        b.check(&format!("{tag} consistency residual"), r.consistency, 1e-6);
        b.flag(&format!("{tag} shout bounds"), r.bounds.holds(1e-9));
    }

    let (sellers, buyers, ctx) = if sol.exists {
        let ctx = sol.payoff_context().map_err(compute)?;
        (sol.ask_profile().map_err(compute)?, sol.bid_profile().map_err(compute)?, ctx)
    } else {
        let (s, bu) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
        let ctx = PayoffContext::new(mkt.clone(), induced_distributions(&mkt, &s, &bu).map_err(compute)?);
        (s, bu, ctx)
    };
    let mut gap: f64 = 0.0;
    for i in 0..100 {
        let x = (i as f64 + 0.5) / 100.0;
        if let (Ok(g1), Ok(g2)) = (ctx.gamma1(x), ctx.gamma2(x)) {
            let (s1, s2) = ctx.gamma_series_oracle(x, 1e-13);
            gap = gap.max((s1 - g1).abs()).max((s2 - g2).abs());
        }
    }
    b.check("series vs closed-form waiting weights", gap, 1e-9);

    if sol.exists && linear {
        let w = bne_profits(&sol).map_err(compute)?;
        let c = competitive_profits(&mkt).map_err(compute)?;
        b.check("equilibrium vs competitive welfare", (w.p_total - c.p_total).abs(), 1e-6);
    }

    let opts = MonteCarloOptions { runs: params.runs, seed: params.seed, bins: params.bins, workers: params.workers };
    let cdf = |x: f64| ctx.price_cdf(x).unwrap_or(f64::NAN);
    let s = monte_carlo(&mkt, &sellers, &buyers, &opts, Some(&cdf)).map_err(compute)?;
    b.check("Monte Carlo price KS distance", s.ks.unwrap_or(f64::INFINITY), 1.63 / (params.runs as f64).sqrt());

    job.save(&b.table)?;
    if b.failures.is_empty() {
        job.report("all checks passed");
        Ok(())
    } else {
        Err(CliError::Verification(b.failures.join("; ")))
    }
}
