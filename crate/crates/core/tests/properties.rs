use cda_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn any_market() -> impl Strategy<Value = Market> {
    (0.0..0.4f64, 0.1..1.0f64, 0.6..1.0f64, 0.1..1.0f64)
        .prop_filter_map("valid market", |(s, a, d, b)| make_linear_market(s, a, d, b).ok())
}

fn bne_market() -> impl Strategy<Value = EquilibriumSolution> {
    (0.0..0.3f64, 0.6..1.0f64, 0.7..1.0f64, 0.6..1.0f64).prop_filter_map("BNE exists", |(s, a, d, b)| {
        let m = make_linear_market(s, a, d, b).ok()?;
        solve_linear_bne(&m).ok().filter(|sol| sol.exists)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn competitive_point_is_on_both_curves(mkt in any_market()) {
        let (p, q) = mkt.competitive_equilibrium();
        prop_assert!((mkt.supply(q) - p).abs() < 1e-12);
        prop_assert!((mkt.demand(q) - p).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_properties(sol in bne_market()) {
        let r = sol.residuals.as_ref().unwrap();
        prop_assert!(r.foc < 1e-6, "foc {}", r.foc);
        prop_assert!(r.consistency < 1e-9, "consistency {}", r.consistency);
        prop_assert!(r.bounds.holds(1e-9), "{:?}", r.bounds);
        let mkt = sol.market();
        for i in 1..50 {
            let m = mkt.s_minus() + (sol.b_plus - mkt.s_minus()) * i as f64 / 50.0;
            prop_assert!(sol.ask(m).unwrap() > m);
            let big_m = sol.a_minus + (mkt.d_plus() - sol.a_minus) * i as f64 / 50.0;
            prop_assert!(sol.bid(big_m).unwrap() < big_m);
        }
    }

    #[test]
    fn potential_is_constant_on_the_curve(sol in bne_market()) {
        let mkt = sol.market();
        let (alpha, beta) = mkt.linear_slopes().unwrap();
        let bne = LinearBne::for_market(mkt).unwrap();
        let level = bne.saddle_level();
        for i in 1..20 {
            let x = sol.a_minus + (sol.b_plus - sol.a_minus) * i as f64 / 20.0;
            let (a, bc) = (sol.ask_cdf(x), sol.bid_survival(x));
            // The consistency relation in linear form.
            let lhs = bc * (mkt.d_plus() - beta * bc - x) - a * (x - mkt.s_minus() - alpha * a);
            prop_assert!(lhs.abs() < 1e-12);
            prop_assert!((bne.potential(x, sol.transaction_cdf(x)) - level).abs() < 1e-10);
        }
    }

    #[test]
    fn welfare_is_competitive(sol in bne_market()) {
        let mkt = sol.market();
        let r = bne_profits(&sol).unwrap();
        prop_assert!((r.p_total - 0.5 * (mkt.d_plus() - mkt.s_minus())).abs() < 1e-7, "{:?}", r);
        let (ra, rb) = r.reduced.unwrap();
        prop_assert!((ra - r.p_a).abs() < 1e-7 && (rb - r.p_b).abs() < 1e-7);
    }

    #[test]
    fn zic_gamma_series(mkt in any_market(), u in 0.05..0.95f64) {
        let (a, b) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
        let ctx = PayoffContext::new(mkt.clone(), induced_distributions(&mkt, &a, &b).unwrap());
        let x = u;
        if let (Ok(g1), Ok(g2)) = (ctx.gamma1(x), ctx.gamma2(x)) {
            let (s1, s2) = ctx.gamma_series_oracle(x, 1e-13);
            prop_assert!((s1 - g1).abs() < 1e-9 * g1.max(1.0), "{s1} vs {g1}");
            prop_assert!((s2 - g2).abs() < 1e-9 * g2.max(1.0), "{s2} vs {g2}");
        }
    }

    #[test]
    fn price_cdf_is_a_cdf(mkt in any_market()) {
        let (a, b) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
        let ctx = PayoffContext::new(mkt.clone(), induced_distributions(&mkt, &a, &b).unwrap());
        let mut prev = 0.0;
        for i in 0..=40 {
            let t = ctx.price_cdf(i as f64 / 40.0).unwrap();
            prop_assert!(t >= prev - 1e-9 && t <= 1.0 + 1e-9);
            prev = t;
        }
        prop_assert!((prev - 1.0).abs() < 1e-7);
    }

    #[test]
    fn zic_respects_budget(mkt in any_market(), seed in any::<u64>()) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
        for _ in 0..200 {
            let m = mkt.type_quantile(Side::Seller, rng.random());
            prop_assert!(a.shout(m, &mut rng) >= m);
            let big_m = mkt.type_quantile(Side::Buyer, rng.random());
            prop_assert!(b.shout(big_m, &mut rng) <= big_m);
        }
    }

    #[test]
    fn quotes_move_monotonically(shouts in prop::collection::vec((any::<bool>(), 0.0..1.0f64), 1..200)) {
        let mut s = AuctionState::new();
        for (is_seller, x) in shouts {
            let (bid, ask) = (s.max_bid(), s.min_ask());
            let side = if is_seller { Side::Seller } else { Side::Buyer };
            match s.submit(side, 0.5, x) {
                Submission::Traded(o) => {
                    let ok = if is_seller { o.t == bid && x <= bid } else { o.t == ask && x >= ask };
                    prop_assert!(ok);
                    break;
                }
                Submission::Replaced => {
                    let ok = if is_seller { s.min_ask() < ask } else { s.max_bid() > bid };
                    prop_assert!(ok);
                }
                Submission::Ignored => prop_assert!(s.min_ask() == ask && s.max_bid() == bid),
            }
            prop_assert!(s.max_bid() >= bid && s.min_ask() <= ask);
            prop_assert!(s.max_bid() < s.min_ask() || s.typemax().is_none() || s.typemin().is_none());
        }
    }

    #[test]
    fn rational_profiles_earn_nonnegative_profits(mkt in any_market(), seed in any::<u64>()) {
        let (a, b) = (StrategyProfile::zic(Side::Seller, &mkt), StrategyProfile::zic(Side::Buyer, &mkt));
        let opts = MonteCarloOptions { runs: 200, seed, bins: 4, workers: Some(1) };
        let s = monte_carlo(&mkt, &a, &b, &opts, None).unwrap();
        for i in 0..4 {
            prop_assert!(s.seller_bins.estimate(i).0 >= 0.0 && s.buyer_bins.estimate(i).0 >= 0.0);
        }
    }
}
