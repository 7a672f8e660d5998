use pacbound::bounds::{
    build_eta_grid, chernoff_bound, excess_risk_bounds, hoeffding_bound, hoeffding_constants,
    pac_bayes_bound, pac_bayes_expectation_bound, pac_bayes_grid_bound, pac_hoeffding_bound,
    pac_variance_bound, union_bound, variance_bound, variance_constants, BoundReport, EtaCap,
    ExcessFlavor, SampleSize,
};
use pacbound::kernels::{
    m_eta, phi, ConfidenceLevel, DiscreteLossDistribution, EtaValue, LossRange,
};
use pacbound::posterior::{gibbs_posterior, kl_divergence, GibbsParams, ProbVector};
use pacbound::sim::{
    empirical_risks, erm, relative_loss_env, run_coverage, sample_dataset, BoundKind, Coupling,
    CoverageSetup, Environment,
};
use proptest::prelude::*;

fn eta(x: f64) -> EtaValue {
    EtaValue::new(x).unwrap()
}

fn size(n: usize) -> SampleSize {
    SampleSize::new(n).unwrap()
}

fn conf(d: f64) -> ConfidenceLevel {
    ConfidenceLevel::new(d).unwrap()
}

fn law(lo: f64, hi: f64, max_atoms: usize) -> impl Strategy<Value = DiscreteLossDistribution> {
    prop::collection::vec((lo..=hi, 0.01f64..1.0), 1..=max_atoms).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let (support, probs) = atoms.into_iter().map(|(z, p)| (z, p / total)).unzip();
        DiscreteLossDistribution::new(support, probs).unwrap()
    })
}

fn simplex(k: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        ProbVector::new(w.into_iter().map(|x| x / s).collect()).unwrap()
    })
}

fn eta_value() -> impl Strategy<Value = f64> {
    (-3.0f64..1.5).prop_map(|e| 10f64.powf(e))
}

fn assert_decomposed(r: &BoundReport) {
    let parts = r.empirical_term + r.slack_term + r.complexity_term;
    assert!(
        (r.total - parts).abs() <= 1e-12 * r.total.abs().max(1.0),
        "{r:?}"
    );
    assert!(r.complexity_term >= 0.0, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn phi_is_nondecreasing(x in -50.0f64..50.0, y in -50.0f64..50.0) {
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        prop_assert!(phi(lo) <= phi(hi) + 1e-12 * phi(hi).max(1.0));
    }

    #[test]
    fn m_eta_between_min_and_mean(d in law(-2.0, 3.0, 6), e in eta_value()) {
        let m = m_eta(&d, eta(e));
        prop_assert!(m <= d.mean() + 1e-10);
        prop_assert!(m >= d.min_support() - 1e-10);
    }

    #[test]
    fn m_eta_nonincreasing(d in law(-1.0, 2.0, 5), e1 in eta_value(), e2 in eta_value()) {
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(m_eta(&d, eta(lo)) >= m_eta(&d, eta(hi)) - 1e-10);
    }

    #[test]
    fn variance_inequality(d in law(-1.0, 1.5, 5), v in 0.01f64..20.0, t in 0.001f64..=1.0) {
        let a = d.min_support().min(0.0);
        let e = v * t;
        prop_assert!(d.mean() <= m_eta(&d, eta(e)) + e * phi(-v * a) * d.second_moment() + 1e-12);
    }

    #[test]
    fn every_report_decomposes(
        emp in 0.0f64..1.0,
        kl in 0.0f64..5.0,
        sec in 0.0f64..1.0,
        n in 1usize..10_000,
        e in 0.01f64..1.0,
        d in 0.001f64..=1.0,
    ) {
        let unit = LossRange::new(0.0, 1.0).unwrap();
        let grid = build_eta_grid(eta(0.01), eta(1.0), 2.0).unwrap();
        let reports = [
            chernoff_bound(emp, size(n), eta(e), conf(d)).unwrap(),
            hoeffding_bound(emp, size(n), unit, conf(d)).unwrap(),
            variance_bound(emp, sec, size(n), 0.0, EtaCap::Unbounded, eta(e), conf(d)).unwrap(),
            pac_bayes_bound(emp, kl, size(n), eta(e), conf(d)).unwrap(),
            pac_bayes_expectation_bound(emp, kl, size(n), eta(e)).unwrap(),
            pac_bayes_grid_bound(emp, kl, size(n), eta(e), &grid, conf(d)).unwrap(),
            pac_hoeffding_bound(emp, kl, size(n), unit, 2.0, eta(1.0), conf(d), None).unwrap(),
            pac_variance_bound(emp, kl, sec, size(n), 0.0, 1.0, 2.0, eta(1.0), conf(d), None).unwrap(),
            excess_risk_bounds(emp, 0.5 * emp, kl, sec, size(n), 1.0, 2.0, eta(1.0), conf(d), ExcessFlavor::Variance, None).unwrap(),
        ];
        for r in &reports {
            assert_decomposed(r);
        }
    }

    #[test]
    fn totals_nonincreasing_in_delta(
        emp in 0.0f64..1.0,
        kl in 0.0f64..5.0,
        n in 1usize..5000,
        e in 0.01f64..1.0,
        d1 in 0.001f64..=1.0,
        d2 in 0.001f64..=1.0,
    ) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let unit = LossRange::new(0.0, 1.0).unwrap();
        let grid = build_eta_grid(eta(0.01), eta(1.0), 2.0).unwrap();
        let totals = |d: f64| {
            [
                chernoff_bound(emp, size(n), eta(e), conf(d)).unwrap().total,
                hoeffding_bound(emp, size(n), unit, conf(d)).unwrap().total,
                pac_bayes_bound(emp, kl, size(n), eta(e), conf(d)).unwrap().total,
                pac_bayes_grid_bound(emp, kl, size(n), eta(e), &grid, conf(d)).unwrap().total,
                pac_hoeffding_bound(emp, kl, size(n), unit, 2.0, eta(1.0), conf(d), None).unwrap().total,
                pac_variance_bound(emp, kl, 0.3, size(n), 0.0, 1.0, 2.0, eta(1.0), conf(d), None).unwrap().total,
            ]
        };
        for (small, large) in totals(lo).iter().zip(totals(hi)) {
            prop_assert!(large <= small + 1e-12, "{large} > {small}");
        }
    }

    #[test]
    fn pac_bayes_totals_nondecreasing_in_kl(
        emp in 0.0f64..1.0,
        k1 in 0.0f64..5.0,
        k2 in 0.0f64..5.0,
        n in 1usize..5000,
        e in 0.01f64..1.0,
        d in 0.001f64..=1.0,
    ) {
        let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
        let unit = LossRange::new(0.0, 1.0).unwrap();
        let totals = |kl: f64| {
            [
                pac_bayes_bound(emp, kl, size(n), eta(e), conf(d)).unwrap().total,
                pac_bayes_expectation_bound(emp, kl, size(n), eta(e)).unwrap().total,
                pac_hoeffding_bound(emp, kl, size(n), unit, 2.0, eta(1.0), conf(d), None).unwrap().total,
                pac_variance_bound(emp, kl, 0.3, size(n), 0.0, 1.0, 2.0, eta(1.0), conf(d), None).unwrap().total,
            ]
        };
        for (small, large) in totals(lo).iter().zip(totals(hi)) {
            prop_assert!(*small <= large + 1e-12);
        }
    }

    #[test]
    fn tuned_eta_lies_above_u_when_log_term_is_large(
        kl in 0.0f64..5.0,
        d in 0.001f64..0.5,
        n in 2usize..100_000,
        alpha in 1.1f64..4.0,
        v in 0.1f64..20.0,
        b in 0.2f64..3.0,
    ) {
        let unit = LossRange::new(0.0, b).unwrap();
        let consts = hoeffding_constants(unit, alpha, eta(v), size(n)).unwrap();
        let weight = kl + conf(d).log_inv() + consts.log_factor;
        prop_assume!(weight >= 1.0);
        let closed = (8.0 * alpha * weight / (n as f64 * b * b)).sqrt();
        prop_assert!(closed >= consts.u.get() * (1.0 - 1e-12));

        let vc = variance_constants(0.0, b, alpha, eta(v), size(n)).unwrap();
        // at the largest second moment max{a^2, b^2} the tuned eta sits above u
        let weight = kl + conf(d).log_inv() + vc.log_factor;
        if weight >= 1.0 {
            let closed = (alpha * weight / (n as f64 * phi(0.0) * b * b)).sqrt();
            prop_assert!(closed >= vc.u.get() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn grid_covers(u in -4.0f64..1.0, decades in 0.01f64..4.0, alpha in 1.01f64..6.0, t in 0.0f64..=1.0) {
        let (u, v) = (10f64.powf(u), 10f64.powf(u + decades));
        let grid = build_eta_grid(eta(u), eta(v), alpha).unwrap();
        let x = (u * (v / u).powf(t)).clamp(u, v);
        let p = grid.covering_point(eta(x)).unwrap();
        prop_assert!(p.get() <= x && x <= alpha * p.get());
        prop_assert!(grid.points().last().unwrap().get() * alpha >= v);
    }

    #[test]
    fn kl_nonnegative_and_zero_on_diagonal(p in simplex(5), q in simplex(5)) {
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn gibbs_normalized_over_wide_spans(
        prior in simplex(6),
        risks in prop::collection::vec(0.0f64..1.0, 6),
        exponent in 0.0f64..1e4,
    ) {
        let params = GibbsParams::new(eta(exponent.max(1e-9)), 1.0, size(1)).unwrap();
        let g = gibbs_posterior(&prior, &risks, params).unwrap();
        let s: f64 = g.weights().iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gibbs_invariant_to_risk_shift(
        prior in simplex(5),
        risks in prop::collection::vec(0.0f64..1.0, 5),
        c in -10.0f64..10.0,
        e in 0.01f64..5.0,
        n in 1usize..200,
    ) {
        let params = GibbsParams::new(eta(e), 2.0, size(n)).unwrap();
        let shifted: Vec<f64> = risks.iter().map(|r| r + c).collect();
        let g1 = gibbs_posterior(&prior, &risks, params).unwrap();
        let g2 = gibbs_posterior(&prior, &shifted, params).unwrap();
        for (a, b) in g1.weights().iter().zip(g2.weights()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn relative_loss_mean_identity(
        laws in prop::collection::vec(law(0.0, 1.0, 3), 1..5),
        independent in any::<bool>(),
    ) {
        let coupling = if independent { Coupling::Independent } else { Coupling::Shared };
        let env = Environment::new(laws, LossRange::new(0.0, 1.0).unwrap())
            .unwrap()
            .with_coupling(coupling);
        let rel = relative_loss_env(&env).unwrap();
        let risks = env.true_risks();
        let best = risks.iter().cloned().fold(f64::INFINITY, f64::min);
        for (r, rr) in risks.iter().zip(rel.true_risks()) {
            prop_assert!((rr - (r - best)).abs() <= 1e-12);
        }
    }

    #[test]
    fn union_matches_pac_bayes_at_point_mass(
        prior in simplex(4),
        risks in prop::collection::vec(0.0f64..1.0, 4),
        sel in 0usize..4,
        n in 1usize..1000,
        e in 0.01f64..5.0,
        d in 0.001f64..=1.0,
    ) {
        let point = ProbVector::point_mass(4, sel).unwrap();
        let kl = kl_divergence(&point, &prior).unwrap();
        let a = union_bound(&risks, &prior, sel, size(n), eta(e), conf(d)).unwrap();
        let b = pac_bayes_bound(risks[sel], kl, size(n), eta(e), conf(d)).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn coverage_is_thread_count_independent(seed in any::<u64>()) {
        let laws = vec![
            DiscreteLossDistribution::bernoulli(0.2).unwrap(),
            DiscreteLossDistribution::bernoulli(0.4).unwrap(),
        ];
        let env = Environment::new(laws, LossRange::new(0.0, 1.0).unwrap()).unwrap();
        let setup = CoverageSetup::new(env, size(40), conf(0.1));
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_coverage(&setup, BoundKind::PacHoeffding, 300, seed).unwrap())
        };
        prop_assert_eq!(run(1), run(5));
    }
}

#[test]
fn erm_accuracy_improves_with_n() {
    let laws = (1..=10)
        .map(|i| DiscreteLossDistribution::bernoulli(0.05 * i as f64).unwrap())
        .collect();
    let env = Environment::new(laws, LossRange::new(0.0, 1.0).unwrap()).unwrap();
    let risks = env.true_risks();
    let best = risks.iter().cloned().fold(f64::INFINITY, f64::min);
    let hit_rate = |n: usize| {
        let hits = (0..400)
            .filter(|&t| risks[erm(&sample_dataset(&env, size(n), 1000 + t))] <= best + 0.05)
            .count();
        hits as f64 / 400.0
    };
    let (small, large) = (hit_rate(100), hit_rate(10_000));
    assert!(large >= small, "{small} -> {large}");
    assert_eq!(large, 1.0);
}

#[test]
fn sampled_risks_stay_in_range() {
    let env = Environment::new(
        vec![DiscreteLossDistribution::new(vec![-0.5, 0.25, 1.0], vec![0.2, 0.5, 0.3]).unwrap()],
        LossRange::new(-0.5, 1.0).unwrap(),
    )
    .unwrap();
    let r = empirical_risks(&sample_dataset(&env, size(500), 9));
    assert!((-0.5..=1.0).contains(&r[0]));
}

#[test]
fn averaged_posterior_prior_lowers_expected_objective() {
    use pacbound::posterior::{optimal_prior_monte_carlo, PosteriorRule};
    let laws = [0.1, 0.2, 0.35, 0.5]
        .map(|p| DiscreteLossDistribution::bernoulli(p).unwrap())
        .to_vec();
    let env = Environment::new(laws, LossRange::new(0.0, 1.0).unwrap()).unwrap();
    let (n, e) = (size(50), eta(1.0));
    let init = ProbVector::uniform(4).unwrap();
    let rule = PosteriorRule::Gibbs { eta: e, alpha: 1.0 };
    let opt = optimal_prior_monte_carlo(&env, n, &init, &rule, 2000, 1).unwrap();

    // posteriors stay those of the initial prior; only the prior in the KL term changes
    let diffs: Vec<f64> = (0..2000)
        .map(|t| {
            let data = sample_dataset(&env, n, 50_000 + t);
            let post = rule.apply(&init, &data).unwrap();
            let local = |prior: &ProbVector| {
                post.expectation(&empirical_risks(&data)).unwrap()
                    + kl_divergence(&post, prior).unwrap() / (e.get() * n.as_f64())
            };
            local(&opt) - local(&init)
        })
        .collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!(mean <= 3.0 * (var / k).sqrt(), "mean change {mean}");
}
