use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use metapop::corpus;
use metapop::disperser;
use metapop::growth::{self, WeightedChain};
use metapop::patchgraph::{build_cycle_pipeline, build_two_patch, PatchGraph};
use metapop::persistence;
use metapop::rng::{self, Domain, StreamRng};

fn graph_from(seed: u64, k: usize, density: f64) -> PatchGraph {
    let mut rng: StreamRng = rng::stream(seed, Domain::Corpus, 1);
    corpus::random_graph(&mut rng, k, density)
}

fn simplex(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn frequencies(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|v| simplex(&v))
}

fn graph_and_two_frequencies() -> impl Strategy<Value = (PatchGraph, Vec<f64>, Vec<f64>)> {
    (any::<u64>(), 2usize..=7, 0.0f64..0.6).prop_flat_map(|(seed, k, density)| {
        (Just(graph_from(seed, k, density)), frequencies(k), frequencies(k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pipeline_closed_form_matches_linear_system(seed in any::<u64>(), n in 1usize..=50) {
        let mut rng: StreamRng = rng::stream(seed, Domain::Corpus, 2);
        let c = corpus::random_pipeline(&mut rng, n);
        let g = build_cycle_pipeline(&c).unwrap();
        let linear = disperser::depleting_rate(&g, &[0]).unwrap();
        let closed = disperser::pipeline_depleting_rate(
            c.n, c.left_share, c.right_share, c.s, c.l, c.r, c.sink_mean,
        )
        .unwrap();
        prop_assert!((linear - closed).abs() <= 1e-10, "n={n} linear={linear} closed={closed}");
    }

    #[test]
    fn rate_function_is_nonnegative_and_convex(
        (g, f1, f2) in graph_and_two_frequencies(),
        t in 0.0f64..1.0,
    ) {
        let i1 = growth::rate_function(&g, &f1).unwrap().value;
        let i2 = growth::rate_function(&g, &f2).unwrap().value;
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let im = growth::rate_function(&g, &simplex(&mix)).unwrap().value;
        prop_assert!(i1 >= -1e-12 && i2 >= -1e-12);
        prop_assert!(im <= t * i1 + (1.0 - t) * i2 + 1e-9, "I(mix)={im} > {}", t * i1 + (1.0 - t) * i2);
    }

    #[test]
    fn payoff_minus_rate_never_exceeds_log_rho((g, f, _) in graph_and_two_frequencies()) {
        let rho = growth::perron(&g).unwrap().rho;
        let i = growth::rate_function(&g, &f).unwrap().value;
        let r = growth::reproductive_payoff(&g, &f).unwrap();
        prop_assert!(r - i <= rho.ln() + 1e-9);
    }

    #[test]
    fn rate_function_vanishes_at_stationary(seed in any::<u64>(), k in 2usize..=8, density in 0.0f64..0.6) {
        let g = graph_from(seed, k, density);
        let u = disperser::stationary(&g).unwrap().u;
        let i = growth::rate_function(&g, &u).unwrap().value;
        prop_assert!(i.abs() <= 1e-10, "I(u) = {i}");
    }

    #[test]
    fn scaling_means_scales_rho_and_keeps_phi(
        seed in any::<u64>(),
        k in 2usize..=8,
        density in 0.0f64..0.6,
        c in 0.1f64..10.0,
    ) {
        let g = graph_from(seed, k, density);
        let scaled: BTreeMap<usize, f64> = g.mean_offspring().iter().map(|(&h, &m)| (h, c * m)).collect();
        let h = g.with_means(scaled);
        let a = growth::perron(&g).unwrap();
        let b = growth::perron(&h).unwrap();
        prop_assert!((b.rho - c * a.rho).abs() <= 1e-10 * b.rho);
        for (x, y) in a.phi.iter().zip(&b.phi) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        let va = growth::growth_variational(&g).unwrap();
        let vb = growth::growth_variational(&h).unwrap();
        prop_assert!((vb.log_rho - va.log_rho - c.ln()).abs() <= 1e-8);
    }

    #[test]
    fn criterion_sign_matches_perron_root(seed in any::<u64>(), k in 2usize..=10, density in 0.0f64..0.6) {
        let g = graph_from(seed, k, density);
        let rho = growth::perron(&g).unwrap().rho;
        let v = persistence::criterion_general(&g).unwrap();
        let c = v.criterion_value;
        if (rho - 1.0).abs() > 1e-6 && (c - 1.0).abs() > 1e-6 {
            prop_assert_eq!(c > 1.0, rho > 1.0, "criterion {} vs rho {}", c, rho);
        }
    }

    #[test]
    fn short_sink_sojourns_imply_persistence(seed in any::<u64>(), n in 1usize..=12) {
        let mut rng: StreamRng = rng::stream(seed, Domain::Corpus, 3);
        let c = corpus::random_pipeline(&mut rng, n);
        let g = build_cycle_pipeline(&c).unwrap();
        let v = persistence::criterion_two_habitat_on(&g).unwrap();
        if v.diagnostics.get("sojourn_sufficient") == Some(&1.0) {
            prop_assert!(v.criterion_value > 1.0);
        }
    }

    #[test]
    fn depleting_rate_exceeds_jensen_bound(seed in any::<u64>(), n in 1usize..=20) {
        let mut rng: StreamRng = rng::stream(seed, Domain::Corpus, 4);
        let c = corpus::random_pipeline(&mut rng, n);
        let g = build_cycle_pipeline(&c).unwrap();
        let e = disperser::depleting_rate(&g, &[0]).unwrap();
        let es = disperser::mean_sink_sojourn(&g, &[0]).unwrap();
        prop_assert!(e >= c.sink_mean.powf(es) - 1e-12, "e={e} m^ES={}", c.sink_mean.powf(es));
    }

    #[test]
    fn lineage_favours_the_better_habitat(
        big_m in 1.01f64..4.0,
        m in 0.01f64..1.0,
        p in 0.02f64..0.98,
        q in 0.02f64..0.98,
    ) {
        let g = build_two_patch(big_m, m, p, q).unwrap();
        let u = disperser::stationary(&g).unwrap().u;
        let phi = growth::perron(&g).unwrap().phi;
        prop_assert!(phi[0] > u[0] + 1e-9, "phi {:?} u {:?}", phi, u);
    }
}

#[test]
fn variational_routes_agree_on_corpus() {
    for g in corpus::test_corpus(5, 60) {
        let rho = growth::perron(&g).unwrap().rho;
        let chain = WeightedChain::from_graph(&g).unwrap();
        let a = growth::tilted_route(&chain).unwrap();
        let b = growth::direct_route(&chain).unwrap();
        assert_abs_diff_eq!(a.value, rho.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(b.value, rho.ln(), epsilon = 1e-6);
        assert!(a.idt_residual <= 1e-9);
    }
}

#[test]
fn pipeline_of_one_sink_and_symmetric_walks() {
    let mut rng: StreamRng = rng::stream(9, Domain::Corpus, 5);
    for _ in 0..50 {
        let c = corpus::random_pipeline(&mut rng, 1);
        let e = disperser::pipeline_depleting_rate(1, c.left_share, c.right_share, c.s, c.l, c.r, c.sink_mean)
            .unwrap();
        let expect = (1.0 - c.s) * c.sink_mean / (1.0 - c.sink_mean * c.s);
        assert_abs_diff_eq!(e, expect, epsilon = 1e-12);
    }
    for n in [2, 5, 17, 40] {
        let (s, m) = (0.3, 0.6);
        let l = 0.35;
        let base = disperser::pipeline_depleting_rate(n, 0.5, 0.5, s, l, l, m).unwrap();
        for share in [0.0, 0.1, 0.77, 1.0] {
            let e = disperser::pipeline_depleting_rate(n, share, 1.0 - share, s, l, l, m).unwrap();
            assert_abs_diff_eq!(e, base, epsilon = 1e-12);
        }
    }
}
