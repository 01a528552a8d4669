use std::sync::OnceLock;

use proptest::prelude::*;

use hatwalk::closed_forms::HatKernelContext;
use hatwalk::kernel::oracle::{a_integral, a_series};
use hatwalk::lattice::{boundary, diam, dist, enumerate_ball, external_boundary, Ball, Site, SiteSet};

fn ctx() -> &'static HatKernelContext {
    static CTX: OnceLock<HatKernelContext> = OnceLock::new();
    CTX.get_or_init(|| HatKernelContext::with_window(256).unwrap())
}

fn site(r: i64) -> impl Strategy<Value = Site> {
    (-r..=r, -r..=r).prop_map(|(a, b)| Site::new(a, b))
}

fn nonzero_site(r: i64) -> impl Strategy<Value = Site> {
    site(r).prop_filter("origin", |s| !s.is_origin())
}

fn site_set(r: i64, max: usize) -> impl Strategy<Value = SiteSet> {
    prop::collection::vec(site(r), 1..=max).prop_map(|v| SiteSet::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dist_and_diam_are_dihedral_invariant(set in site_set(12, 6), x in site(20), k in 0u8..8) {
        let g = set.map(|s| s.dihedral(k));
        prop_assert_eq!(diam(&g), diam(&set));
        prop_assert_eq!(dist(x.dihedral(k), &g), dist(x, &set));
    }

    #[test]
    fn boundaries_are_consistent(set in site_set(6, 10)) {
        let inner = boundary(&set);
        let outer = external_boundary(&set);
        prop_assert!(inner.iter().all(|s| set.contains(s)));
        prop_assert!(outer.iter().all(|s| !set.contains(s)));
        for s in outer.iter() {
            prop_assert!(s.neighbors().iter().any(|n| set.contains(*n)));
        }
        for s in set.iter() {
            let exposed = s.neighbors().iter().any(|n| !set.contains(*n));
            prop_assert_eq!(inner.contains(s), exposed);
        }
    }

    #[test]
    fn ball_enumeration_is_monotone(r in 1.0f64..30.0, dr in 0.0f64..5.0) {
        let small = enumerate_ball(&Ball::centered(r).unwrap(), 1 << 20).unwrap();
        let big = enumerate_ball(&Ball::centered(r + dr).unwrap(), 1 << 20).unwrap();
        prop_assert!(small.len() <= big.len());
        prop_assert!(small.iter().all(|s| big.contains(s)));
    }

    #[test]
    fn kernel_is_dihedral_invariant(x in site(300), k in 0u8..8) {
        let t = ctx().kernel();
        prop_assert_eq!(t.a_eval(x), t.a_eval(x.dihedral(k)));
    }

    #[test]
    fn kernel_is_harmonic_in_window(x in nonzero_site(255)) {
        let t = ctx().kernel();
        let mean = x.neighbors().iter().map(|n| t.a_eval(*n)).sum::<f64>() / 4.0;
        prop_assert!((mean - t.a_eval(x)).abs() <= 1e-12 * t.a_eval(x).max(1.0));
    }

    #[test]
    fn asymptotic_form_error_is_bounded_beyond_window(x in site(2000).prop_filter("far", |s| !ctx().kernel().in_window(*s))) {
        let t = ctx().kernel();
        let v = hatwalk::kernel::a_asym(x).unwrap();
        prop_assert_eq!(t.a_eval(x), v);
        prop_assert!(t.a_eval_error(x) <= 0.06 / x.norm2() as f64);
    }

    #[test]
    fn transition_rows_are_stochastic(x in nonzero_site(255)) {
        let c = ctx();
        let total: f64 = x.neighbors().iter().map(|z| c.p_hat(x, *z).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert_eq!(c.p_hat(x, Site::ORIGIN).unwrap(), 0.0);
    }

    #[test]
    fn chain_is_reversible(x in nonzero_site(200), d in 0usize..4) {
        let c = ctx();
        let y = x.neighbors()[d];
        prop_assume!(!y.is_origin());
        let (ax, ay) = (c.a(x), c.a(y));
        let lhs = ax * ax * c.p_hat(x, y).unwrap();
        let rhs = ay * ay * c.p_hat(y, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn green_functions_are_harmonic_off_target(x in nonzero_site(21), y in nonzero_site(21)) {
        prop_assume!(x != y && x.norm() <= 30.0 && y.norm() <= 30.0);
        let c = ctx();
        type F = fn(&HatKernelContext, Site, Site) -> hatwalk::Result<f64>;
        let fs: [(&str, F); 3] = [
            ("green_hat", HatKernelContext::green_hat),
            ("g_hat", HatKernelContext::g_hat),
            ("ell_hat", HatKernelContext::ell_hat),
        ];
        for (name, f) in fs {
            let mean: f64 = x
                .neighbors()
                .iter()
                .filter(|z| !z.is_origin())
                .map(|z| c.p_hat(x, *z).unwrap() * f(c, *z, y).unwrap())
                .sum();
            let here = f(c, x, y).unwrap();
            prop_assert!((mean - here).abs() <= 1e-10, "{name} at x={x} y={y}: {mean} vs {here}");
        }
    }

    #[test]
    fn green_is_geometric_in_visits(x in nonzero_site(30), y in nonzero_site(30)) {
        prop_assume!(x != y);
        let c = ctx();
        let lhs = c.green_hat(x, y).unwrap();
        let rhs = c.hit_prob_hat(x, y).unwrap() * c.green_hat(y, y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        prop_assert_eq!(c.g_hat(x, y).unwrap(), c.g_hat(y, x).unwrap());
        prop_assert!((c.green_hat(y, y).unwrap() - 1.0 / (1.0 - c.return_prob_hat(y).unwrap())).abs() <= 1e-12 * c.green_hat(y, y).unwrap());
    }

    #[test]
    fn hit_probability_is_a_probability(x in nonzero_site(30), y in nonzero_site(30)) {
        prop_assume!(x != y);
        let p = ctx().hit_prob_hat(x, y).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn table_matches_integral_oracle(x in site(8)) {
        let exact = ctx().kernel().a_exact(x).unwrap();
        let oracle = a_integral(x).unwrap();
        prop_assert!((exact - oracle).abs() <= 1e-9, "{x}: {exact} vs {oracle}");
    }

    #[test]
    fn table_matches_series_within_tail_bound(x in site(8)) {
        let exact = ctx().kernel().a_exact(x).unwrap();
        let s = a_series(x, 20_000).unwrap();
        prop_assert!((exact - s.partial_sum).abs() <= s.tail_bound + 1e-12, "{x}: {exact} vs {:?}", s);
    }
}
