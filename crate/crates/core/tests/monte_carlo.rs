use hatwalk::closed_forms::HatKernelContext;
use hatwalk::exact_solver::Chain;
use hatwalk::lattice::{Site, SiteSet};
use hatwalk::monte_carlo::{
    estimate_entrance, estimate_green_hat, estimate_hit_prob, replica_rng, step, WalkConfig,
};

fn ctx() -> HatKernelContext {
    HatKernelContext::with_window(256).unwrap()
}

#[test]
fn conditioned_walk_never_visits_the_origin() {
    let c = ctx();
    for k in 0..200 {
        let mut rng = replica_rng(11, k);
        let mut x = Site::new(1, 0);
        for _ in 0..200 {
            x = step(&c, Chain::Hat, x, &mut rng).unwrap();
            assert!(!x.is_origin());
        }
    }
}

#[test]
fn estimates_are_reproducible_and_seed_dependent() {
    let c = ctx();
    let (x, y) = (Site::new(2, 1), Site::new(1, 0));
    let cfg = WalkConfig::new(Chain::Hat, 64.0, 5, 2000);
    let a = estimate_green_hat(&c, x, y, &cfg).unwrap();
    let b = estimate_green_hat(&c, x, y, &cfg).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    let other = estimate_green_hat(&c, x, y, &cfg.with_seed(6)).unwrap();
    assert_ne!(a.mean.to_bits(), other.mean.to_bits());
}

#[test]
fn green_and_hit_estimates_agree_with_closed_forms() {
    let c = ctx();
    let cfg = WalkConfig::new(Chain::Hat, 128.0, 2024, 20_000);
    for (x, y) in [(Site::new(1, 0), Site::new(1, 0)), (Site::new(3, 2), Site::new(-1, 1))] {
        let g = estimate_green_hat(&c, x, y, &cfg).unwrap();
        assert!(g.agrees_with(c.green_hat(x, y).unwrap(), 3.0), "{x} {y}: {g:?}");
    }
    let x = Site::new(4, -2);
    let y = Site::new(1, 1);
    let h = estimate_hit_prob(&c, x, &SiteSet::singleton(y), &cfg).unwrap();
    assert!(h.agrees_with(c.hit_prob_hat(x, y).unwrap(), 3.0), "{h:?}");
}

#[test]
fn entrance_law_sums_to_one_and_respects_symmetry() {
    let c = ctx();
    let set = SiteSet::new([Site::new(0, 2), Site::new(0, -2)]).unwrap();
    let cfg = WalkConfig::new(Chain::Hat, 128.0, 3, 20_000);
    let e = estimate_entrance(&c, Site::new(10, 0), &set, &cfg).unwrap();
    let total: f64 = e.per_site.iter().map(|(_, est)| est.mean).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (_, est) in &e.per_site {
        assert!(est.agrees_with(0.5, 4.0), "{est:?}");
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let c = ctx();
    let cfg = WalkConfig::new(Chain::Hat, 16.0, 0, 10);
    assert!(estimate_green_hat(&c, Site::new(10, 0), Site::new(1, 0), &cfg).is_err());
    assert!(estimate_green_hat(&c, Site::ORIGIN, Site::new(1, 0), &cfg).is_err());
}
