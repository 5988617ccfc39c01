use contagion_core::contagion::{
    self, CascadeConfig, DecayGrid, DiffusionParams, DiffusionSolver, DistressState,
};
use contagion_core::graph::{self, WeightedNetwork};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_graph(n: usize, p: f64, seed: u64) -> WeightedNetwork {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.1..3.0)));
            }
        }
    }
    WeightedNetwork::from_edges(n, &edges).unwrap()
}

fn arb_case() -> impl Strategy<Value = (WeightedNetwork, DistressState)> {
    (2usize..30, 0.0f64..1.0, any::<u64>()).prop_flat_map(|(n, p, seed)| {
        proptest::collection::vec(0.0f64..5.0, n)
            .prop_map(move |u| (random_graph(n, p, seed), DistressState { u, t: 0.0 }))
    })
}

/// Explicit Euler steps of du/dt = -(D L + κ I) u.
fn euler(net: &WeightedNetwork, p: &DiffusionParams, u0: &[f64], t: f64) -> Vec<f64> {
    let l = net.laplacian();
    let lambda_n = graph::laplacian_spectrum(net).unwrap().lambda_n();
    let dt = 1e-4 / (p.d * lambda_n + p.kappa);
    let steps = (t / dt).ceil() as usize;
    let dt = t / steps as f64;
    let mut u = DVector::from_column_slice(u0);
    for _ in 0..steps {
        let du = (&l * &u) * p.d + &u * p.kappa;
        u -= du * dt;
    }
    u.iter().copied().collect()
}

proptest! {
    #[test]
    fn total_distress_conserved_or_decays((net, u0) in arb_case(), kappa in prop_oneof![Just(0.0), 0.01f64..2.0]) {
        let p = DiffusionParams::new(1.3, kappa);
        let solver = DiffusionSolver::new(&net, &p).unwrap();
        let m0 = u0.total();
        prop_assume!(m0 > 0.0);
        for t in [0.1, 1.0, 10.0] {
            let m = solver.solve(&u0, t).unwrap().total();
            let want = m0 * (-kappa * t).exp();
            prop_assert!((m - want).abs() <= 1e-8 * m0, "t={} m={} want={}", t, m, want);
        }
    }

    #[test]
    fn distress_stays_non_negative((net, u0) in arb_case()) {
        let solver = DiffusionSolver::new(&net, &DiffusionParams::new(0.7, 0.1)).unwrap();
        for t in [0.01, 0.1, 1.0, 10.0] {
            prop_assert!(solver.solve(&u0, t).unwrap().u.iter().all(|v| *v >= -1e-10));
        }
    }

    #[test]
    fn eigenmodes_never_grow((net, u0) in arb_case()) {
        let solver = DiffusionSolver::new(&net, &DiffusionParams::new(1.0, 0.05)).unwrap();
        let mut prev = solver.modes(&u0.u).unwrap().abs();
        for t in [0.05, 0.2, 1.0, 5.0] {
            let now = solver.modes(&solver.solve(&u0, t).unwrap().u).unwrap().abs();
            for (a, b) in now.iter().zip(prev.iter()).skip(1) {
                prop_assert!(*a <= *b + 1e-12);
            }
            prev = now;
        }
    }

    #[test]
    fn effective_decay_monotone(l in 0.1f64..1e4, d in 0.1f64..10.0, k in 0.0f64..5.0, step in 0.01f64..1.0) {
        let base = contagion::effective_decay(l, &DiffusionParams::new(d, k)).unwrap();
        prop_assert!(contagion::effective_decay(l + step, &DiffusionParams::new(d, k)).unwrap() > base);
        prop_assert!(contagion::effective_decay(l, &DiffusionParams::new(d, k + step)).unwrap() > base);
        prop_assert!(contagion::effective_decay(l, &DiffusionParams::new(d + step, k)).unwrap() < base);
    }

    #[test]
    fn cascade_bounds(seed in any::<u64>(), n in 2usize..15, s0 in 0.1f64..10.0, theta in 0.1f64..5.0, kappa in 0.0f64..0.9) {
        let net = random_graph(n, 0.3, seed);
        let cfg = CascadeConfig { source: 0, s0, theta, kappa };
        let size = contagion::cascade(&net, &cfg).unwrap();
        let reach = net.components().into_iter().find(|c| c.contains(&0)).unwrap().len();
        prop_assert!(size <= reach);
        prop_assert_eq!(size == 0, s0 <= theta);
        prop_assert_eq!(size, contagion::cascade(&net, &cfg).unwrap());
    }
}

#[test]
fn spectral_solution_matches_euler() {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for k in 0..10 {
        let n = rng.random_range(3..=15);
        let net = random_graph(n, 0.4, k);
        let p = DiffusionParams::new(rng.random_range(0.5..2.0), rng.random_range(0.0..0.5));
        let u0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let spectral = contagion::solve_diffusion(&net, &p, &DistressState { u: u0.clone(), t: 0.0 }, 1.0).unwrap();
        let stepped = euler(&net, &p, &u0, 1.0);
        let norm = stepped.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = spectral.u.iter().zip(&stepped).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-4 * norm, "graph {k}: {err} vs {norm}");
    }
}

#[test]
fn decay_rate_fit() {
    let k6 = random_graph(6, 1.0, 0);
    let edges: Vec<_> = (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j, 1.0))).collect();
    let k6_unit = WeightedNetwork::from_edges(6, &edges).unwrap();
    for (net, p) in [
        (k6_unit, DiffusionParams::new(1.0, 0.0)),
        (k6, DiffusionParams::new(1.0, 0.3)),
        (random_graph(12, 0.3, 9), DiffusionParams::new(0.8, 0.2)),
    ] {
        let c = contagion::verify_decay_rate(&net, &p, &DistressState::impulse(net.len(), 0), &DecayGrid::default())
            .unwrap();
        assert!(c.relative_error < 0.01, "{c:?}");
    }
}

/// The loop stops as soon as no new bank crosses the threshold, so entry
/// timing decides how much each bank passes on. Cascade size is therefore
/// not monotone in either the shock or the threshold.
#[test]
fn cascade_size_is_not_monotone() {
    let w = |n: usize, e: &[(usize, usize, f64)]| WeightedNetwork::from_edges(n, e).unwrap();
    let five = w(5, &[(0, 1, 0.25), (0, 2, 0.5), (0, 3, 2.0), (1, 2, 0.25), (1, 4, 0.5), (2, 3, 2.0), (2, 4, 0.25)]);
    let cfg = |s0, theta| CascadeConfig { source: 0, s0, theta, kappa: 0.0 };
    assert_eq!(contagion::cascade(&five, &cfg(3.0, 1.0)).unwrap(), 4);
    assert_eq!(contagion::cascade(&five, &cfg(3.0, 1.5)).unwrap(), 5);

    let four = w(4, &[(0, 1, 0.5), (0, 3, 2.0), (1, 2, 0.5), (1, 3, 0.5)]);
    assert_eq!(contagion::cascade(&four, &cfg(3.0, 2.0)).unwrap(), 4);
    assert_eq!(contagion::cascade(&four, &cfg(4.5, 2.0)).unwrap(), 3);
}
