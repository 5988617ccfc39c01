use contagion_core::graph::{self, SolverChoice, WeightedNetwork, ZERO_EIGEN_TOL};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Random weighted graph; a chain through all nodes keeps it connected.
fn random_graph(n: usize, p: f64, seed: u64) -> WeightedNetwork {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random_bool(p) {
                edges.push((i, j, rng.random_range(0.1..10.0)));
            }
        }
    }
    WeightedNetwork::from_edges(n, &edges).unwrap()
}

fn arb_graph() -> impl Strategy<Value = WeightedNetwork> {
    (3usize..30, 0.0f64..1.0, any::<u64>()).prop_map(|(n, p, seed)| random_graph(n, p, seed))
}

/// Graph that may be disconnected.
fn arb_loose_graph() -> impl Strategy<Value = WeightedNetwork> {
    (3usize..25, proptest::collection::vec((0usize..25, 0usize..25, 0.1f64..5.0), 1..40)).prop_filter_map(
        "needs an edge",
        |(n, raw)| {
            let edges: Vec<_> = raw.into_iter().filter(|(i, j, _)| i != j && *i < n && *j < n).collect();
            (!edges.is_empty()).then(|| WeightedNetwork::from_edges(n, &edges).unwrap())
        },
    )
}

proptest! {
    #[test]
    fn laplacian_rows_sum_to_zero(net in arb_graph()) {
        let l = net.laplacian();
        let dmax = graph::degree_sequence(&net, true).into_iter().fold(0.0, f64::max);
        for row in l.row_iter() {
            prop_assert!(row.sum().abs() <= 1e-10 * dmax.max(1.0));
        }
    }

    #[test]
    fn eigenvalues_sum_to_trace(net in arb_graph()) {
        let s = graph::laplacian_spectrum(&net).unwrap();
        let trace: f64 = graph::degree_sequence(&net, true).iter().sum();
        let sum: f64 = s.eigenvalues.iter().sum();
        prop_assert!((sum - trace).abs() <= 1e-8 * trace);
    }

    #[test]
    fn spectrum_shape(net in arb_loose_graph()) {
        let s = graph::laplacian_spectrum(&net).unwrap();
        let top = s.lambda_n().max(1.0);
        prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(s.eigenvalues[0].abs() < ZERO_EIGEN_TOL * top);
        let zeros = s.eigenvalues.iter().filter(|v| v.abs() < ZERO_EIGEN_TOL * top).count();
        prop_assert_eq!(zeros, s.component_sizes.len());
        let q = DVector::from_vec(s.fiedler_vector.clone());
        prop_assert!((q.norm() - 1.0).abs() < 1e-10);
        let on_lcc: f64 = s.largest_component.iter().map(|&i| q[i]).sum();
        prop_assert!(on_lcc.abs() < 1e-8);
    }

    #[test]
    fn fiedler_residual(net in arb_graph()) {
        let s = graph::laplacian_spectrum(&net).unwrap();
        let q = DVector::from_vec(s.fiedler_vector.clone());
        let r = net.laplacian() * &q - &q * s.lambda2;
        prop_assert!(r.norm() <= 1e-8 * s.lambda_n().max(1.0));
    }

    #[test]
    fn weight_scaling(net in arb_graph()) {
        let base = graph::laplacian_spectrum(&net).unwrap();
        for c in [2.0, 0.5] {
            let s = graph::laplacian_spectrum(&net.scaled(c)).unwrap();
            for (a, b) in s.eigenvalues.iter().zip(&base.eigenvalues) {
                prop_assert!((a - c * b).abs() <= 1e-9 * base.lambda_n().max(1.0) * c.max(1.0));
            }
        }
    }

    #[test]
    fn concentration_scale_invariant(net in arb_graph(), c in 0.01f64..100.0) {
        let a = graph::topology_report(&net).unwrap();
        let b = graph::topology_report(&net.scaled(c)).unwrap();
        prop_assert!((a.gini - b.gini).abs() < 1e-12);
        prop_assert!((a.hhi - b.hhi).abs() < 1e-12);
        let n = a.n_nodes as f64;
        prop_assert!(a.hhi >= 1.0 / n - 1e-12 && a.hhi <= 1.0 + 1e-12);
        prop_assert!((0.0..1.0).contains(&a.gini));
        prop_assert!(a.cr3 <= a.top_k_share[&5] + 1e-15 && a.top_k_share[&5] <= a.top_k_share[&10] + 1e-15);
    }
}

#[test]
fn complete_graph_connectivity() {
    for n in 3..=50 {
        for w in [0.5, 1.0, 3.0] {
            let mut m = DMatrix::from_element(n, n, w);
            m.fill_diagonal(0.0);
            let net = WeightedNetwork::from_weights((0..n).map(|i| i.to_string()).collect(), m).unwrap();
            let s = graph::laplacian_spectrum(&net).unwrap();
            assert!((s.lambda2 - n as f64 * w).abs() < 1e-9, "n={n} w={w}: {}", s.lambda2);
        }
    }
}

#[test]
fn dense_and_lanczos_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    for k in 0..10 {
        let n = rng.random_range(20..=100);
        let net = random_graph(n, rng.random_range(0.05..0.6), 100 + k);
        let d = graph::laplacian_spectrum_with(&net, SolverChoice::Dense).unwrap();
        let l = graph::laplacian_spectrum_with(&net, SolverChoice::Lanczos).unwrap();
        assert!((d.lambda2 - l.lambda2).abs() <= 1e-6 * d.lambda2, "n={n}: {} vs {}", d.lambda2, l.lambda2);
        let q = DVector::from_vec(l.fiedler_vector.clone());
        let r = net.laplacian() * &q - &q * l.lambda2;
        assert!(r.norm() <= 1e-8 * d.lambda_n().max(1.0));
    }
}

#[test]
fn large_networks_use_lanczos() {
    let net = random_graph(160, 0.1, 5);
    let auto = graph::laplacian_spectrum(&net).unwrap();
    assert_eq!(auto.solver, SolverChoice::Lanczos);
    assert!(!auto.spectrum_complete);
    let dense = graph::laplacian_spectrum_with(&net, SolverChoice::Dense).unwrap();
    assert!((auto.lambda2 - dense.lambda2).abs() <= 1e-6 * dense.lambda2);
}

#[test]
fn spectrum_serializes() {
    let net = random_graph(6, 0.5, 1);
    let s = graph::laplacian_spectrum(&net).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    let back: graph::SpectrumResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
    let t = graph::topology_report(&net).unwrap();
    let back: graph::TopologyReport = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    assert_eq!(back, t);
}
