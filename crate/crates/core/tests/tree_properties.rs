use carleson_core::carleson::{
    alpha_test_constant, carleson_ratios, dense_embedding_constant, embedding_constant,
    embedding_lhs, embedding_pair_check, normalize_alpha_test, AlphaSequence,
};
use carleson_core::sampling::{random_alpha, random_node_function, random_tree_measure, trial_rng};
use carleson_core::tree::{
    box_average, box_integral, build_tree, hardy_down, hardy_up, potential, NodeValues,
    NodeVector, SupportMode, TreeMeasure, TreeShape,
};
use proptest::prelude::*;

fn shape_and_vectors(max_depth: u32) -> impl Strategy<Value = (TreeShape, Vec<f64>, Vec<f64>)> {
    (0..=max_depth).prop_flat_map(|depth| {
        let shape = build_tree(depth).unwrap();
        let n = shape.node_count();
        (
            Just(shape),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    })
}

fn mode_of(flag: bool) -> SupportMode {
    if flag {
        SupportMode::AllNodes
    } else {
        SupportMode::BoundaryOnly
    }
}

fn random_measure(seed: u64, depth: u32, all_nodes: bool) -> TreeMeasure {
    let mut rng = trial_rng(seed, 0);
    random_tree_measure(&mut rng, build_tree(depth).unwrap(), mode_of(all_nodes))
}

/// Subtree sums by walking every node's ancestor chain.
fn naive_down(shape: TreeShape, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; shape.node_count()];
    for k in shape.nodes() {
        let mut a = k;
        while a >= 1 {
            out[a - 1] += values[k - 1];
            a /= 2;
        }
    }
    out
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

const OPERATORS: [fn(&NodeVector) -> NodeVector; 2] = [|v| hardy_up(v), |v| hardy_down(v)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn duality((shape, f, g) in shape_and_vectors(8)) {
        let f = NodeVector::new(shape, f).unwrap();
        let g = NodeVector::new(shape, g).unwrap();
        let left = hardy_up(&f).dot(&g).unwrap();
        let right = f.dot(&hardy_down(&g)).unwrap();
        let scale: f64 = f.values().iter().map(|x| x.abs()).sum::<f64>()
            * g.values().iter().map(|x| x.abs()).sum::<f64>();
        prop_assert!((left - right).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn hardy_operators_are_linear((shape, f, g) in shape_and_vectors(7), s in -3.0..3.0f64) {
        let combo = NodeVector::from_fn(shape, |k| f[k - 1] + s * g[k - 1]);
        let f = NodeVector::new(shape, f).unwrap();
        let g = NodeVector::new(shape, g).unwrap();
        for op in OPERATORS {
            let (lhs, a, b) = (op(&combo), op(&f), op(&g));
            for k in shape.nodes() {
                prop_assert!((lhs.at(k) - (a.at(k) + s * b.at(k))).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn hardy_operators_are_monotone((shape, f, g) in shape_and_vectors(7)) {
        let low = NodeVector::from_fn(shape, |k| f[k - 1].abs());
        let high = NodeVector::from_fn(shape, |k| f[k - 1].abs() + g[k - 1].abs());
        for op in OPERATORS {
            let (a, b) = (op(&low), op(&high));
            for k in shape.nodes() {
                prop_assert!(a.at(k) >= 0.0);
                prop_assert!(a.at(k) <= b.at(k));
            }
        }
    }

    #[test]
    fn hardy_down_matches_ancestor_walk((shape, f, _g) in shape_and_vectors(7)) {
        let fast = hardy_down(&NodeVector::new(shape, f.clone()).unwrap());
        let slow = naive_down(shape, &f);
        for k in shape.nodes() {
            prop_assert!((fast.at(k) - slow[k - 1]).abs() <= 1e-10);
        }
    }

    #[test]
    fn potential_and_box_identities(seed in any::<u64>(), depth in 0u32..8, all in any::<bool>()) {
        let mu = random_measure(seed, depth, all);
        let down = hardy_down(&mu);
        prop_assert_eq!(potential(&mu), hardy_up(&down));
        prop_assert!(close(down.at(TreeShape::ROOT), mu.total_mass(), 1e-14));
        for k in mu.shape().nodes() {
            prop_assert!(close(box_integral(&mu, k).unwrap(), down.at(k), 1e-14));
            prop_assert!(close(box_average(&mu, k).unwrap(), down.at(k) / TreeShape::interval_length(k), 1e-14));
        }
    }

    #[test]
    fn ratios_match_direct_summation(seed in any::<u64>(), depth in 0u32..7, all in any::<bool>()) {
        let mu = random_measure(seed, depth, all);
        let shape = mu.shape();
        let masses = naive_down(shape, mu.masses());
        let result = carleson_ratios(&mu);
        let mut best: f64 = 0.0;
        for r in shape.nodes() {
            let inner: f64 = shape
                .nodes()
                .filter(|&q| TreeShape::is_descendant(q, r))
                .map(|q| masses[q - 1].powi(2))
                .sum();
            let ratio = if masses[r - 1] > 0.0 { inner / masses[r - 1] } else { 0.0 };
            prop_assert!(close(result.ratios.at(r), ratio, 1e-12));
            best = best.max(ratio);
        }
        prop_assert!(close(result.test_constant, best, 1e-12));
        prop_assert_eq!(result.ratios.at(result.argmax_node), result.test_constant);
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), depth in 1u32..8, all in any::<bool>(), t in 0.01..100.0f64, power in -8i32..8) {
        let mu = random_measure(seed, depth, all);
        let base = carleson_ratios(&mu);
        let scaled = carleson_ratios(&mu.scaled(t));
        prop_assert!(close(scaled.test_constant, t * base.test_constant, 1e-12));
        let dyadic = carleson_ratios(&mu.scaled(2f64.powi(power)));
        prop_assert_eq!(dyadic.argmax_node, base.argmax_node);

        let e = embedding_constant(&mu, 1e-12, 100_000).embedding_constant;
        let et = embedding_constant(&mu.scaled(t), 1e-12, 100_000).embedding_constant;
        prop_assert!(close(et, t * e, 1e-9));
    }

    #[test]
    fn sandwich_and_dense_oracle(seed in any::<u64>(), depth in 0u32..8, all in any::<bool>()) {
        let mu = random_measure(seed, depth, all);
        let check = embedding_pair_check(&mu);
        prop_assert!(check.holds(), "{:?}", check);
        let dense = dense_embedding_constant(&mu).unwrap();
        prop_assert!(close(check.report.embedding_constant, dense, 1e-8));
    }

    #[test]
    fn squared_lengths_reproduce_the_test_constant(seed in any::<u64>(), depth in 0u32..8, all in any::<bool>()) {
        let mu = random_measure(seed, depth, all);
        let alpha = AlphaSequence::squared_lengths(mu.shape());
        let (weighted, _) = alpha_test_constant(&mu, &alpha).unwrap();
        prop_assert!(close(weighted, carleson_ratios(&mu).test_constant, 1e-12));
    }

    #[test]
    fn weighted_embedding_has_constant_four(seed in any::<u64>(), depth in 0u32..8, all in any::<bool>()) {
        let mut rng = trial_rng(seed, 1);
        let shape = build_tree(depth).unwrap();
        let raw = random_tree_measure(&mut rng, shape, mode_of(all));
        let alpha = random_alpha(&mut rng, shape);
        let lambda = normalize_alpha_test(&raw, &alpha).unwrap();
        prop_assert!(alpha_test_constant(&lambda, &alpha).unwrap().0 <= 1.0 + 1e-12);
        let phi = random_node_function(&mut rng, shape, false);
        let sides = embedding_lhs(&phi, &lambda, &alpha).unwrap();
        prop_assert!(sides.lhs <= 4.0 * sides.rhs * (1.0 + 1e-9));
    }

    /// With `alpha = |I|^2` the weighted sum is the quadratic form whose top
    /// eigenvalue is the embedding constant.
    #[test]
    fn weighted_form_is_bounded_by_embedding_constant(seed in any::<u64>(), depth in 0u32..7, all in any::<bool>()) {
        let mut rng = trial_rng(seed, 2);
        let shape = build_tree(depth).unwrap();
        let lambda = random_tree_measure(&mut rng, shape, mode_of(all));
        let phi = random_node_function(&mut rng, shape, false);
        let sides = embedding_lhs(&phi, &lambda, &AlphaSequence::squared_lengths(shape)).unwrap();
        let c = embedding_constant(&lambda, 1e-12, 100_000).embedding_constant;
        prop_assert!(sides.lhs <= c * sides.rhs * (1.0 + 1e-9) + 1e-300);
    }
}

#[test]
fn point_mass_embedding_is_depth_plus_one() {
    for depth in 0..=10u32 {
        let shape = build_tree(depth).unwrap();
        let mu = TreeMeasure::point_mass(shape, shape.node_count(), 1.0).unwrap();
        let report = embedding_constant(&mu, 1e-12, 1000);
        assert!((report.embedding_constant - f64::from(depth + 1)).abs() < 1e-12);
        assert_eq!(report.test_constant, f64::from(depth + 1));
    }
}
