use carleson_core::bitree::{
    bi_embedding_constant, bitree_bellman_certify, build_bitree, cube_embedding_check,
    dense_bi_embedding_constant, gap_probe, one_box_constant, rect_integrals, set_ratio,
    set_test_constant, BiMeasure, BiTreeShape, BoundaryFunction, CellPrefixSums, GapConfig,
    GapOptimizer, Rect, SetStrategy,
};
use carleson_core::sampling::{random_bimeasure, random_boundary_function, trial_rng};
use proptest::prelude::*;

fn shape(max_sum: u32) -> impl Strategy<Value = BiTreeShape> {
    (0..=max_sum).prop_flat_map(move |n| (Just(n), 0..=max_sum - n)).prop_map(|(n, m)| build_bitree(n, m).unwrap())
}

fn measure(seed: u64, shape: BiTreeShape) -> BiMeasure {
    random_bimeasure(&mut trial_rng(seed, 0), shape)
}

/// Mass of a rectangle by adding its cells one at a time.
fn naive_mass(mu: &BiMeasure, r: Rect) -> f64 {
    let shape = mu.shape();
    let (rows, cols) = shape.cell_ranges(r);
    let mut total = 0.0;
    for row in rows {
        for col in cols.clone() {
            total += mu.cells()[shape.cell_index(row, col)];
        }
    }
    total
}

/// `(A_R, v_R)` for every rectangle from direct sums.
fn naive_points(mu: &BiMeasure) -> Vec<(Rect, f64, f64)> {
    let shape = mu.shape();
    shape
        .rects()
        .map(|r| {
            let inner: f64 = shape.rects().filter(|q| r.contains(q)).map(|q| naive_mass(mu, q).powi(2)).sum();
            (r, inner / r.area(), naive_mass(mu, r) / r.area())
        })
        .collect()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prefix_sums_and_accumulation_match_cell_loops(seed in any::<u64>(), shape in shape(7)) {
        let mu = measure(seed, shape);
        let table = CellPrefixSums::new(shape, mu.cells());
        let masses = mu.rect_masses();
        for r in shape.rects() {
            let direct = naive_mass(&mu, r);
            prop_assert!(close(table.rect(r), direct, 1e-12));
            prop_assert!(close(masses.at(r), direct, 1e-12));
        }
        prop_assert!(close(masses.at(Rect::ROOT), mu.total_mass(), 1e-12));
    }

    #[test]
    fn one_box_matches_direct_sums(seed in any::<u64>(), shape in shape(5)) {
        let mu = measure(seed, shape);
        let best = naive_points(&mu)
            .into_iter()
            .filter(|&(_, _, v)| v > 0.0)
            .map(|(_, a, v)| a / v)
            .fold(0.0, f64::max);
        let ob = one_box_constant(&mu);
        prop_assert!(close(ob.value, best, 1e-12));
    }

    /// `A_R <= v_R` everywhere exactly when the one-box constant is at most 1.
    #[test]
    fn pointwise_domain_iff_one_box(seed in any::<u64>(), shape in shape(5), target in prop_oneof![0.2..0.9f64, 1.1..5.0f64]) {
        let raw = measure(seed, shape);
        let mu = raw.scaled(target / one_box_constant(&raw).value);
        let pointwise = naive_points(&mu).iter().all(|&(_, a, v)| a <= v * (1.0 + 1e-12));
        prop_assert_eq!(pointwise, one_box_constant(&mu).value <= 1.0);
        prop_assert_eq!(pointwise, target < 1.0);
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), shape in shape(6), t in 0.01..100.0f64) {
        let mu = measure(seed, shape);
        let scaled = mu.scaled(t);
        prop_assert!(close(one_box_constant(&scaled).value, t * one_box_constant(&mu).value, 1e-12));
        let e = bi_embedding_constant(&mu, 1e-12, 100_000).value;
        let et = bi_embedding_constant(&scaled, 1e-12, 100_000).value;
        prop_assert!(close(et, t * e, 1e-9));
    }

    #[test]
    fn power_iteration_matches_dense(seed in any::<u64>(), shape in shape(6)) {
        let mu = measure(seed, shape);
        let power = bi_embedding_constant(&mu, 1e-12, 100_000);
        prop_assert!(power.converged);
        prop_assert!(close(power.value, dense_bi_embedding_constant(&mu).unwrap(), 1e-8));
    }

    #[test]
    fn set_test_sits_between_one_box_and_embedding(seed in any::<u64>(), shape in shape(4)) {
        let mu = measure(seed, shape);
        let one_box = one_box_constant(&mu).value;
        let embedding = bi_embedding_constant(&mu, 1e-12, 100_000).value;
        let strategy = if shape.cell_count() <= 16 { SetStrategy::Exhaustive } else { SetStrategy::RectUnions { k: 2 } };
        let set = set_test_constant(&mu, strategy).unwrap();
        prop_assert!(set.value >= one_box * (1.0 - 1e-12));
        prop_assert!(set.value <= embedding * (1.0 + 1e-9) + 1e-9);
        let mut members = vec![false; shape.cell_count()];
        for &i in &set.witness {
            members[i] = true;
        }
        prop_assert!(close(set_ratio(&mu, &members).unwrap(), set.value, 1e-12));
        let singles = set_test_constant(&mu, SetStrategy::RectUnions { k: 1 }).unwrap();
        prop_assert!(close(singles.value, one_box, 1e-12));
    }

    #[test]
    fn cube_embedding_on_normalized_measures(seed in any::<u64>(), shape in shape(7), signed in any::<bool>()) {
        let mut rng = trial_rng(seed, 1);
        let mu = random_bimeasure(&mut rng, shape).normalized();
        let phi = random_boundary_function(&mut rng, shape, !signed);
        let check = cube_embedding_check(&mu, &phi).unwrap();
        prop_assert!(check.passes, "{check:?}");
    }

    #[test]
    fn certificates_hold(seed in any::<u64>(), shape in shape(6), signed in any::<bool>()) {
        let mut rng = trial_rng(seed, 2);
        let mu = random_bimeasure(&mut rng, shape).normalized();
        let phi = random_boundary_function(&mut rng, shape, !signed);
        let cert = bitree_bellman_certify(&mu, &phi).unwrap();
        prop_assert!(cert.holds(), "{:?}", cert.failing_rows().next());
        prop_assert_eq!(cert.rows.len(), shape.rect_count());
        for row in &cert.rows {
            prop_assert!(row.martingale_residual <= 1e-12);
            prop_assert!(row.carleson_gain >= row.gain_floor - 1e-12 * row.gain_floor.max(1.0));
        }
        let integrals = rect_integrals(&mu, &phi).unwrap();
        let total: f64 = shape.rects().map(|r| r.area() * integrals.at(r).powi(2)).sum();
        prop_assert!(close(cert.total, total, 1e-12));
        prop_assert!(close(cert.telescoped, cert.telescoped_by_coefficient, 1e-9));
    }

    #[test]
    fn gap_is_at_least_one(seed in any::<u64>(), shape in shape(4), anneal in any::<bool>()) {
        let optimizer = if anneal { GapOptimizer::Anneal } else { GapOptimizer::Random };
        let report = gap_probe(&GapConfig { shape, trials: 20, seed, optimizer });
        prop_assert!(report.best_gap >= 1.0 - 1e-10);
        for step in &report.trajectory {
            prop_assert!(step.gap >= 1.0 - 1e-10);
        }
    }
}

#[test]
fn uniform_rectangle_integrals() {
    let shape = build_bitree(2, 1).unwrap();
    let mu = BiMeasure::uniform(shape, 1.0);
    let ints = rect_integrals(&mu, &BoundaryFunction::constant(shape, 2.0)).unwrap();
    for r in shape.rects() {
        assert!((ints.at(r) - 2.0 * r.area()).abs() < 1e-15);
    }
}
