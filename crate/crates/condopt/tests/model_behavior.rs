//! Contract tests for fitting, conjugacy identities, queries, sampling, and
//! persistence.

use condopt::{
    fit, independence_test, log_predictive_score, simulate, CondOptPrior, Dataset, OptPrior,
    PointMatrix, PosteriorTree, SampleSpace, Scenario, ScenarioKind, TestDirection,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn fit_scenario(kind: ScenarioKind, n: usize, seed: u64) -> PosteriorTree {
    let s = Scenario::new(kind, n, seed);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    fit(&sx, &sy, &s.default_prior(), data).unwrap()
}

/// Every stored node must satisfy the defining mixture recursion, the
/// stop-posterior identity, selection-weight normalization, and the
/// stop-vs-split Bayes-factor identity, all recomputed independently from
/// the node table in log space.
fn check_node_identities(tree: &PosteriorTree, rho: f64) {
    let views: Vec<_> = tree.node_views().collect();
    for v in &views {
        if v.terminal {
            assert_eq!(v.rho_post, 1.0, "node {}", v.id);
            assert_eq!(v.log_phi, v.log_m, "node {}", v.id);
            continue;
        }
        // rho-tilde = rho M / Phi.
        let expect_rho = (rho.ln() + v.log_m - v.log_phi).exp().min(1.0);
        assert!(
            (v.rho_post - expect_rho).abs() <= 1e-12 * expect_rho.max(1e-300),
            "node {}: rho_post {} vs {}",
            v.id,
            v.rho_post,
            expect_rho
        );
        if v.children.is_empty() {
            continue; // single-point node: recursion cut, Phi = M by construction
        }
        let split_terms: Vec<f64> = v
            .children
            .iter()
            .map(|kids| {
                let mut t = 0.0;
                for &k in kids {
                    if k != PosteriorTree::NO_CHILD {
                        t += views[k as usize].log_phi;
                    }
                }
                t
            })
            .collect();
        let n_splits = split_terms.len() as f64;
        let log_split = (1.0 - rho).ln() - n_splits.ln() + log_sum_exp(&split_terms);
        let recomputed = log_sum_exp(&[rho.ln() + v.log_m, log_split]);
        assert!(
            (v.log_phi - recomputed).abs() <= 1e-10 * v.log_phi.abs().max(1.0),
            "node {}: log_phi {} vs recomputed {}",
            v.id,
            v.log_phi,
            recomputed
        );
        let lambda_sum: f64 = v.lambda_post.iter().sum();
        assert!((lambda_sum - 1.0).abs() <= 1e-10, "node {}: lambda sums to {lambda_sum}", v.id);

        // Bayes-factor identity: (rho/(1-rho)) (1/rho_tilde - 1) equals
        // sum_j lambda_j prod_i Phi(child) / M, both sides in log space.
        let log_lhs = {
            // log(1 - rho_tilde) via the mixture decomposition.
            let log_one_minus = log_split - v.log_phi;
            rho.ln() - (1.0 - rho).ln() + log_one_minus - (rho.ln() + v.log_m - v.log_phi)
        };
        let log_rhs = -n_splits.ln() + log_sum_exp(&split_terms) - v.log_m;
        assert!(
            (log_lhs - log_rhs).abs() <= 1e-10 * log_rhs.abs().max(1.0),
            "node {}: BF identity {log_lhs} vs {log_rhs}",
            v.id
        );
    }
}

#[test]
fn empty_data_posterior_equals_prior() {
    let space = SampleSpace::unit_cube(1);
    let prior = CondOptPrior::default();
    let data = Dataset::new(PointMatrix::from_column(vec![]), PointMatrix::from_column(vec![]))
        .unwrap();
    let tree = fit(&space, &space, &prior, data).unwrap();
    assert_eq!(tree.root_rho_post(), prior.rho);
    assert_eq!(tree.root_log_phi(), 0.0);
    assert_eq!(tree.root_log_m(), 0.0);
    // Uniform predictive everywhere.
    for (x, y) in [(0.1, 0.9), (0.5, 0.5), (0.99, 0.01)] {
        assert!((tree.predict_density(&[x], &[y]).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_observation_unit_measure() {
    let space = SampleSpace::unit_cube(1);
    let prior = CondOptPrior::default();
    let data =
        Dataset::new(PointMatrix::from_column(vec![0.3]), PointMatrix::from_column(vec![0.8]))
            .unwrap();
    let tree = fit(&space, &space, &prior, data).unwrap();
    assert_eq!(tree.root_log_phi(), 0.0);
    assert_eq!(tree.root_rho_post(), 0.5);
}

#[test]
fn conjugacy_identities_hold_on_fitted_trees() {
    for (kind, n) in [
        (ScenarioKind::Ex1BetaBlocks, 400),
        (ScenarioKind::Ex2BivariateNormal, 300),
        (ScenarioKind::Ex4IndependenceTest, 200),
        (ScenarioKind::FlowSynthetic, 300),
    ] {
        let tree = fit_scenario(kind, n, 42);
        check_node_identities(&tree, 0.5);
    }
}

#[test]
fn conjugacy_identities_hold_with_asymmetric_prior() {
    let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 150, 9);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = CondOptPrior {
        rho: 0.3,
        local: OptPrior { rho: 0.6, alpha: [0.8, 0.4], max_depth: 6 },
        max_depth_x: 6,
        min_points: 0,
    };
    let tree = fit(&sx, &sy, &prior, data).unwrap();
    check_node_identities(&tree, 0.3);
}

#[test]
fn log_phi_is_permutation_invariant() {
    let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 120, 3);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = s.default_prior();
    let a = fit(&sx, &sy, &prior, data.clone()).unwrap();

    let order: Vec<u32> = (0..data.len() as u32).rev().collect();
    let xr: Vec<Vec<f64>> = order.iter().map(|&i| data.x.row(i).to_vec()).collect();
    let yr: Vec<Vec<f64>> = order.iter().map(|&i| data.y.row(i).to_vec()).collect();
    let reversed = Dataset::new(
        PointMatrix::from_rows(&xr).unwrap(),
        PointMatrix::from_rows(&yr).unwrap(),
    )
    .unwrap();
    let b = fit(&sx, &sy, &prior, reversed).unwrap();
    assert!((a.root_log_phi() - b.root_log_phi()).abs() <= 1e-12 * a.root_log_phi().abs());
}

#[test]
fn forced_stopping_everywhere_makes_depth_irrelevant() {
    let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 100, 5);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let mut phis = Vec::new();
    for max_depth_x in [0, 3, 12] {
        let prior = CondOptPrior { rho: 1.0, max_depth_x, ..CondOptPrior::default() };
        let tree = fit(&sx, &sy, &prior, data.clone()).unwrap();
        assert_eq!(tree.root_log_phi(), tree.root_log_m());
        assert_eq!(tree.root_rho_post(), 1.0);
        phis.push(tree.root_log_phi());
    }
    assert!(phis.windows(2).all(|w| w[0] == w[1]), "{phis:?}");
}

#[test]
fn zero_stopping_probability_forces_the_split_mixture() {
    let s = Scenario::new(ScenarioKind::FlowSynthetic, 80, 6);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = CondOptPrior {
        rho: 0.0,
        local: OptPrior { max_depth: 4, ..OptPrior::default() },
        max_depth_x: 4,
        min_points: 0,
    };
    let tree = fit(&sx, &sy, &prior, data).unwrap();
    let views: Vec<_> = tree.node_views().collect();
    let root = views.last().unwrap();
    assert_eq!(root.rho_post, 0.0);
    let split_terms: Vec<f64> = root
        .children
        .iter()
        .map(|kids| {
            kids.iter()
                .filter(|&&k| k != PosteriorTree::NO_CHILD)
                .map(|&k| views[k as usize].log_phi)
                .sum()
        })
        .collect();
    let expect = -(split_terms.len() as f64).ln() + log_sum_exp(&split_terms);
    assert!((root.log_phi - expect).abs() <= 1e-12 * expect.abs().max(1.0));
}

#[test]
fn predictive_density_normalizes_for_fixed_x() {
    let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 250, 8);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = CondOptPrior {
        local: OptPrior { max_depth: 8, ..OptPrior::default() },
        max_depth_x: 8,
        ..CondOptPrior::default()
    };
    let tree = fit(&sx, &sy, &prior, data).unwrap();
    let cells = 1usize << 8;
    let width = 1.0 / cells as f64;
    for x in [0.03, 0.31, 0.74, 1.0] {
        let total: f64 = (0..cells)
            .map(|c| tree.predict_density(&[x], &[(c as f64 + 0.5) * width]).unwrap() * width)
            .sum();
        assert!((total - 1.0).abs() < 1e-8, "x = {x}: {total}");
    }
}

#[test]
fn hmap_trivial_cases() {
    // Depth limit zero: the root is a forced stop and the tree is one block.
    let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 50, 2);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = CondOptPrior { max_depth_x: 0, ..CondOptPrior::default() };
    let tree = fit(&sx, &sy, &prior, data).unwrap();
    assert_eq!(tree.root_rho_post(), 1.0);
    let h = tree.hmap();
    assert_eq!(h.leaves().len(), 1);
    assert!(h.split_dims().is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(tree.inclusion_probabilities(200, &mut rng), vec![0.0]);
}

#[test]
fn sampled_partitions_are_deterministic_and_cover_the_space() {
    let tree = fit_scenario(ScenarioKind::FlowSynthetic, 200, 4);
    let p1 = tree.sample_partition(&mut ChaCha8Rng::seed_from_u64(11));
    let p2 = tree.sample_partition(&mut ChaCha8Rng::seed_from_u64(11));
    assert_eq!(p1.blocks.len(), p2.blocks.len());
    for (a, b) in p1.blocks.iter().zip(&p2.blocks) {
        assert_eq!(a.region, b.region);
    }
    let total: f64 = p1.blocks.iter().map(|b| b.region.measure(tree.space_x())).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn root_stop_frequency_matches_rho_post() {
    let tree = fit_scenario(ScenarioKind::Ex2BivariateNormal, 60, 12);
    let p = tree.root_rho_post();
    assert!(p > 0.01 && p < 0.99, "test needs a non-degenerate root, got {p}");
    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut stops = 0;
    for _ in 0..draws {
        let part = tree.sample_partition(&mut rng);
        if part.blocks.len() == 1 && !part.blocks[0].forced {
            stops += 1;
        }
    }
    let freq = stops as f64 / draws as f64;
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs rho_post {p} (se {se})");
}

#[test]
fn sampled_conditional_density_averages_to_the_predictive() {
    let s = Scenario::new(ScenarioKind::Ex2BivariateNormal, 400, 21);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = CondOptPrior {
        local: OptPrior { max_depth: 7, ..OptPrior::default() },
        max_depth_x: 7,
        ..CondOptPrior::default()
    };
    let tree = fit(&sx, &sy, &prior, data).unwrap();
    let x = [0.62];
    let y = [0.45];
    let target = tree.predict_density(&x, &y).unwrap();
    let draws = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let v = tree.sample_conditional_density(&mut rng).density(&x, &y).unwrap();
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / draws as f64;
    let sd = ((sum_sq / draws as f64 - mean * mean).max(0.0) / draws as f64).sqrt();
    assert!((mean - target).abs() < 3.0 * sd.max(1e-9), "mean {mean} target {target} sd {sd}");
}

#[test]
fn serialization_round_trip_is_bit_exact() {
    let tree = fit_scenario(ScenarioKind::Ex1BetaBlocks, 300, 17);
    let json = tree.to_json_string().unwrap();
    let loaded = PosteriorTree::from_json_str(&json).unwrap();

    assert_eq!(tree.node_count(), loaded.node_count());
    for (a, b) in tree.node_views().zip(loaded.node_views()) {
        assert_eq!(a.log_phi.to_bits(), b.log_phi.to_bits(), "node {}", a.id);
        assert_eq!(a.log_m.to_bits(), b.log_m.to_bits(), "node {}", a.id);
        assert_eq!(a.rho_post.to_bits(), b.rho_post.to_bits(), "node {}", a.id);
        assert_eq!(a.n, b.n);
        assert_eq!(a.path, b.path);
        assert_eq!(a.children, b.children);
        for (la, lb) in a.lambda_post.iter().zip(b.lambda_post) {
            assert_eq!(la.to_bits(), lb.to_bits());
        }
    }
    for i in 0..=20 {
        let x = [i as f64 / 20.0];
        for j in 0..=20 {
            let y = [j as f64 / 20.0];
            let da = tree.predict_density(&x, &y).unwrap();
            let db = loaded.predict_density(&x, &y).unwrap();
            assert_eq!(da.to_bits(), db.to_bits(), "predict at ({x:?}, {y:?})");
        }
    }
}

#[test]
fn independence_test_small_contracts() {
    let s = Scenario::new(ScenarioKind::Ex4IndependenceTest, 120, 31);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).unwrap();
    let prior = s.default_prior();

    // One permutation: add-one p-value is 1/2 or 1.
    let r =
        independence_test(&sx, &sy, &prior, &data, 1, 5, TestDirection::YGivenX).unwrap();
    assert!(r.p_value == 0.5 || r.p_value == 1.0, "{}", r.p_value);

    // The observed statistic is exactly the fitted root stop posterior.
    let tree = fit(&sx, &sy, &prior, data.clone()).unwrap();
    assert_eq!(r.stat_observed.to_bits(), tree.root_rho_post().to_bits());

    // Bayes factor agrees with (rho/(1-rho)) (1/stat - 1).
    let direct = (prior.rho / (1.0 - prior.rho)) * (1.0 / r.stat_observed - 1.0);
    assert!(
        (r.bayes_factor - direct).abs() <= 1e-10 * direct.max(1e-12),
        "{} vs {direct}",
        r.bayes_factor
    );

    // Determinism across calls.
    let r2 =
        independence_test(&sx, &sy, &prior, &data, 1, 5, TestDirection::YGivenX).unwrap();
    assert_eq!(r.null_stats, r2.null_stats);
    assert!(!r.degenerate_x);
}

#[test]
fn independence_test_min_direction_and_degenerate_flag() {
    let n = 40;
    let xs = vec![1.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ys: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
    let data = Dataset::new(PointMatrix::from_column(xs), PointMatrix::from_column(ys)).unwrap();
    let sx = SampleSpace::unit_cube(1);
    let sy = SampleSpace::unit_cube(1);
    let prior = CondOptPrior {
        local: OptPrior { max_depth: 4, ..OptPrior::default() },
        max_depth_x: 4,
        ..CondOptPrior::default()
    };
    let r = independence_test(&sx, &sy, &prior, &data, 9, 7, TestDirection::MinBoth).unwrap();
    assert!(r.degenerate_x);
    assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    assert_eq!(r.null_stats.len(), 9);
}

#[test]
fn log_predictive_score_contracts() {
    let tree = fit_scenario(ScenarioKind::Ex1BetaBlocks, 200, 13);
    let empty =
        Dataset::new(PointMatrix::from_column(vec![]), PointMatrix::from_column(vec![])).unwrap();
    assert_eq!(log_predictive_score(&tree, &empty).unwrap(), 0.0);

    // Additivity over a concatenation.
    let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 60, 14);
    let test = simulate(&s);
    let half = 30u32;
    let first = Dataset::new(
        PointMatrix::from_rows(&(0..half).map(|i| test.x.row(i).to_vec()).collect::<Vec<_>>())
            .unwrap(),
        PointMatrix::from_rows(&(0..half).map(|i| test.y.row(i).to_vec()).collect::<Vec<_>>())
            .unwrap(),
    )
    .unwrap();
    let second = Dataset::new(
        PointMatrix::from_rows(
            &(half..60).map(|i| test.x.row(i).to_vec()).collect::<Vec<_>>(),
        )
        .unwrap(),
        PointMatrix::from_rows(
            &(half..60).map(|i| test.y.row(i).to_vec()).collect::<Vec<_>>(),
        )
        .unwrap(),
    )
    .unwrap();
    let whole = log_predictive_score(&tree, &test).unwrap();
    let parts = log_predictive_score(&tree, &first).unwrap()
        + log_predictive_score(&tree, &second).unwrap();
    assert!((whole - parts).abs() <= 1e-10 * whole.abs().max(1.0));

    // No-training-data tree on unit spaces scores exactly zero.
    let space = SampleSpace::unit_cube(1);
    let empty_train =
        Dataset::new(PointMatrix::from_column(vec![]), PointMatrix::from_column(vec![])).unwrap();
    let prior_tree = fit(&space, &space, &CondOptPrior::default(), empty_train).unwrap();
    let s2 = Scenario::new(ScenarioKind::Ex1BetaBlocks, 25, 15);
    let uniform_test = simulate(&s2);
    assert_eq!(log_predictive_score(&prior_tree, &uniform_test).unwrap(), 0.0);

    // Out-of-space test points are an input error.
    let bad = Dataset::new(PointMatrix::from_column(vec![1.5]), PointMatrix::from_column(vec![0.5]))
        .unwrap();
    assert!(log_predictive_score(&tree, &bad).is_err());
}

#[test]
fn ex1_predictive_shows_the_u_shape_in_the_right_block() {
    // Above x = 0.5 the responses are U-shaped, so the predictive at the
    // boundary beats the middle in nearly every replicate.
    let mut wins = 0;
    for seed in 0..10u64 {
        let tree = fit_scenario(ScenarioKind::Ex1BetaBlocks, 2500, seed);
        let edge = tree.predict_density(&[0.7], &[0.05]).unwrap();
        let mid = tree.predict_density(&[0.7], &[0.5]).unwrap();
        if edge > mid {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}

#[test]
fn ex3_hmap_splits_only_the_relevant_dimensions() {
    let tree = fit_scenario(ScenarioKind::Ex3MarkovBinary, 500, 1);
    let h = tree.hmap();
    assert_eq!(h.split_dims(), vec![4, 19, 29]);
    assert!(h.leaves().len() >= 4);
}

#[test]
fn out_of_space_and_non_finite_points_are_input_errors() {
    let space = SampleSpace::unit_cube(1);
    let prior = CondOptPrior::default();
    for bad in [1.0001, f64::NAN, f64::INFINITY] {
        let data = Dataset::new(
            PointMatrix::from_column(vec![bad]),
            PointMatrix::from_column(vec![0.5]),
        )
        .unwrap();
        assert!(fit(&space, &space, &prior, data).is_err(), "{bad}");
    }
}
