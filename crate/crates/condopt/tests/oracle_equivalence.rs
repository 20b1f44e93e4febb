//! The recursive fit must reproduce, to near machine precision, the value
//! obtained by explicitly enumerating every partition configuration and
//! summing prior probability times likelihood.

use condopt::reference::{enumerate_cond_marginal, enumerate_opt_marginal};
use condopt::{
    fit, opt_log_marginal, CondOptPrior, Dataset, Dim, OptPrior, PointMatrix, SampleSpace,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Instance {
    space_x: SampleSpace,
    space_y: SampleSpace,
    prior: CondOptPrior,
    data: Dataset,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_dims = rng.random_range(1..=3);
    let space_x = SampleSpace::binary(x_dims);
    let binary_response = rng.random::<f64>() < 0.5;
    let space_y = if binary_response {
        SampleSpace::new(vec![Dim::Binary]).unwrap()
    } else {
        SampleSpace::unit_cube(1)
    };
    let rho = [0.0, 0.3, 0.5, 0.7, 1.0][rng.random_range(0..5)];
    let rho_y = [0.3, 0.5, 0.7][rng.random_range(0..3)];
    let alpha = [[0.5, 0.5], [1.0, 1.0], [0.7, 0.3]][rng.random_range(0..3)];
    let prior = CondOptPrior {
        rho,
        local: OptPrior { rho: rho_y, alpha, max_depth: rng.random_range(1..=2) },
        max_depth_x: rng.random_range(0..=2),
        min_points: if rng.random::<f64>() < 0.2 { 1 } else { 0 },
    };
    let n = rng.random_range(0..=8);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..n {
        for _ in 0..x_dims {
            xs.push(if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 });
        }
        ys.push(if binary_response {
            if rng.random::<f64>() < 0.5 {
                0.0
            } else {
                1.0
            }
        } else {
            rng.random::<f64>()
        });
    }
    let data = Dataset::new(
        PointMatrix::new(x_dims, xs).unwrap(),
        PointMatrix::from_column(ys),
    )
    .unwrap();
    Instance { space_x, space_y, prior, data }
}

#[test]
fn fit_matches_exhaustive_enumeration_on_randomized_instances() {
    let mut worst: f64 = 0.0;
    for seed in 0..60 {
        let inst = random_instance(seed);
        let reference =
            enumerate_cond_marginal(&inst.space_x, &inst.space_y, &inst.prior, &inst.data);
        let tree = fit(&inst.space_x, &inst.space_y, &inst.prior, inst.data.clone()).unwrap();
        let got = tree.root_log_phi().exp();
        let rel = (got - reference).abs() / reference;
        assert!(
            rel <= 1e-10,
            "seed {seed}: fit {got} vs enumeration {reference} (rel {rel:.3e})"
        );
        worst = worst.max(rel);
    }
    println!("worst relative error over 60 instances: {worst:.3e}");
}

#[test]
fn opt_marginal_matches_exhaustive_enumeration() {
    for seed in 100..140 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let two_dim = rng.random::<f64>() < 0.4;
        let space = if two_dim { SampleSpace::unit_cube(2) } else { SampleSpace::unit_cube(1) };
        let prior = OptPrior {
            rho: [0.3, 0.5, 0.7][rng.random_range(0..3)],
            alpha: [[0.5, 0.5], [0.7, 0.3]][rng.random_range(0..2)],
            max_depth: rng.random_range(0..=2),
        };
        let n = rng.random_range(0..=7);
        let dim = space.n_dims();
        let mut ys = Vec::new();
        for _ in 0..n * dim {
            ys.push(rng.random::<f64>());
        }
        let m = PointMatrix::new(dim, ys).unwrap();
        let reference = enumerate_opt_marginal(&space, &prior, &m);
        let got = opt_log_marginal(&space, &prior, &m).unwrap().exp();
        let rel = (got - reference).abs() / reference;
        assert!(rel <= 1e-10, "seed {seed}: {got} vs {reference} (rel {rel:.3e})");
    }
}

#[test]
fn worked_binary_example_four_points_depth_one() {
    // {0,1} predictor, {0,1} response, both depth limits 1.
    let space_x = SampleSpace::binary(1);
    let space_y = SampleSpace::new(vec![Dim::Binary]).unwrap();
    let prior = CondOptPrior {
        rho: 0.5,
        local: OptPrior { rho: 0.5, alpha: [0.5, 0.5], max_depth: 1 },
        max_depth_x: 1,
        min_points: 0,
    };
    let data = Dataset::new(
        PointMatrix::from_column(vec![0.0, 0.0, 1.0, 1.0]),
        PointMatrix::from_column(vec![0.0, 1.0, 1.0, 1.0]),
    )
    .unwrap();
    let reference = enumerate_cond_marginal(&space_x, &space_y, &prior, &data);
    let tree = fit(&space_x, &space_y, &prior, data).unwrap();
    let rel = (tree.root_log_phi().exp() - reference).abs() / reference;
    assert!(rel <= 1e-12, "{} vs {reference}", tree.root_log_phi().exp());
}
