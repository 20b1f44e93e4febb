//! Exchangeability of the independence-test statistic under the null: over
//! independent replicates the add-one p-value is uniform on its support, up
//! to a Kolmogorov-Smirnov sanity bound at the 1% level.

use condopt::{
    independence_test, simulate, Dataset, PointMatrix, Scenario, ScenarioKind, TestDirection,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn null_pvalues_are_rank_uniform() {
    let replicates = 500u64;
    let permutations = 9; // p-value support {1/10, ..., 10/10}
    let mut pvals = Vec::with_capacity(replicates as usize);
    for rep in 0..replicates {
        let s = Scenario::new(ScenarioKind::Ex4IndependenceTest, 100, 40_000 + rep);
        let base = simulate(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + rep);
        let ys: Vec<f64> = (0..base.len()).map(|_| rng.random()).collect();
        let data = Dataset::new(base.x.clone(), PointMatrix::from_column(ys)).unwrap();
        let (sx, sy) = s.spaces(&data).unwrap();
        let r = independence_test(
            &sx,
            &sy,
            &s.default_prior(),
            &data,
            permutations,
            60_000 + rep,
            TestDirection::YGivenX,
        )
        .unwrap();
        pvals.push(r.p_value);
    }

    // Exchangeability makes the observed statistic's rank uniform over the
    // 10 positions, so P(p <= k/10) = k/10 exactly. Compare the empirical
    // CDF at the support atoms; KS critical value at the 1% level.
    let n = replicates as f64;
    let mut worst = 0.0f64;
    for k in 1..=(permutations + 1) {
        let cut = k as f64 / (permutations + 1) as f64;
        let emp = pvals.iter().filter(|&&p| p <= cut + 1e-12).count() as f64 / n;
        worst = worst.max((emp - cut).abs());
    }
    let critical = 1.63 / n.sqrt();
    assert!(worst <= critical, "KS statistic {worst:.4} exceeds 1% critical {critical:.4}");
}
