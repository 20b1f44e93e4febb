//! Exhaustive reference evaluators for validating the recursive fits.
//!
//! These enumerate every stop/split configuration of the partition process
//! explicitly, multiply out each configuration's prior probability and
//! likelihood, and sum. Mass-split factors use plain running products
//! instead of log-gamma. Exponential cost; intended for tiny instances.

use crate::data::{Dataset, PointMatrix};
use crate::fit::CondOptPrior;
use crate::local::OptPrior;
use crate::space::{candidate_splits, partition_points, Region, SampleSpace, Side};

/// Marginal likelihood of one block of responses by explicit enumeration of
/// all response-partition configurations.
pub fn enumerate_opt_marginal(space: &SampleSpace, prior: &OptPrior, ys: &PointMatrix) -> f64 {
    let indices: Vec<u32> = (0..ys.len() as u32).collect();
    let configs = opt_configs(space, prior, ys, &Region::root(space), &indices);
    let mass: f64 = configs.iter().map(|&(p, _)| p).sum();
    assert!((mass - 1.0).abs() < 1e-9, "configuration probabilities sum to {mass}");
    configs.iter().map(|&(p, lik)| p * lik).sum()
}

/// Total marginal likelihood of a dataset by explicit enumeration of all
/// predictor-partition configurations, with each stopped block's local
/// marginal itself enumerated.
pub fn enumerate_cond_marginal(
    space_x: &SampleSpace,
    space_y: &SampleSpace,
    prior: &CondOptPrior,
    data: &Dataset,
) -> f64 {
    let indices: Vec<u32> = (0..data.len() as u32).collect();
    let configs = cond_configs(space_x, space_y, prior, data, &Region::root(space_x), &indices);
    let mass: f64 = configs.iter().map(|&(p, _)| p).sum();
    assert!((mass - 1.0).abs() < 1e-9, "configuration probabilities sum to {mass}");
    configs.iter().map(|&(p, lik)| p * lik).sum()
}

/// Beta(a1 + n1, a2 + n2) / Beta(a1, a2) as a running product.
fn mass_split_factor(alpha: [f64; 2], n1: usize, n2: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..n1 {
        v *= alpha[0] + i as f64;
    }
    for j in 0..n2 {
        v *= alpha[1] + j as f64;
    }
    for k in 0..(n1 + n2) {
        v /= alpha[0] + alpha[1] + k as f64;
    }
    v
}

/// All (prior probability, likelihood) pairs of response-partition
/// configurations over one region.
fn opt_configs(
    space: &SampleSpace,
    prior: &OptPrior,
    ys: &PointMatrix,
    region: &Region,
    indices: &[u32],
) -> Vec<(f64, f64)> {
    let n = indices.len();
    let stopped_lik = region.measure(space).powi(-(n as i32));
    let splits = candidate_splits(space, region);
    if splits.is_empty() || region.depth() >= prior.max_depth {
        return vec![(1.0, stopped_lik)];
    }
    let mut out = vec![(prior.rho, stopped_lik)];
    let lambda = 1.0 / splits.len() as f64;
    for &split in &splits {
        let (left, right) =
            partition_points(space, region, split, indices, |i| ys.coord(i, split.dim));
        let factor = mass_split_factor(prior.alpha, left.len(), right.len());
        let lc = opt_configs(space, prior, ys, &region.child(split, Side::Left), &left);
        let rc = opt_configs(space, prior, ys, &region.child(split, Side::Right), &right);
        for &(pl, ll) in &lc {
            for &(pr, lr) in &rc {
                out.push(((1.0 - prior.rho) * lambda * pl * pr, factor * ll * lr));
            }
        }
    }
    out
}

/// All (prior probability, likelihood) pairs of predictor-partition
/// configurations over one region. A stopped block contributes its
/// enumerated local marginal.
fn cond_configs(
    space_x: &SampleSpace,
    space_y: &SampleSpace,
    prior: &CondOptPrior,
    data: &Dataset,
    region: &Region,
    indices: &[u32],
) -> Vec<(f64, f64)> {
    let n = indices.len();
    let local = {
        let ys = gather(&data.y, indices);
        let idx: Vec<u32> = (0..n as u32).collect();
        let configs = opt_configs(space_y, &prior.local, &ys, &Region::root(space_y), &idx);
        configs.iter().map(|&(p, lik)| p * lik).sum::<f64>()
    };
    let splits = candidate_splits(space_x, region);
    if splits.is_empty()
        || region.depth() >= prior.max_depth_x
        || (prior.min_points > 0 && n as u32 <= prior.min_points)
    {
        return vec![(1.0, local)];
    }
    let mut out = vec![(prior.rho, local)];
    let lambda = 1.0 / splits.len() as f64;
    for &split in &splits {
        let (left, right) =
            partition_points(space_x, region, split, indices, |i| data.x.coord(i, split.dim));
        let lc = cond_configs(space_x, space_y, prior, data, &region.child(split, Side::Left), &left);
        let rc = cond_configs(space_x, space_y, prior, data, &region.child(split, Side::Right), &right);
        for &(pl, ll) in &lc {
            for &(pr, lr) in &rc {
                out.push(((1.0 - prior.rho) * lambda * pl * pr, ll * lr));
            }
        }
    }
    out
}

fn gather(m: &PointMatrix, indices: &[u32]) -> PointMatrix {
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| m.row(i).to_vec()).collect();
    if rows.is_empty() {
        PointMatrix::new(m.dim(), Vec::new()).expect("dim preserved")
    } else {
        PointMatrix::from_rows(&rows).expect("dim preserved")
    }
}
