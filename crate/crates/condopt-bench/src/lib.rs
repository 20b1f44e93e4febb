//! Shared fixtures for the benchmark suite.

use condopt::{fit, simulate, PosteriorTree, Scenario, ScenarioKind};

/// Fit one scenario with its reference prior, at a reduced depth when asked.
pub fn fitted(kind: ScenarioKind, n: usize, seed: u64, depth: Option<u32>) -> PosteriorTree {
    let s = Scenario::new(kind, n, seed);
    let data = simulate(&s);
    let (sx, sy) = s.spaces(&data).expect("scenario spaces");
    let mut prior = s.default_prior();
    if let Some(d) = depth {
        prior.max_depth_x = d;
        prior.local.max_depth = d;
    }
    fit(&sx, &sy, &prior, data).expect("fit")
}
