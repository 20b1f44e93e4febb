//! Seeded generators for the simulation scenarios used by the tests and the
//! command-line tool. Generation is a pure function of (scenario, n, seed);
//! the generator (ChaCha8) and draw order are fixed, so datasets reproduce
//! byte-identically across platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::data::{Dataset, PointMatrix};
use crate::error::{Error, Result};
use crate::fit::CondOptPrior;
use crate::local::OptPrior;
use crate::space::SampleSpace;

/// The available data-generating processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// X ~ Beta(2,2); Y piecewise Beta over three predictor blocks with
    /// abrupt changes at 0.25 and 0.5.
    Ex1BetaBlocks,
    /// (X, Y) bivariate normal, mean (0.6, 0.4), sd 0.1, covariance 0.005.
    Ex2BivariateNormal,
    /// 30 binary predictors forming a Markov chain; Y mixes three Betas
    /// driven interactively by X5, X20, X30.
    Ex3MarkovBinary,
    /// 10 binary Markov predictors; Y departs from uniform only through
    /// (X1,X2,X5) and (X5,X8,X10), with no mean or median shift.
    Ex4IndependenceTest,
    /// 2-D predictor, 2-D response stress fixture: response modes depend on
    /// the predictor quadrant.
    FlowSynthetic,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ex1-beta-blocks" => Ok(Self::Ex1BetaBlocks),
            "ex2-bivariate-normal" => Ok(Self::Ex2BivariateNormal),
            "ex3-markov-binary" => Ok(Self::Ex3MarkovBinary),
            "ex4-independence-test" => Ok(Self::Ex4IndependenceTest),
            "flow-synthetic" => Ok(Self::FlowSynthetic),
            other => Err(Error::Data(format!("unknown scenario {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ex1BetaBlocks => "ex1-beta-blocks",
            Self::Ex2BivariateNormal => "ex2-bivariate-normal",
            Self::Ex3MarkovBinary => "ex3-markov-binary",
            Self::Ex4IndependenceTest => "ex4-independence-test",
            Self::FlowSynthetic => "flow-synthetic",
        }
    }

    pub fn all() -> [ScenarioKind; 5] {
        [
            Self::Ex1BetaBlocks,
            Self::Ex2BivariateNormal,
            Self::Ex3MarkovBinary,
            Self::Ex4IndependenceTest,
            Self::FlowSynthetic,
        ]
    }

    pub fn n_predictors(&self) -> usize {
        match self {
            Self::Ex1BetaBlocks | Self::Ex2BivariateNormal => 1,
            Self::Ex3MarkovBinary => 30,
            Self::Ex4IndependenceTest => 10,
            Self::FlowSynthetic => 2,
        }
    }

    pub fn n_responses(&self) -> usize {
        match self {
            Self::FlowSynthetic => 2,
            _ => 1,
        }
    }

    pub fn binary_predictors(&self) -> bool {
        matches!(self, Self::Ex3MarkovBinary | Self::Ex4IndependenceTest)
    }

    pub fn predictor_names(&self) -> Vec<String> {
        if self.n_predictors() == 1 {
            vec!["x".to_string()]
        } else {
            (1..=self.n_predictors()).map(|i| format!("x{i}")).collect()
        }
    }

    pub fn response_names(&self) -> Vec<String> {
        if self.n_responses() == 1 {
            vec!["y".to_string()]
        } else {
            (1..=self.n_responses()).map(|i| format!("y{i}")).collect()
        }
    }
}

/// A fully specified generation request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self { kind, n, seed }
    }

    /// Sample spaces the generated data lives in. Scenarios with unbounded
    /// coordinates get data-driven root bounds, so the dataset is required.
    pub fn spaces(&self, data: &Dataset) -> Result<(SampleSpace, SampleSpace)> {
        match self.kind {
            ScenarioKind::Ex1BetaBlocks => Ok((SampleSpace::unit_cube(1), SampleSpace::unit_cube(1))),
            ScenarioKind::Ex2BivariateNormal => {
                let rx = data.x.ranges().ok_or_else(|| Error::Data("empty dataset".into()))?;
                let ry = data.y.ranges().ok_or_else(|| Error::Data("empty dataset".into()))?;
                Ok((SampleSpace::from_empirical_ranges(&rx)?, SampleSpace::from_empirical_ranges(&ry)?))
            }
            ScenarioKind::Ex3MarkovBinary => Ok((SampleSpace::binary(30), SampleSpace::unit_cube(1))),
            ScenarioKind::Ex4IndependenceTest => Ok((SampleSpace::binary(10), SampleSpace::unit_cube(1))),
            ScenarioKind::FlowSynthetic => Ok((SampleSpace::unit_cube(2), SampleSpace::unit_cube(2))),
        }
    }

    /// Reference prior configuration for each scenario: stopping
    /// probabilities 0.5, pseudo-counts 0.5, 12 levels on continuous spaces,
    /// 4 levels for the binary model-selection scenarios, 10 for the
    /// flow-scale profile.
    pub fn default_prior(&self) -> CondOptPrior {
        let (max_depth_x, max_depth_y) = match self.kind {
            ScenarioKind::Ex1BetaBlocks | ScenarioKind::Ex2BivariateNormal => (12, 12),
            ScenarioKind::Ex3MarkovBinary | ScenarioKind::Ex4IndependenceTest => (4, 12),
            ScenarioKind::FlowSynthetic => (10, 10),
        };
        CondOptPrior {
            rho: 0.5,
            local: OptPrior { rho: 0.5, alpha: [0.5, 0.5], max_depth: max_depth_y },
            max_depth_x,
            min_points: 0,
        }
    }
}

/// Generate a dataset. Byte-identical for equal (kind, n, seed).
pub fn simulate(scenario: &Scenario) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let n = scenario.n;
    let mut xs = Vec::with_capacity(n * scenario.kind.n_predictors());
    let mut ys = Vec::with_capacity(n * scenario.kind.n_responses());

    match scenario.kind {
        ScenarioKind::Ex1BetaBlocks => {
            let bx = beta(2.0, 2.0);
            let blocks = [beta(30.0, 20.0), beta(10.0, 30.0), beta(0.5, 0.5)];
            for _ in 0..n {
                let x = bx.sample(&mut rng);
                let which = if x < 0.25 {
                    0
                } else if x <= 0.5 {
                    1
                } else {
                    2
                };
                xs.push(x);
                ys.push(blocks[which].sample(&mut rng));
            }
        }
        ScenarioKind::Ex2BivariateNormal => {
            // sd 0.1 each, covariance 0.005: y = 0.4 + 0.05 z1 + sqrt(0.0075) z2.
            let b = (0.01f64 - 0.05f64 * 0.05).sqrt();
            for _ in 0..n {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                xs.push(0.6 + 0.1 * z1);
                ys.push(0.4 + 0.05 * z1 + b * z2);
            }
        }
        ScenarioKind::Ex3MarkovBinary => {
            let tables = [beta(1.0, 6.0), beta(12.0, 16.0), beta(3.0, 4.0)];
            for _ in 0..n {
                let x = markov_chain(&mut rng, 30);
                // 1-indexed X5, X20, X30.
                let which = if x[4] == 1.0 && x[19] == 0.0 && x[29] == 1.0 {
                    0
                } else if x[4] == 0.0 && x[19] == 1.0 {
                    1
                } else {
                    2
                };
                ys.push(tables[which].sample(&mut rng));
                xs.extend_from_slice(&x);
            }
        }
        ScenarioKind::Ex4IndependenceTest => {
            let b44 = beta(4.0, 4.0);
            let bhalf = beta(0.5, 0.5);
            for _ in 0..n {
                let x = markov_chain(&mut rng, 10);
                // 1-indexed (X1,X2,X5) and (X5,X8,X10); the two non-null rows
                // disagree on X5, so at most one can match.
                let row1 = x[0] == 1.0 && x[1] == 1.0 && x[4] == 0.0;
                let row2 = x[4] == 1.0 && x[7] == 0.0 && x[9] == 0.0;
                assert!(!(row1 && row2), "non-null response rows must be mutually exclusive");
                let y = if row1 {
                    b44.sample(&mut rng)
                } else if row2 {
                    bhalf.sample(&mut rng)
                } else {
                    rng.random::<f64>()
                };
                ys.push(y);
                xs.extend_from_slice(&x);
            }
        }
        ScenarioKind::FlowSynthetic => {
            let modes = [
                [beta(5.0, 2.0), beta(2.0, 5.0)],
                [beta(2.0, 5.0), beta(5.0, 2.0)],
                [beta(8.0, 8.0), beta(0.8, 0.8)],
                [beta(1.0, 1.0), beta(3.0, 3.0)],
            ];
            for _ in 0..n {
                let x1: f64 = rng.random();
                let x2: f64 = rng.random();
                let q = (x1 >= 0.5) as usize * 2 + (x2 >= 0.5) as usize;
                xs.push(x1);
                xs.push(x2);
                ys.push(modes[q][0].sample(&mut rng));
                ys.push(modes[q][1].sample(&mut rng));
            }
        }
    }

    let x = PointMatrix::new(scenario.kind.n_predictors(), xs).expect("generator row shape");
    let y = PointMatrix::new(scenario.kind.n_responses(), ys).expect("generator row shape");
    Dataset::new(x, y).expect("equal row counts")
}

fn beta(a: f64, b: f64) -> Beta<f64> {
    Beta::new(a, b).expect("positive shape parameters")
}

/// X1 ~ Bernoulli(0.5), then each coordinate repeats the previous one with
/// probability 0.7.
fn markov_chain<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(k);
    let mut prev = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
    x.push(prev);
    for _ in 1..k {
        let stay = rng.random::<f64>() < 0.7;
        let v = if stay { prev } else { 1.0 - prev };
        x.push(v);
        prev = v;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        for kind in ScenarioKind::all() {
            let s = Scenario::new(kind, 200, 7);
            assert_eq!(simulate(&s), simulate(&s), "{}", kind.name());
        }
    }

    #[test]
    fn ex2_moments_match_parameters() {
        let s = Scenario::new(ScenarioKind::Ex2BivariateNormal, 100_000, 123);
        let d = simulate(&s);
        let n = d.len() as f64;
        let mx: f64 = d.x.rows().map(|r| r[0]).sum::<f64>() / n;
        let my: f64 = d.y.rows().map(|r| r[0]).sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for i in 0..d.len() as u32 {
            let (dx, dy) = (d.x.coord(i, 0) - mx, d.y.coord(i, 0) - my);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        let corr = sxy / (sxx.sqrt() * syy.sqrt());
        assert!((mx - 0.6).abs() < 0.002, "{mx}");
        assert!((my - 0.4).abs() < 0.002, "{my}");
        assert!((corr - 0.5).abs() < 0.01, "{corr}");
    }

    #[test]
    fn ex3_chain_persistence() {
        let s = Scenario::new(ScenarioKind::Ex3MarkovBinary, 100_000, 5);
        let d = simulate(&s);
        for dim in 1..30 {
            let same = (0..d.len() as u32)
                .filter(|&i| d.x.coord(i, dim) == d.x.coord(i, dim - 1))
                .count() as f64
                / d.len() as f64;
            assert!((same - 0.7).abs() < 0.005, "dim {dim}: {same}");
        }
    }

    #[test]
    fn ex1_block_means_are_ordered() {
        let s = Scenario::new(ScenarioKind::Ex1BetaBlocks, 100_000, 11);
        let d = simulate(&s);
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for i in 0..d.len() as u32 {
            let x = d.x.coord(i, 0);
            let w = if x < 0.25 {
                0
            } else if x <= 0.5 {
                1
            } else {
                2
            };
            sums[w] += d.y.coord(i, 0);
            counts[w] += 1;
        }
        let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64, sums[2] / counts[2] as f64];
        // Beta(30,20): 0.6; Beta(10,30): 0.25; Beta(0.5,0.5): 0.5.
        assert!((means[0] - 0.6).abs() < 0.01, "{means:?}");
        assert!((means[1] - 0.25).abs() < 0.01, "{means:?}");
        assert!((means[2] - 0.5).abs() < 0.01, "{means:?}");
    }

    #[test]
    fn ex4_branch_means_match_their_distributions() {
        let s = Scenario::new(ScenarioKind::Ex4IndependenceTest, 100_000, 17);
        let d = simulate(&s);
        // (mean, count) for the Beta(4,4), Beta(0.5,0.5), and uniform rows.
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for i in 0..d.len() as u32 {
            let x = d.x.row(i);
            let w = if x[0] == 1.0 && x[1] == 1.0 && x[4] == 0.0 {
                0
            } else if x[4] == 1.0 && x[7] == 0.0 && x[9] == 0.0 {
                1
            } else {
                2
            };
            sums[w] += d.y.coord(i, 0);
            counts[w] += 1;
        }
        for (w, expect) in [(0usize, 0.5), (1, 0.5), (2, 0.5)] {
            assert!(counts[w] > 1000, "branch {w} drew {} points", counts[w]);
            let mean = sums[w] / counts[w] as f64;
            assert!((mean - expect).abs() < 0.02, "branch {w}: {mean}");
        }
    }

    #[test]
    fn flow_quadrant_means_match_their_modes() {
        let s = Scenario::new(ScenarioKind::FlowSynthetic, 100_000, 23);
        let d = simulate(&s);
        // Quadrant (x1 >= 0.5) * 2 + (x2 >= 0.5): first response coordinate
        // draws from Beta(5,2), Beta(2,5), Beta(8,8), Beta(1,1).
        let expect = [5.0 / 7.0, 2.0 / 7.0, 0.5, 0.5];
        let mut sums = [0.0f64; 4];
        let mut counts = [0usize; 4];
        for i in 0..d.len() as u32 {
            let x = d.x.row(i);
            let q = (x[0] >= 0.5) as usize * 2 + (x[1] >= 0.5) as usize;
            sums[q] += d.y.coord(i, 0);
            counts[q] += 1;
        }
        for q in 0..4 {
            let mean = sums[q] / counts[q] as f64;
            assert!((mean - expect[q]).abs() < 0.01, "quadrant {q}: {mean}");
        }
    }

    #[test]
    fn generated_points_lie_in_declared_spaces() {
        for kind in ScenarioKind::all() {
            let s = Scenario::new(kind, 2_000, 3);
            let d = simulate(&s);
            let (sx, sy) = s.spaces(&d).unwrap();
            d.validate(&sx, &sy).unwrap();
        }
    }
}
