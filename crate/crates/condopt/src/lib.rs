//! Conditional density estimation by two-stage recursive partitioning.
//!
//! The model first partitions the predictor space by recursive dyadic
//! mid-splits with optional stopping, then places an independent
//! multi-scale density model on the response space within each stopped
//! block. Both stages are conjugate: the exact posterior is computed by one
//! bottom-up recursion over the data-occupied partition nodes, scaling
//! linearly with the sample size, and supports direct (non-MCMC) posterior
//! sampling, modal partition summaries, predictive densities, variable
//! selection, and a permutation test of independence.

mod data;
mod error;
mod fit;
mod inference;
mod local;
mod math;
pub mod reference;
mod serialize;
mod sim;
mod space;
mod tree;

pub use data::{Dataset, PointMatrix};
pub use error::{Error, Result};
pub use fit::{fit, CondOptPrior};
pub use inference::{independence_test, log_predictive_score, IndependenceResult, TestDirection};
pub use local::{
    opt_log_marginal, opt_posterior, prior_mean_density, LocalOptPosterior, OptPrior,
    SampledDensity,
};
pub use sim::{simulate, Scenario, ScenarioKind};
pub use space::{
    candidate_splits, n_candidate_splits, partition_points, split_region, Dim, DimState, Region,
    SampleSpace, Side, Split,
};
pub use tree::{
    ConditionalDensityDraw, HmapNode, HmapTree, NodeView, PosteriorTree, SampledBlock,
    SampledPartition,
};
