//! Exact posterior computation for the two-stage partition model.
//!
//! One depth-first pass over the data-occupied predictor regions computes,
//! per region A, the local marginal M(A) of its responses and the total
//! marginal
//!
//! ```text
//! Phi(A) = rho * M(A) + (1 - rho) * sum_j lambda_j * prod_i Phi(A_i^j)
//! ```
//!
//! with empty children contributing Phi = 1. Terminal rules: regions that
//! cannot be divided, regions at the depth limit, and regions at or below
//! the point-count floor are forced stops (Phi = M); a region holding a
//! single point under the symmetric local prior has Phi = M equal to the
//! prior-mean density at that point and prior stop/selection posteriors, so
//! the recursion cuts there and the subtree is reconstructed on demand.
//!
//! Regions reachable through different split orders are identical sets, so
//! the recursion memoizes on the region itself and stores the result as a
//! table of nodes in bottom-up (children before parents) order; the root is
//! the last node.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointMatrix};
use crate::error::{Error, Result};
use crate::local::{opt_log_marginal_indexed, OptPrior, OptScratch};
use crate::math::{log_sum_exp, log_sum_exp2, DirichletFactorTable, FnvBuildHasher};
use crate::space::{candidate_splits, partition_points, Region, SampleSpace, Side};
use crate::tree::{PosteriorTree, TreeNode, XNodeKind, NO_NODE};

/// Hyperparameters of the two-stage model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondOptPrior {
    /// Stopping probability at every predictor region.
    pub rho: f64,
    /// Response-space model placed on each stopped block.
    pub local: OptPrior,
    /// Predictor regions this many levels down are forced terminal.
    pub max_depth_x: u32,
    /// Regions holding at most this many points are forced terminal
    /// (0 disables the floor).
    pub min_points: u32,
}

impl Default for CondOptPrior {
    fn default() -> Self {
        Self { rho: 0.5, local: OptPrior::default(), max_depth_x: 12, min_points: 0 }
    }
}

impl CondOptPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidPrior(format!(
                "stopping probability {} not in [0,1]",
                self.rho
            )));
        }
        self.local.validate()
    }
}

/// Combine the stop and split terms of one region, returning
/// `(log_phi, log_split_sum)`. `split_terms[j]` must hold the sum of child
/// log-marginals under split j. Shared by the fitting pass and the
/// response-permutation refits so both produce identical floats.
pub(crate) fn combine_phi(rho: f64, log_m: f64, split_terms: &[f64]) -> (f64, f64) {
    let log_split_sum =
        (1.0 - rho).ln() - (split_terms.len() as f64).ln() + log_sum_exp(split_terms);
    (log_sum_exp2(rho.ln() + log_m, log_split_sum), log_split_sum)
}

/// Posterior stopping probability rho * M / Phi, clamped into [0,1].
pub(crate) fn stop_posterior(rho: f64, log_m: f64, log_phi: f64) -> f64 {
    (rho.ln() + log_m - log_phi).exp().min(1.0)
}

/// Fit the exact posterior on a dataset.
///
/// Every observation must lie inside its declared space. The fitted tree
/// owns the dataset; local response-space posteriors are materialized
/// lazily on first use.
pub fn fit(
    space_x: &SampleSpace,
    space_y: &SampleSpace,
    prior: &CondOptPrior,
    data: Dataset,
) -> Result<PosteriorTree> {
    prior.validate()?;
    data.validate(space_x, space_y)?;
    let n = data.len();
    let root_region = Region::root(space_x);

    let nodes = if n == 0 {
        let n_splits = candidate_splits(space_x, &root_region).len();
        vec![TreeNode {
            path: Vec::new(),
            depth: 0,
            n: 0,
            points: Vec::new(),
            kind: XNodeKind::Cut,
            log_m: 0.0,
            log_phi: 0.0,
            rho_post: prior.rho,
            lambda_post: uniform_weights(n_splits),
            children: Vec::new(),
        }]
    } else {
        let table = DirichletFactorTable::new(prior.local.alpha, n);
        let mut builder = Builder {
            space_x,
            space_y,
            prior,
            data: &data,
            table: &table,
            nodes: Vec::new(),
            memo: HashMap::default(),
            use_memo: space_x.multiway(),
            scratch: OptScratch::default(),
        };
        let all: Vec<u32> = (0..n as u32).collect();
        let mut root = root_region.clone();
        builder.visit(&mut root, &[], all);
        builder.nodes
    };

    Ok(PosteriorTree::assemble(
        space_x.clone(),
        space_y.clone(),
        prior.clone(),
        data,
        nodes,
    ))
}

pub(crate) fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

struct Builder<'a> {
    space_x: &'a SampleSpace,
    space_y: &'a SampleSpace,
    prior: &'a CondOptPrior,
    data: &'a Dataset,
    table: &'a DirichletFactorTable,
    nodes: Vec<TreeNode>,
    memo: HashMap<Region, u32, FnvBuildHasher>,
    use_memo: bool,
    scratch: OptScratch,
}

impl<'a> Builder<'a> {
    /// Build the node for a nonempty region; returns its id. Children finish
    /// before parents, so ids are already in bottom-up evaluation order.
    ///
    /// `region` is stepped in place along the walk; `path` is the parent's
    /// canonical path and is cloned only when a new node is created.
    fn visit(&mut self, region: &mut Region, path: &[(u16, u8)], indices: Vec<u32>) -> u32 {
        if self.use_memo {
            if let Some(&id) = self.memo.get(region) {
                return id;
            }
        }
        let n = indices.len();
        debug_assert!(n > 0);
        let splits = candidate_splits(self.space_x, region);
        let log_m = opt_log_marginal_indexed(
            self.space_y,
            &self.prior.local,
            &self.data.y,
            &indices,
            self.table,
            &mut self.scratch,
        );

        let forced = splits.is_empty()
            || region.depth() >= self.prior.max_depth_x
            || (self.prior.min_points > 0 && n as u32 <= self.prior.min_points)
            || self.prior.rho == 1.0;

        let node = if forced {
            TreeNode {
                path: path.to_vec(),
                depth: region.depth(),
                n: n as u32,
                points: indices,
                kind: XNodeKind::Terminal,
                log_m,
                log_phi: log_m,
                rho_post: 1.0,
                lambda_post: Vec::new(),
                children: Vec::new(),
            }
        } else if n == 1 && self.prior.local.is_symmetric() {
            // Phi = M at this region and everywhere below it, so the stop and
            // selection posteriors equal the prior; the subtree is re-expanded
            // on demand instead of being stored.
            TreeNode {
                path: path.to_vec(),
                depth: region.depth(),
                n: 1,
                points: indices,
                kind: XNodeKind::Cut,
                log_m,
                log_phi: log_m,
                rho_post: stop_posterior(self.prior.rho, log_m, log_m),
                lambda_post: uniform_weights(splits.len()),
                children: Vec::new(),
            }
        } else {
            let mut split_terms = Vec::with_capacity(splits.len());
            let mut children = Vec::with_capacity(splits.len());
            let mut child_path = Vec::with_capacity(path.len() + 1);
            child_path.extend_from_slice(path);
            child_path.push((0, 0));
            for &split in &splits {
                // When both children are already memoized the partition of
                // the index list is not needed at all.
                if self.use_memo {
                    let mut hits = [NO_NODE; 2];
                    for side in [Side::Left, Side::Right] {
                        let old = region.descend(split, side);
                        if let Some(&id) = self.memo.get(region) {
                            hits[side.index()] = id;
                        }
                        region.ascend(split, old);
                    }
                    if hits[0] != NO_NODE && hits[1] != NO_NODE {
                        let term = self.nodes[hits[0] as usize].log_phi
                            + self.nodes[hits[1] as usize].log_phi;
                        split_terms.push(term);
                        children.push(hits);
                        continue;
                    }
                }
                let (left, right) = partition_points(self.space_x, region, split, &indices, |i| {
                    self.data.x.coord(i, split.dim)
                });
                let mut term = 0.0;
                let mut kids = [NO_NODE; 2];
                for (side, part) in [(Side::Left, left), (Side::Right, right)] {
                    if part.is_empty() {
                        continue;
                    }
                    *child_path.last_mut().unwrap() = (split.dim as u16, side.index() as u8);
                    let old = region.descend(split, side);
                    let id = self.visit(region, &child_path, part);
                    region.ascend(split, old);
                    term += self.nodes[id as usize].log_phi;
                    kids[side.index()] = id;
                }
                split_terms.push(term);
                children.push(kids);
            }
            let (log_phi, _) = combine_phi(self.prior.rho, log_m, &split_terms);
            // The (1-rho)/N prefactor is common to all splits and cancels in
            // the normalized selection posterior.
            let norm = log_sum_exp(&split_terms);
            let lambda_post = split_terms.iter().map(|&t| (t - norm).exp()).collect();
            TreeNode {
                path: path.to_vec(),
                depth: region.depth(),
                n: n as u32,
                points: indices,
                kind: XNodeKind::Internal,
                log_m,
                log_phi,
                rho_post: stop_posterior(self.prior.rho, log_m, log_phi),
                lambda_post,
                children,
            }
        };

        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        if self.use_memo {
            self.memo.insert(region.clone(), id);
        }
        id
    }
}

/// Recompute the root posterior quantities with an alternative response
/// matrix over the same predictor structure. The partition of points never
/// depends on responses, so the node table, counts, and index lists are all
/// reusable; only the local marginals and the Phi recursion rerun. Output is
/// bit-identical to refitting from scratch.
pub(crate) fn refit_root(tree: &PosteriorTree, ys: &PointMatrix, table: &DirichletFactorTable) -> RefitRoot {
    let nodes = tree.nodes();
    let prior = tree.prior();
    let mut log_phi = vec![0.0f64; nodes.len()];
    let mut root = RefitRoot { log_m: 0.0, log_phi: 0.0, rho_post: prior.rho };
    let mut split_terms: Vec<f64> = Vec::new();
    let mut scratch = OptScratch::default();
    for (id, node) in nodes.iter().enumerate() {
        let log_m = if node.n == 0 {
            0.0
        } else {
            opt_log_marginal_indexed(tree.space_y(), &prior.local, ys, &node.points, table, &mut scratch)
        };
        let lp = match node.kind {
            XNodeKind::Terminal | XNodeKind::Cut => log_m,
            XNodeKind::Internal => {
                split_terms.clear();
                for kids in &node.children {
                    let mut term = 0.0;
                    if kids[0] != NO_NODE {
                        term += log_phi[kids[0] as usize];
                    }
                    if kids[1] != NO_NODE {
                        term += log_phi[kids[1] as usize];
                    }
                    split_terms.push(term);
                }
                combine_phi(prior.rho, log_m, &split_terms).0
            }
        };
        log_phi[id] = lp;
        if id + 1 == nodes.len() {
            root = RefitRoot {
                log_m,
                log_phi: lp,
                rho_post: if node.kind == XNodeKind::Terminal {
                    1.0
                } else {
                    stop_posterior(prior.rho, log_m, lp)
                },
            };
        }
    }
    root
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct RefitRoot {
    #[cfg_attr(not(test), allow(dead_code))]
    pub log_m: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub log_phi: f64,
    pub rho_post: f64,
}
