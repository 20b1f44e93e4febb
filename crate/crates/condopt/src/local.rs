//! Recursive density model on the response space with optional stopping.
//!
//! For one predictor block this module computes the marginal likelihood of
//! the block's responses, the exact posterior of the stopping / selection /
//! mass-split parameters, the posterior-mean density, and direct density
//! draws. All likelihood bookkeeping is in natural-log space: a node mixes a
//! "stop here, spread uniformly" term `rho * mu(B)^-n(B)` with one term per
//! admissible split, each carrying a Dirichlet-multinomial mass factor
//! `Beta(alpha + counts) / Beta(alpha)` and the product of child values.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::data::PointMatrix;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, log_sum_exp2, DirichletFactorTable, FnvBuildHasher, StreamLse};
use crate::space::{
    candidate_splits, n_candidate_splits, partition_in_place, split_test, Region, SampleSpace,
    Side, Split,
};

/// Sentinel child reference for an empty (never materialized) subtree.
pub(crate) const NO_NODE: u32 = u32::MAX;

/// Hyperparameters of the response-space model for one predictor block.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptPrior {
    /// Stopping probability at every node.
    pub rho: f64,
    /// Dirichlet pseudo-counts for the two children of any split.
    pub alpha: [f64; 2],
    /// Nodes this many levels down are forced terminal.
    pub max_depth: u32,
}

impl Default for OptPrior {
    fn default() -> Self {
        Self { rho: 0.5, alpha: [0.5, 0.5], max_depth: 12 }
    }
}

impl OptPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidPrior(format!("stopping probability {} not in [0,1]", self.rho)));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidPrior(format!("pseudo-counts {:?} must be positive", self.alpha)));
        }
        Ok(())
    }

    /// The symmetric self-similar specification: equal pseudo-counts on both
    /// children (selection weights are always uniform here). Under it the
    /// prior mean is the uniform density, which licenses the single-point
    /// shortcuts.
    pub fn is_symmetric(&self) -> bool {
        self.alpha[0] == self.alpha[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeKind {
    /// Forced stop: undividable region or depth limit.
    Terminal,
    /// Single point under the symmetric prior; posterior equals prior below.
    Cut,
    /// Fully expanded stop-or-split mixture.
    Internal,
}

#[derive(Debug, Clone)]
pub(crate) struct LocalNode {
    pub n: u32,
    pub log_phi: f64,
    pub rho_post: f64,
    /// Posterior selection weights, aligned with `candidate_splits` order.
    pub lambda_post: Vec<f64>,
    /// Child counts per split; posterior pseudo-counts are `alpha + counts`.
    pub counts: Vec<[u32; 2]>,
    /// Child node ids per split (`NO_NODE` for empty children).
    pub children: Vec<[u32; 2]>,
    pub kind: NodeKind,
    /// For `Cut` nodes, the row of the single contained point.
    pub point: u32,
}

/// Exact posterior of the response-space model given one block's responses.
///
/// Only nodes containing data are materialized; everything below an empty
/// branch or a single-point cut equals the prior (plus that one point) and is
/// re-expanded on demand.
#[derive(Debug, Clone)]
pub struct LocalOptPosterior {
    space: SampleSpace,
    prior: OptPrior,
    ys: PointMatrix,
    nodes: Vec<LocalNode>,
}

/// Reusable index buffers for the marginal recursion, so repeated
/// evaluations over index subsets stay allocation-free.
#[derive(Debug, Default)]
pub(crate) struct OptScratch {
    idx: Vec<u32>,
    spare: Vec<u32>,
}

/// Marginal likelihood of a block of responses, in natural log.
///
/// Empty input gives 0 (likelihood 1).
pub fn opt_log_marginal(space: &SampleSpace, prior: &OptPrior, ys: &PointMatrix) -> Result<f64> {
    prior.validate()?;
    for (i, row) in ys.rows().enumerate() {
        space
            .check_point(row)
            .map_err(|e| Error::Data(format!("response row {i}: {e}")))?;
    }
    if ys.is_empty() {
        return Ok(0.0);
    }
    let table = DirichletFactorTable::new(prior.alpha, ys.len());
    let indices: Vec<u32> = (0..ys.len() as u32).collect();
    let mut scratch = OptScratch::default();
    Ok(opt_log_marginal_indexed(space, prior, ys, &indices, &table, &mut scratch))
}

/// Fit the exact posterior for one block of responses.
pub fn opt_posterior(space: &SampleSpace, prior: &OptPrior, ys: &PointMatrix) -> Result<LocalOptPosterior> {
    prior.validate()?;
    for (i, row) in ys.rows().enumerate() {
        space
            .check_point(row)
            .map_err(|e| Error::Data(format!("response row {i}: {e}")))?;
    }
    Ok(opt_posterior_unchecked(space, prior, ys.clone()))
}

/// Fit without re-validating inputs; `ys` must already lie in `space`.
pub(crate) fn opt_posterior_unchecked(
    space: &SampleSpace,
    prior: &OptPrior,
    ys: PointMatrix,
) -> LocalOptPosterior {
    let mut nodes = Vec::new();
    if !ys.is_empty() {
        let table = DirichletFactorTable::new(prior.alpha, ys.len());
        let mut idx: Vec<u32> = (0..ys.len() as u32).collect();
        let mut fit = OptFit::new(space, prior, &ys, &table, true);
        fit.visit(&mut Region::root(space), &mut idx);
        nodes = fit.nodes;
    }
    LocalOptPosterior { space: space.clone(), prior: prior.clone(), ys, nodes }
}

/// Marginal likelihood of an index subset of a shared response matrix.
/// Used by the predictor-side recursion, which owns the factor table and
/// the scratch buffers.
pub(crate) fn opt_log_marginal_indexed(
    space: &SampleSpace,
    prior: &OptPrior,
    ys: &PointMatrix,
    indices: &[u32],
    table: &DirichletFactorTable,
    scratch: &mut OptScratch,
) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let mut idx = std::mem::take(&mut scratch.idx);
    idx.clear();
    idx.extend_from_slice(indices);
    let mut fit = OptFit::new(space, prior, ys, table, false);
    std::mem::swap(&mut fit.scratch, &mut scratch.spare);
    let (log_phi, _) = fit.visit(&mut Region::root(space), &mut idx);
    std::mem::swap(&mut fit.scratch, &mut scratch.spare);
    scratch.idx = idx;
    log_phi
}

struct OptFit<'a> {
    space: &'a SampleSpace,
    prior: &'a OptPrior,
    ys: &'a PointMatrix,
    table: &'a DirichletFactorTable,
    store: bool,
    nodes: Vec<LocalNode>,
    /// Region -> (log_phi, node id). Only consulted when distinct split
    /// orders can reach the same region.
    memo: HashMap<Region, (f64, u32), FnvBuildHasher>,
    use_memo: bool,
    scratch: Vec<u32>,
}

impl<'a> OptFit<'a> {
    fn new(
        space: &'a SampleSpace,
        prior: &'a OptPrior,
        ys: &'a PointMatrix,
        table: &'a DirichletFactorTable,
        store: bool,
    ) -> Self {
        Self {
            space,
            prior,
            ys,
            table,
            store,
            nodes: Vec::new(),
            memo: HashMap::default(),
            use_memo: space.multiway(),
            scratch: Vec::new(),
        }
    }

    /// Compute log Phi for a nonempty region; returns (log_phi, node id).
    ///
    /// `idx` is partitioned in place while this call runs. The computed
    /// quantities (counts, measures, child values) are invariant to index
    /// order, so reordering is free.
    fn visit(&mut self, region: &mut Region, idx: &mut [u32]) -> (f64, u32) {
        debug_assert!(!idx.is_empty());
        if self.use_memo {
            if let Some(&hit) = self.memo.get(region) {
                return hit;
            }
        }
        let n = idx.len();
        let log_mu = region.log_measure(self.space);
        let stopped = -(n as f64) * log_mu;
        let n_splits = n_candidate_splits(self.space, region);

        let value = if n_splits == 0 || region.depth() >= self.prior.max_depth || self.prior.rho == 1.0 {
            self.finish(region, n, stopped, NodeKind::Terminal, 0, Vec::new(), Vec::new(), Vec::new())
        } else if n == 1 && self.prior.is_symmetric() {
            // Telescoping identity: the marginal of one point equals the
            // prior-mean density at it, and the posterior of every stop /
            // selection parameter below equals the prior.
            self.finish(region, n, -log_mu, NodeKind::Cut, idx[0], Vec::new(), Vec::new(), Vec::new())
        } else {
            let mut lse = StreamLse::new();
            let mut split_terms = Vec::new();
            let mut counts = Vec::new();
            let mut children = Vec::new();
            if self.store {
                split_terms.reserve(n_splits);
                counts.reserve(n_splits);
                children.reserve(n_splits);
            }
            for dim in 0..self.space.n_dims() {
                if !crate::space::is_splittable(self.space, region, dim) {
                    continue;
                }
                let split = Split { dim };
                let test = split_test(self.space, region, split);
                let ys = self.ys;
                let mid = partition_in_place(idx, test, |i| ys.coord(i, dim), &mut self.scratch);
                let (left, right) = idx.split_at_mut(mid);
                let mut term = self.table.log_factor(left.len(), right.len());
                let mut kids = [NO_NODE; 2];
                if !left.is_empty() {
                    let old = region.descend(split, Side::Left);
                    let (lp, lid) = self.visit(region, left);
                    region.ascend(split, old);
                    term += lp;
                    kids[0] = lid;
                }
                if !right.is_empty() {
                    let old = region.descend(split, Side::Right);
                    let (rp, rid) = self.visit(region, right);
                    region.ascend(split, old);
                    term += rp;
                    kids[1] = rid;
                }
                lse.add(term);
                if self.store {
                    counts.push([left.len() as u32, right.len() as u32]);
                    children.push(kids);
                    split_terms.push(term);
                }
            }
            let log_split_sum =
                (1.0 - self.prior.rho).ln() - (n_splits as f64).ln() + lse.value();
            let log_phi = log_sum_exp2(self.prior.rho.ln() + stopped, log_split_sum);
            let lambda_post = if self.store {
                let norm = log_sum_exp(&split_terms);
                split_terms.iter().map(|&t| (t - norm).exp()).collect()
            } else {
                Vec::new()
            };
            self.finish(region, n, log_phi, NodeKind::Internal, 0, lambda_post, counts, children)
        };
        if self.use_memo {
            self.memo.insert(region.clone(), value);
        }
        value
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &mut self,
        region: &Region,
        n: usize,
        log_phi: f64,
        kind: NodeKind,
        cut_point: u32,
        lambda_post: Vec<f64>,
        counts: Vec<[u32; 2]>,
        children: Vec<[u32; 2]>,
    ) -> (f64, u32) {
        if !self.store {
            return (log_phi, NO_NODE);
        }
        let stopped = -(n as f64) * region.log_measure(self.space);
        let rho_post = match kind {
            NodeKind::Terminal => 1.0,
            _ => (self.prior.rho.ln() + stopped - log_phi).exp().min(1.0),
        };
        let id = self.nodes.len() as u32;
        self.nodes.push(LocalNode {
            n: n as u32,
            log_phi,
            rho_post,
            lambda_post,
            counts,
            children,
            kind,
            point: cut_point,
        });
        (log_phi, id)
    }
}

/// Prior-mean density at `y` of the model restricted to `region`.
///
/// Uniform under the symmetric specification; otherwise evaluated by the
/// explicit recursion down to the depth limit.
pub fn prior_mean_density(space: &SampleSpace, prior: &OptPrior, region: &Region, y: &[f64]) -> f64 {
    let u = (-region.log_measure(space)).exp();
    if prior.is_symmetric() {
        return u;
    }
    let splits = candidate_splits(space, region);
    if splits.is_empty() || region.depth() >= prior.max_depth {
        return u;
    }
    let alpha_sum = prior.alpha[0] + prior.alpha[1];
    let mut acc = prior.rho * u;
    let w = (1.0 - prior.rho) / splits.len() as f64;
    for &split in &splits {
        let side = region.side_of(space, split, y);
        let e_theta = prior.alpha[side.index()] / alpha_sum;
        let child = region.child(split, side);
        acc += w * e_theta * prior_mean_density(space, prior, &child, y);
    }
    acc
}

impl LocalOptPosterior {
    /// Nodes are stored children-before-parents, so the root is last.
    fn root_id(&self) -> u32 {
        (self.nodes.len() - 1) as u32
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
    }

    pub fn prior(&self) -> &OptPrior {
        &self.prior
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    /// log of the block's marginal likelihood (0 when the block is empty).
    pub fn log_marginal(&self) -> f64 {
        self.nodes.last().map(|n| n.log_phi).unwrap_or(0.0)
    }

    /// Posterior stopping probability at the root of the response space;
    /// equals the prior stopping probability when the block is empty.
    pub fn root_stop_probability(&self) -> f64 {
        self.nodes.last().map(|n| n.rho_post).unwrap_or(self.prior.rho)
    }

    /// (stop probability, selection weights, n) per materialized node.
    pub fn node_summaries(&self) -> impl Iterator<Item = (f64, &[f64], u32)> {
        self.nodes.iter().map(|n| (n.rho_post, n.lambda_post.as_slice(), n.n))
    }

    /// Posterior-mean density at a response point.
    pub fn mean_density(&self, y: &[f64]) -> Result<f64> {
        self.space.check_point(y)?;
        Ok(self.mean_density_raw(y))
    }

    /// Posterior-mean density without input validation; `y` must lie in the
    /// response space.
    pub(crate) fn mean_density_raw(&self, y: &[f64]) -> f64 {
        let root = Region::root(&self.space);
        if self.nodes.is_empty() {
            return prior_mean_density(&self.space, &self.prior, &root, y);
        }
        self.mean_rec(self.root_id(), &root, y)
    }

    fn mean_rec(&self, id: u32, region: &Region, y: &[f64]) -> f64 {
        let node = &self.nodes[id as usize];
        let u = (-region.log_measure(&self.space)).exp();
        match node.kind {
            NodeKind::Terminal => u,
            NodeKind::Cut => self.singleton_mean(region, y, node.point),
            NodeKind::Internal => {
                let splits = candidate_splits(&self.space, region);
                let alpha = self.prior.alpha;
                let mut acc = node.rho_post * u;
                let w = 1.0 - node.rho_post;
                for (j, &split) in splits.iter().enumerate() {
                    let side = region.side_of(&self.space, split, y);
                    let c = node.counts[j];
                    let e_theta = (alpha[side.index()] + c[side.index()] as f64)
                        / (alpha[0] + alpha[1] + node.n as f64);
                    let child_region = region.child(split, side);
                    let child = node.children[j][side.index()];
                    let m_child = if child == NO_NODE {
                        prior_mean_density(&self.space, &self.prior, &child_region, y)
                    } else {
                        self.mean_rec(child, &child_region, y)
                    };
                    acc += w * node.lambda_post[j] * e_theta * m_child;
                }
                acc
            }
        }
    }

    /// Mean density below a single-point node: the stop and selection
    /// posteriors equal the prior there, and the mass posterior tilts toward
    /// the side holding the point.
    fn singleton_mean(&self, region: &Region, y: &[f64], point: u32) -> f64 {
        let y0 = self.ys.row(point);
        self.singleton_mean_rec(region, y, y0)
    }

    fn singleton_mean_rec(&self, region: &Region, y: &[f64], y0: &[f64]) -> f64 {
        let u = (-region.log_measure(&self.space)).exp();
        let splits = candidate_splits(&self.space, region);
        if splits.is_empty() || region.depth() >= self.prior.max_depth {
            return u;
        }
        let alpha = self.prior.alpha;
        let alpha_n = alpha[0] + alpha[1] + 1.0;
        let mut acc = self.prior.rho * u;
        let w = (1.0 - self.prior.rho) / splits.len() as f64;
        for &split in &splits {
            let side = region.side_of(&self.space, split, y);
            let side0 = region.side_of(&self.space, split, y0);
            let count = if side == side0 { 1.0 } else { 0.0 };
            let e_theta = (alpha[side.index()] + count) / alpha_n;
            let child = region.child(split, side);
            let m_child = if side == side0 {
                self.singleton_mean_rec(&child, y, y0)
            } else {
                prior_mean_density(&self.space, &self.prior, &child, y)
            };
            acc += w * e_theta * m_child;
        }
        acc
    }

    /// Draw one density from the posterior by direct top-down simulation.
    pub fn sample_density<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledDensity {
        let mut out = SampledDensity { space: self.space.clone(), nodes: Vec::new() };
        let root = Region::root(&self.space);
        if self.nodes.is_empty() {
            out.sample_prior(&self.prior, rng, &root, 0.0, None);
        } else {
            self.sample_rec(self.root_id(), &root, 0.0, rng, &mut out);
        }
        out
    }

    fn sample_rec<R: Rng + ?Sized>(
        &self,
        id: u32,
        region: &Region,
        log_mass: f64,
        rng: &mut R,
        out: &mut SampledDensity,
    ) -> u32 {
        let node = &self.nodes[id as usize];
        match node.kind {
            NodeKind::Terminal => out.push_leaf(region, log_mass),
            NodeKind::Cut => {
                let y0 = self.ys.row(node.point).to_vec();
                out.sample_prior(&self.prior, rng, region, log_mass, Some(&y0))
            }
            NodeKind::Internal => {
                if rng.random::<f64>() < node.rho_post {
                    return out.push_leaf(region, log_mass);
                }
                let j = sample_categorical(rng, &node.lambda_post);
                let split = candidate_splits(&self.space, region)[j];
                let c = node.counts[j];
                let a = self.prior.alpha[0] + c[0] as f64;
                let b = self.prior.alpha[1] + c[1] as f64;
                let theta = sample_beta(rng, a, b);
                let slot = out.push_split(split);
                let kids = node.children[j];
                let sides = [Side::Left, Side::Right];
                let masses = [log_mass + theta.ln(), log_mass + (1.0 - theta).ln()];
                for s in 0..2 {
                    let child_region = region.child(split, sides[s]);
                    let child = if kids[s] == NO_NODE {
                        out.sample_prior(&self.prior, rng, &child_region, masses[s], None)
                    } else {
                        self.sample_rec(kids[s], &child_region, masses[s], rng, out)
                    };
                    out.set_child(slot, s, child);
                }
                slot
            }
        }
    }
}

fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("positive shape parameters").sample(rng)
}

/// One draw from the posterior: a piecewise-constant density stored as the
/// sampled stop/split tree.
#[derive(Debug, Clone)]
pub struct SampledDensity {
    space: SampleSpace,
    nodes: Vec<SampledNode>,
}

#[derive(Debug, Clone)]
struct SampledNode {
    split: Option<Split>,
    children: [u32; 2],
    log_density: f64,
}

impl SampledDensity {
    fn push_leaf(&mut self, region: &Region, log_mass: f64) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(SampledNode {
            split: None,
            children: [NO_NODE; 2],
            log_density: log_mass - region.log_measure(&self.space),
        });
        id
    }

    fn push_split(&mut self, split: Split) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(SampledNode { split: Some(split), children: [NO_NODE; 2], log_density: 0.0 });
        id
    }

    fn set_child(&mut self, slot: u32, side: usize, child: u32) {
        self.nodes[slot as usize].children[side] = child;
    }

    /// Continue the two-stage draw through territory the fit never
    /// materialized: prior parameters, plus one observed point when the draw
    /// descends below a single-point cut.
    fn sample_prior<R: Rng + ?Sized>(
        &mut self,
        prior: &OptPrior,
        rng: &mut R,
        region: &Region,
        log_mass: f64,
        point: Option<&[f64]>,
    ) -> u32 {
        let splits = candidate_splits(&self.space, region);
        if splits.is_empty() || region.depth() >= prior.max_depth {
            return self.push_leaf(region, log_mass);
        }
        let rho_post = prior.rho; // exact: a lone point leaves stop/selection unchanged
        if rng.random::<f64>() < rho_post {
            return self.push_leaf(region, log_mass);
        }
        let j = rng.random_range(0..splits.len());
        let split = splits[j];
        let side0 = point.map(|p| region.side_of(&self.space, split, p));
        let mut alpha = prior.alpha;
        if let Some(s) = side0 {
            alpha[s.index()] += 1.0;
        }
        let theta = sample_beta(rng, alpha[0], alpha[1]);
        let slot = self.push_split(split);
        let sides = [Side::Left, Side::Right];
        let masses = [log_mass + theta.ln(), log_mass + (1.0 - theta).ln()];
        for s in 0..2 {
            let child_region = region.child(split, sides[s]);
            let child_point = match side0 {
                Some(s0) if s0.index() == s => point,
                _ => None,
            };
            let child = self.sample_prior(prior, rng, &child_region, masses[s], child_point);
            self.set_child(slot, s, child);
        }
        slot
    }

    /// Density value at a response point.
    pub fn density(&self, y: &[f64]) -> Result<f64> {
        self.space.check_point(y)?;
        let mut id = 0u32;
        let mut region = Region::root(&self.space);
        loop {
            let node = &self.nodes[id as usize];
            match node.split {
                None => return Ok(node.log_density.exp()),
                Some(split) => {
                    let side = region.side_of(&self.space, split, y);
                    region = region.child(split, side);
                    id = node.children[side.index()];
                }
            }
        }
    }

    /// Exact integral over the whole response space (cell sums).
    pub fn integral(&self) -> f64 {
        self.integral_rec(0, &Region::root(&self.space))
    }

    fn integral_rec(&self, id: u32, region: &Region) -> f64 {
        let node = &self.nodes[id as usize];
        match node.split {
            None => node.log_density.exp() * region.measure(&self.space),
            Some(split) => {
                self.integral_rec(node.children[0], &region.child(split, Side::Left))
                    + self.integral_rec(node.children[1], &region.child(split, Side::Right))
            }
        }
    }
}
