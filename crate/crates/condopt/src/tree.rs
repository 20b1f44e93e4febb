//! The fitted posterior: node table, predictive density, modal partition
//! summary, direct posterior sampling, and variable-selection summaries.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::CondOptPrior;
use crate::local::{
    opt_posterior_unchecked, prior_mean_density, LocalOptPosterior, SampledDensity,
};
pub(crate) use crate::local::NO_NODE;
use crate::space::{candidate_splits, partition_points, Region, SampleSpace, Side, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum XNodeKind {
    /// Forced stop (undividable, depth limit, or point-count floor).
    Terminal,
    /// At most one point under the symmetric local prior: stop and selection
    /// posteriors equal the prior, subtree re-expanded on demand.
    Cut,
    /// Fully expanded stop-or-split mixture.
    Internal,
}

#[derive(Debug, Clone)]
pub(crate) struct TreeNode {
    /// Canonical (first-arrival) split path from the root: (dim, side).
    pub path: Vec<(u16, u8)>,
    pub depth: u32,
    pub n: u32,
    /// Rows of the dataset falling in this region, in original order.
    pub points: Vec<u32>,
    pub kind: XNodeKind,
    pub log_m: f64,
    pub log_phi: f64,
    pub rho_post: f64,
    /// Posterior selection weights aligned with `candidate_splits` order;
    /// empty for terminal nodes.
    pub lambda_post: Vec<f64>,
    /// Child node ids per split; `NO_NODE` marks an empty child.
    pub children: Vec<[u32; 2]>,
}

/// Exact posterior of the two-stage model, stored as a table of
/// data-occupied regions in bottom-up order (the root is last). Regions
/// reached by several split orders are shared. Local response-space
/// posteriors are materialized lazily and cached.
pub struct PosteriorTree {
    space_x: SampleSpace,
    space_y: SampleSpace,
    prior: CondOptPrior,
    data: Dataset,
    nodes: Vec<TreeNode>,
    locals: Vec<OnceLock<LocalOptPosterior>>,
}

/// Read-only view of one stored node, for inspection and tests.
#[derive(Debug, Clone)]
pub struct NodeView<'a> {
    pub id: u32,
    pub path: &'a [(u16, u8)],
    pub depth: u32,
    pub n: u32,
    pub log_phi: f64,
    pub log_m: f64,
    pub rho_post: f64,
    pub lambda_post: &'a [f64],
    /// True for forced stops (rho_post pinned to 1).
    pub terminal: bool,
    /// Child ids per candidate split; `PosteriorTree::NO_CHILD` marks an
    /// empty child.
    pub children: &'a [[u32; 2]],
}

impl PosteriorTree {
    /// Sentinel id for an empty child reference in [`NodeView::children`].
    pub const NO_CHILD: u32 = NO_NODE;

    pub(crate) fn assemble(
        space_x: SampleSpace,
        space_y: SampleSpace,
        prior: CondOptPrior,
        data: Dataset,
        nodes: Vec<TreeNode>,
    ) -> Self {
        let locals = (0..nodes.len()).map(|_| OnceLock::new()).collect();
        Self { space_x, space_y, prior, data, nodes, locals }
    }

    pub(crate) fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub(crate) fn root_id(&self) -> u32 {
        (self.nodes.len() - 1) as u32
    }

    fn root(&self) -> &TreeNode {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn space_x(&self) -> &SampleSpace {
        &self.space_x
    }

    pub fn space_y(&self) -> &SampleSpace {
        &self.space_y
    }

    pub fn prior(&self) -> &CondOptPrior {
        &self.prior
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Number of observations the posterior conditions on.
    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Number of materialized partition nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Posterior probability that the partition stops at the whole
    /// predictor space.
    pub fn root_rho_post(&self) -> f64 {
        self.root().rho_post
    }

    /// log Phi at the root: the total marginal likelihood of the data.
    pub fn root_log_phi(&self) -> f64 {
        self.root().log_phi
    }

    /// log M at the root: the marginal likelihood under the undivided model.
    pub fn root_log_m(&self) -> f64 {
        self.root().log_m
    }

    /// log of the split-vs-stop Bayes factor at the root,
    /// log[(Phi - rho M) / ((1 - rho) M)], evaluated in log space.
    pub fn root_log_bayes_factor(&self) -> f64 {
        let r = self.root();
        crate::math::log_diff_exp(r.log_phi, self.prior.rho.ln() + r.log_m)
            - (1.0 - self.prior.rho).ln()
            - r.log_m
    }

    pub fn node_views(&self) -> impl Iterator<Item = NodeView<'_>> {
        self.nodes.iter().enumerate().map(|(id, n)| NodeView {
            id: id as u32,
            path: &n.path,
            depth: n.depth,
            n: n.n,
            log_phi: n.log_phi,
            log_m: n.log_m,
            rho_post: n.rho_post,
            lambda_post: &n.lambda_post,
            terminal: n.kind == XNodeKind::Terminal,
            children: &n.children,
        })
    }

    /// Region of a stored node, reconstructed from its canonical path.
    pub fn node_region(&self, id: u32) -> Region {
        let mut region = Region::root(&self.space_x);
        for &(dim, side) in &self.nodes[id as usize].path {
            region = region.child(Split { dim: dim as usize }, Side::from_index(side as usize));
        }
        region
    }

    /// The response-space posterior of one stored block, fitted on first
    /// access and cached.
    pub(crate) fn local_posterior(&self, id: u32) -> &LocalOptPosterior {
        self.locals[id as usize].get_or_init(|| {
            let node = &self.nodes[id as usize];
            let ys = self.data.y.gather(&node.points);
            opt_posterior_unchecked(&self.space_y, &self.prior.local, ys)
        })
    }

    // ------------------------------------------------------------------
    // Predictive density
    // ------------------------------------------------------------------

    /// Posterior-mean conditional density at (x, y). For each fixed x this
    /// integrates to 1 over the response space.
    pub fn predict_density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.space_x.check_point(x)?;
        self.space_y.check_point(y)?;
        let m0 =
            prior_mean_density(&self.space_y, &self.prior.local, &Region::root(&self.space_y), y);
        let mut memo = HashMap::new();
        Ok(self.predict_rec(self.root_id(), &Region::root(&self.space_x), x, y, m0, &mut memo))
    }

    fn predict_rec(
        &self,
        id: u32,
        region: &Region,
        x: &[f64],
        y: &[f64],
        m0: f64,
        memo: &mut HashMap<u32, f64>,
    ) -> f64 {
        if let Some(&v) = memo.get(&id) {
            return v;
        }
        let node = &self.nodes[id as usize];
        let v = match node.kind {
            XNodeKind::Terminal => self.local_posterior(id).mean_density_raw(y),
            XNodeKind::Cut => {
                if node.n == 0 {
                    m0
                } else {
                    let m1 = self.local_posterior(id).mean_density_raw(y);
                    let x0 = self.data.x.row(node.points[0]);
                    let mut sub = HashMap::new();
                    self.predict_singleton(region, x, x0, m1, m0, &mut sub)
                }
            }
            XNodeKind::Internal => {
                let splits = candidate_splits(&self.space_x, region);
                let mut acc = node.rho_post * self.local_posterior(id).mean_density_raw(y);
                let w = 1.0 - node.rho_post;
                for (j, &split) in splits.iter().enumerate() {
                    let side = region.side_of(&self.space_x, split, x);
                    let child = node.children[j][side.index()];
                    let pv = if child == NO_NODE {
                        m0
                    } else {
                        self.predict_rec(child, &region.child(split, side), x, y, m0, memo)
                    };
                    acc += w * node.lambda_post[j] * pv;
                }
                acc
            }
        };
        memo.insert(id, v);
        v
    }

    /// Predictive below a single-point node. The stop/selection posteriors
    /// equal the prior there; the only data influence is whether x shares a
    /// region with the stored point, whose block then carries the
    /// one-point local mean `m1` instead of the prior mean `m0`.
    fn predict_singleton(
        &self,
        region: &Region,
        x: &[f64],
        x0: &[f64],
        m1: f64,
        m0: f64,
        memo: &mut HashMap<Region, f64>,
    ) -> f64 {
        if let Some(&v) = memo.get(region) {
            return v;
        }
        let splits = candidate_splits(&self.space_x, region);
        let v = if splits.is_empty() || region.depth() >= self.prior.max_depth_x {
            m1
        } else {
            let rho = self.prior.rho;
            let mut acc = rho * m1;
            let w = (1.0 - rho) / splits.len() as f64;
            for &split in &splits {
                let side = region.side_of(&self.space_x, split, x);
                if side == region.side_of(&self.space_x, split, x0) {
                    acc += w * self.predict_singleton(&region.child(split, side), x, x0, m1, m0, memo);
                } else {
                    acc += w * m0;
                }
            }
            acc
        };
        memo.insert(region.clone(), v);
        v
    }

    // ------------------------------------------------------------------
    // hMAP summary
    // ------------------------------------------------------------------

    /// Top-down modal partition: stop wherever the posterior stopping
    /// probability is at least 1/2, otherwise take the modal split (ties
    /// broken by lowest dimension) and recurse into both children.
    pub fn hmap(&self) -> HmapTree {
        let root = Region::root(&self.space_x);
        HmapTree { root: self.hmap_rec(self.root_id(), root) }
    }

    fn hmap_rec(&self, id: u32, region: Region) -> HmapNode {
        let node = &self.nodes[id as usize];
        if node.rho_post >= 0.5 {
            return HmapNode::Stop { region, rho_post: node.rho_post, n: node.n, node: Some(id) };
        }
        match node.kind {
            XNodeKind::Terminal => unreachable!("terminal nodes have rho_post = 1"),
            XNodeKind::Cut => self.hmap_expand(region, node.points.clone()),
            XNodeKind::Internal => {
                let splits = candidate_splits(&self.space_x, &region);
                let j = argmax_first(&node.lambda_post);
                let split = splits[j];
                let kids = node.children[j];
                let children = [Side::Left, Side::Right].map(|side| {
                    let child_region = region.child(split, side);
                    if kids[side.index()] == NO_NODE {
                        self.hmap_expand(child_region, Vec::new())
                    } else {
                        self.hmap_rec(kids[side.index()], child_region)
                    }
                });
                HmapNode::Split {
                    region,
                    rho_post: node.rho_post,
                    n: node.n,
                    split,
                    children: Box::new(children),
                }
            }
        }
    }

    /// Continue the modal walk through unmaterialized territory, where the
    /// stop/selection posteriors equal the prior (at most one point lives
    /// here, which leaves them unchanged).
    fn hmap_expand(&self, region: Region, points: Vec<u32>) -> HmapNode {
        let n = points.len() as u32;
        let splits = candidate_splits(&self.space_x, &region);
        if splits.is_empty() || region.depth() >= self.prior.max_depth_x {
            return HmapNode::Stop { region, rho_post: 1.0, n, node: None };
        }
        if self.prior.rho >= 0.5 {
            return HmapNode::Stop { region, rho_post: self.prior.rho, n, node: None };
        }
        // Uniform selection posterior: lowest dimension wins the tie.
        let split = splits[0];
        let (left, right) = partition_points(&self.space_x, &region, split, &points, |i| {
            self.data.x.coord(i, split.dim)
        });
        let children = [(Side::Left, left), (Side::Right, right)].map(|(side, pts)| {
            self.hmap_expand(region.child(split, side), pts)
        });
        HmapNode::Split { region, rho_post: self.prior.rho, n, split, children: Box::new(children) }
    }

    // ------------------------------------------------------------------
    // Posterior sampling
    // ------------------------------------------------------------------

    /// Draw one partition of the predictor space from the posterior.
    pub fn sample_partition<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledPartition {
        let mut blocks = Vec::new();
        let mut dims = BTreeSet::new();
        self.sample_rec(self.root_id(), Region::root(&self.space_x), rng, &mut blocks, &mut dims);
        SampledPartition { blocks, split_dims: dims.into_iter().collect() }
    }

    fn sample_rec<R: Rng + ?Sized>(
        &self,
        id: u32,
        region: Region,
        rng: &mut R,
        blocks: &mut Vec<SampledBlock>,
        dims: &mut BTreeSet<usize>,
    ) {
        let node = &self.nodes[id as usize];
        match node.kind {
            XNodeKind::Terminal => blocks.push(SampledBlock {
                region,
                forced: true,
                n: node.n,
                source: BlockSource::Node(id),
            }),
            XNodeKind::Cut => self.sample_expand(region, node.points.clone(), rng, blocks, dims),
            XNodeKind::Internal => {
                if rng.random::<f64>() < node.rho_post {
                    blocks.push(SampledBlock {
                        region,
                        forced: false,
                        n: node.n,
                        source: BlockSource::Node(id),
                    });
                    return;
                }
                let j = sample_categorical(rng, &node.lambda_post);
                let splits = candidate_splits(&self.space_x, &region);
                let split = splits[j];
                dims.insert(split.dim);
                let kids = node.children[j];
                for side in [Side::Left, Side::Right] {
                    let child_region = region.child(split, side);
                    if kids[side.index()] == NO_NODE {
                        self.sample_expand(child_region, Vec::new(), rng, blocks, dims);
                    } else {
                        self.sample_rec(kids[side.index()], child_region, rng, blocks, dims);
                    }
                }
            }
        }
    }

    /// Extend a partition draw below the stored tree using prior
    /// parameters (exact: at most one point lives down here, which leaves
    /// the stop/selection posteriors unchanged).
    fn sample_expand<R: Rng + ?Sized>(
        &self,
        region: Region,
        points: Vec<u32>,
        rng: &mut R,
        blocks: &mut Vec<SampledBlock>,
        dims: &mut BTreeSet<usize>,
    ) {
        let splits = candidate_splits(&self.space_x, &region);
        if splits.is_empty() || region.depth() >= self.prior.max_depth_x {
            let n = points.len() as u32;
            blocks.push(SampledBlock { region, forced: true, n, source: BlockSource::Free(points) });
            return;
        }
        if rng.random::<f64>() < self.prior.rho {
            let n = points.len() as u32;
            blocks.push(SampledBlock { region, forced: false, n, source: BlockSource::Free(points) });
            return;
        }
        let j = rng.random_range(0..splits.len());
        let split = splits[j];
        dims.insert(split.dim);
        let (left, right) = partition_points(&self.space_x, &region, split, &points, |i| {
            self.data.x.coord(i, split.dim)
        });
        self.sample_expand(region.child(split, Side::Left), left, rng, blocks, dims);
        self.sample_expand(region.child(split, Side::Right), right, rng, blocks, dims);
    }

    /// Draw one full conditional density: a partition plus one response
    /// density per block.
    pub fn sample_conditional_density<R: Rng + ?Sized>(&self, rng: &mut R) -> ConditionalDensityDraw {
        let partition = self.sample_partition(rng);
        let blocks = partition
            .blocks
            .into_iter()
            .map(|b| {
                let density = match &b.source {
                    BlockSource::Node(id) => self.local_posterior(*id).sample_density(rng),
                    BlockSource::Free(points) => {
                        let ys = self.data.y.gather(points);
                        opt_posterior_unchecked(&self.space_y, &self.prior.local, ys)
                            .sample_density(rng)
                    }
                };
                (b.region, density)
            })
            .collect();
        ConditionalDensityDraw { space_x: self.space_x.clone(), blocks }
    }

    /// Fraction of sampled partitions in which each predictor dimension is
    /// split on somewhere.
    pub fn inclusion_probabilities<R: Rng + ?Sized>(&self, draws: usize, rng: &mut R) -> Vec<f64> {
        let mut counts = vec![0usize; self.space_x.n_dims()];
        for _ in 0..draws {
            let p = self.sample_partition(rng);
            for d in p.split_dims {
                counts[d] += 1;
            }
        }
        counts.into_iter().map(|c| c as f64 / draws.max(1) as f64).collect()
    }
}

/// First index of the maximal weight (lowest dimension wins ties).
fn argmax_first(weights: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..weights.len() {
        if weights[j] > weights[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
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

/// Modal partition summary.
#[derive(Debug, Clone)]
pub struct HmapTree {
    pub root: HmapNode,
}

#[derive(Debug, Clone)]
pub enum HmapNode {
    Stop {
        region: Region,
        rho_post: f64,
        n: u32,
        /// Stored node whose local posterior describes this block, when one
        /// exists (blocks reached through re-expansion have none).
        node: Option<u32>,
    },
    Split {
        region: Region,
        rho_post: f64,
        n: u32,
        split: Split,
        children: Box<[HmapNode; 2]>,
    },
}

impl HmapTree {
    /// The stopped blocks, left to right.
    pub fn leaves(&self) -> Vec<&HmapNode> {
        let mut out = Vec::new();
        fn walk<'a>(node: &'a HmapNode, out: &mut Vec<&'a HmapNode>) {
            match node {
                HmapNode::Stop { .. } => out.push(node),
                HmapNode::Split { children, .. } => {
                    walk(&children[0], out);
                    walk(&children[1], out);
                }
            }
        }
        walk(&self.root, &mut out);
        out
    }

    /// Dimensions used by internal splits.
    pub fn split_dims(&self) -> Vec<usize> {
        let mut dims = BTreeSet::new();
        fn walk(node: &HmapNode, dims: &mut BTreeSet<usize>) {
            if let HmapNode::Split { split, children, .. } = node {
                dims.insert(split.dim);
                walk(&children[0], dims);
                walk(&children[1], dims);
            }
        }
        walk(&self.root, &mut dims);
        dims.into_iter().collect()
    }
}

/// One block of a sampled partition.
#[derive(Debug, Clone)]
pub struct SampledBlock {
    pub region: Region,
    /// True when the stop was forced by a depth/divisibility limit.
    pub forced: bool,
    pub n: u32,
    pub(crate) source: BlockSource,
}

#[derive(Debug, Clone)]
pub(crate) enum BlockSource {
    Node(u32),
    Free(Vec<u32>),
}

/// One partition drawn from the posterior.
#[derive(Debug, Clone)]
pub struct SampledPartition {
    /// Disjoint blocks covering the predictor space.
    pub blocks: Vec<SampledBlock>,
    /// Distinct dimensions split on, ascending.
    pub split_dims: Vec<usize>,
}

/// One conditional density drawn from the posterior.
#[derive(Debug, Clone)]
pub struct ConditionalDensityDraw {
    space_x: SampleSpace,
    blocks: Vec<(Region, SampledDensity)>,
}

impl ConditionalDensityDraw {
    /// Value of the drawn density at (x, y).
    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.space_x.check_point(x)?;
        for (region, d) in &self.blocks {
            if region.contains(&self.space_x, x) {
                return d.density(y);
            }
        }
        Err(Error::Data("sampled partition does not cover x".into()))
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }
}
