//! Model persistence: one JSON document holding the spaces, prior, data,
//! and the node table (path, n, log Phi, log M, posterior stop probability,
//! selection weights, children keyed by split index). Floats survive the
//! round trip bit-exactly via shortest-round-trip encoding; per-node point
//! lists are rebuilt on load by replaying the stored structure over the
//! data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::CondOptPrior;
use crate::space::{candidate_splits, partition_points, Region, SampleSpace};
use crate::tree::{PosteriorTree, TreeNode, XNodeKind, NO_NODE};

const FORMAT: &str = "condopt-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    space_x: SampleSpace,
    space_y: SampleSpace,
    prior: CondOptPrior,
    data: Dataset,
    root: u32,
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    path: Vec<(u16, u8)>,
    n: u32,
    kind: String,
    log_phi: f64,
    log_m: f64,
    rho_post: f64,
    lambda_post: Vec<f64>,
    /// split index -> [left child id, right child id]; null marks an empty
    /// child.
    children: BTreeMap<u32, [Option<u32>; 2]>,
}

fn kind_str(kind: XNodeKind) -> &'static str {
    match kind {
        XNodeKind::Terminal => "terminal",
        XNodeKind::Cut => "cut",
        XNodeKind::Internal => "internal",
    }
}

fn parse_kind(s: &str) -> Result<XNodeKind> {
    match s {
        "terminal" => Ok(XNodeKind::Terminal),
        "cut" => Ok(XNodeKind::Cut),
        "internal" => Ok(XNodeKind::Internal),
        other => Err(Error::Serialize(format!("unknown node kind {other:?}"))),
    }
}

impl PosteriorTree {
    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string(&self.to_doc()).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, &self.to_doc()).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s).map_err(|e| Error::Serialize(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let doc: ModelDoc =
            serde_json::from_reader(r).map_err(|e| Error::Serialize(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn to_doc(&self) -> ModelDoc {
        let nodes = self
            .nodes()
            .iter()
            .map(|n| NodeDoc {
                path: n.path.clone(),
                n: n.n,
                kind: kind_str(n.kind).to_string(),
                log_phi: n.log_phi,
                log_m: n.log_m,
                rho_post: n.rho_post,
                lambda_post: n.lambda_post.clone(),
                children: n
                    .children
                    .iter()
                    .enumerate()
                    .map(|(j, kids)| {
                        let opt = |id: u32| if id == NO_NODE { None } else { Some(id) };
                        (j as u32, [opt(kids[0]), opt(kids[1])])
                    })
                    .collect(),
            })
            .collect();
        ModelDoc {
            format: FORMAT.to_string(),
            version: VERSION,
            space_x: self.space_x().clone(),
            space_y: self.space_y().clone(),
            prior: self.prior().clone(),
            data: self.data().clone(),
            root: self.root_id(),
            nodes,
        }
    }

    fn from_doc(doc: ModelDoc) -> Result<Self> {
        if doc.format != FORMAT {
            return Err(Error::Serialize(format!("not a model document: format {:?}", doc.format)));
        }
        if doc.version != VERSION {
            return Err(Error::Serialize(format!("unsupported model version {}", doc.version)));
        }
        let space_x = SampleSpace::new(doc.space_x.dims().to_vec())?;
        let space_y = SampleSpace::new(doc.space_y.dims().to_vec())?;
        doc.prior.validate()?;
        let data = Dataset::new(doc.data.x, doc.data.y)?;
        data.validate(&space_x, &space_y)?;

        if doc.nodes.is_empty() {
            return Err(Error::Serialize("model has no nodes".into()));
        }
        if doc.root as usize != doc.nodes.len() - 1 {
            return Err(Error::Serialize("root must be the last node".into()));
        }

        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (id, nd) in doc.nodes.iter().enumerate() {
            let kind = parse_kind(&nd.kind)?;
            let n_splits = nd.children.len();
            let mut children = vec![[NO_NODE; 2]; n_splits];
            for (&j, kids) in &nd.children {
                if j as usize >= n_splits {
                    return Err(Error::Serialize(format!(
                        "node {id}: split indices must be contiguous from 0"
                    )));
                }
                for (side, kid) in kids.iter().enumerate() {
                    if let Some(c) = kid {
                        if *c as usize >= id {
                            return Err(Error::Serialize(format!(
                                "node {id}: child {c} does not precede its parent"
                            )));
                        }
                        children[j as usize][side] = *c;
                    }
                }
            }
            if kind == XNodeKind::Internal && n_splits == 0 {
                return Err(Error::Serialize(format!("node {id}: internal node without splits")));
            }
            if !nd.log_phi.is_finite() || !nd.log_m.is_finite() {
                return Err(Error::Serialize(format!("node {id}: non-finite marginals")));
            }
            if !(0.0..=1.0).contains(&nd.rho_post) {
                return Err(Error::Serialize(format!("node {id}: rho_post outside [0,1]")));
            }
            nodes.push(TreeNode {
                path: nd.path.clone(),
                depth: nd.path.len() as u32,
                n: nd.n,
                points: Vec::new(),
                kind,
                log_m: nd.log_m,
                log_phi: nd.log_phi,
                rho_post: nd.rho_post,
                lambda_post: nd.lambda_post.clone(),
                children,
            });
        }

        rebuild_points(&space_x, &data, &mut nodes)?;
        Ok(PosteriorTree::assemble(space_x, space_y, doc.prior, data, nodes))
    }
}

/// Re-derive each node's point list by partitioning the data down the
/// stored structure. Deterministic, so a loaded model reproduces the fitted
/// one exactly.
fn rebuild_points(space_x: &SampleSpace, data: &Dataset, nodes: &mut [TreeNode]) -> Result<()> {
    let root = nodes.len() - 1;
    let mut filled = vec![false; nodes.len()];
    let all: Vec<u32> = (0..data.len() as u32).collect();
    let mut stack: Vec<(usize, Region, Vec<u32>)> =
        vec![(root, Region::root(space_x), all)];

    while let Some((id, region, indices)) = stack.pop() {
        if filled[id] {
            if indices != nodes[id].points {
                return Err(Error::Serialize(format!(
                    "node {id}: inconsistent point lists across parents"
                )));
            }
            continue;
        }
        if indices.len() != nodes[id].n as usize {
            return Err(Error::Serialize(format!(
                "node {id}: stored n = {} but {} points fall in its region",
                nodes[id].n,
                indices.len()
            )));
        }
        let kind = nodes[id].kind;
        let children = nodes[id].children.clone();
        if kind == XNodeKind::Internal {
            let splits = candidate_splits(space_x, &region);
            if splits.len() != children.len() {
                return Err(Error::Serialize(format!(
                    "node {id}: {} splits stored, region admits {}",
                    children.len(),
                    splits.len()
                )));
            }
            for (j, &split) in splits.iter().enumerate() {
                let (left, right) = partition_points(space_x, &region, split, &indices, |i| {
                    data.x.coord(i, split.dim)
                });
                let sides = [(children[j][0], left, crate::space::Side::Left),
                             (children[j][1], right, crate::space::Side::Right)];
                for (child, pts, side) in sides {
                    if child == NO_NODE {
                        if !pts.is_empty() {
                            return Err(Error::Serialize(format!(
                                "node {id}: split {j} drops {} points into a missing child",
                                pts.len()
                            )));
                        }
                    } else {
                        stack.push((child as usize, region.child(split, side), pts));
                    }
                }
            }
        }
        nodes[id].points = indices;
        filled[id] = true;
    }

    if let Some(missing) = filled.iter().position(|f| !f) {
        return Err(Error::Serialize(format!("node {missing} unreachable from the root")));
    }
    Ok(())
}
