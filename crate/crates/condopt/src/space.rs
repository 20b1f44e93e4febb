//! Sample spaces and the coordinate-wise dyadic mid-split partition rule.
//!
//! A space is an ordered product of bounded real intervals and binary
//! coordinates. Regions are the sub-rectangles reachable by recursive
//! mid-splits; each continuous coordinate of a region is a dyadic
//! subinterval of its root range and each binary coordinate is either still
//! free or pinned to one level. Region identity is structural (split
//! counts and cell positions), never compared through floating-point
//! bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coordinate of a sample space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dim {
    /// A bounded interval [lo, hi] with Lebesgue measure.
    Continuous { lo: f64, hi: f64 },
    /// A two-level coordinate {0, 1} with counting measure.
    Binary,
}

/// An ordered product of coordinates, with the natural product measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpace {
    dims: Vec<Dim>,
}

impl SampleSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("space must have at least one dimension".into()));
        }
        for (i, d) in dims.iter().enumerate() {
            if let Dim::Continuous { lo, hi } = d {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::InvalidSpace(format!(
                        "dimension {i}: continuous bounds must satisfy lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(Self { dims })
    }

    /// Unit hypercube [0,1]^k.
    pub fn unit_cube(k: usize) -> Self {
        Self::new(vec![Dim::Continuous { lo: 0.0, hi: 1.0 }; k]).expect("k >= 1")
    }

    /// {0,1}^k.
    pub fn binary(k: usize) -> Self {
        Self::new(vec![Dim::Binary; k]).expect("k >= 1")
    }

    /// Root bounds from the observed per-column ranges, inflated by a 1e-9
    /// relative margin on each side so every observation lies strictly
    /// inside. Columns whose values are all 0/1 still come out continuous;
    /// callers decide types separately.
    pub fn from_empirical_ranges(ranges: &[(f64, f64)]) -> Result<Self> {
        let dims = ranges
            .iter()
            .map(|&(lo, hi)| {
                let span = (hi - lo).abs().max(lo.abs()).max(hi.abs()).max(1.0);
                let pad = span * 1e-9;
                Dim::Continuous { lo: lo - pad, hi: hi + pad }
            })
            .collect();
        Self::new(dims)
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn n_dims(&self) -> usize {
        self.dims.len()
    }

    /// log of the product measure of the whole space.
    pub fn log_measure(&self) -> f64 {
        self.dims
            .iter()
            .map(|d| match d {
                Dim::Continuous { lo, hi } => (hi - lo).ln(),
                Dim::Binary => std::f64::consts::LN_2,
            })
            .sum()
    }

    /// Whether a point lies in the space. The root upper boundary of a
    /// continuous coordinate is closed.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len()
            && point.iter().zip(&self.dims).all(|(&v, d)| match d {
                Dim::Continuous { lo, hi } => v.is_finite() && *lo <= v && v <= *hi,
                Dim::Binary => v == 0.0 || v == 1.0,
            })
    }

    /// Validate one point, reporting the offending coordinate.
    pub fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dims.len() {
            return Err(Error::Data(format!(
                "point has {} coordinates, space has {}",
                point.len(),
                self.dims.len()
            )));
        }
        for (i, (&v, d)) in point.iter().zip(&self.dims).enumerate() {
            let ok = match d {
                Dim::Continuous { lo, hi } => v.is_finite() && *lo <= v && v <= *hi,
                Dim::Binary => v == 0.0 || v == 1.0,
            };
            if !ok {
                return Err(Error::Data(format!("coordinate {i} = {v} outside {d:?}")));
            }
        }
        Ok(())
    }

    /// True if more than one coordinate can ever be split; used to decide
    /// whether distinct split orders can reach the same region.
    pub(crate) fn multiway(&self) -> bool {
        self.dims.len() > 1
    }
}

/// Per-dimension refinement state of a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DimState {
    /// `splits` dyadic halvings taken; `cell` indexes the subinterval.
    Cont { splits: u8, cell: u32 },
    /// Binary coordinate not yet pinned.
    Free,
    /// Binary coordinate pinned to 0 or 1.
    Fixed(bool),
}

/// A node of the recursive partition: a product of per-dimension states.
///
/// Equality and hashing are structural, which makes regions usable as
/// memoization keys without any floating-point comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    state: Vec<DimState>,
    depth: u32,
}

/// One admissible way to divide a region: halve a continuous coordinate at
/// its midpoint, or pin a free binary coordinate. Always two children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub dim: usize,
}

/// Side taken at a split; `Left` is the lower half / level 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left = 0,
    Right = 1,
}

impl Side {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 { Side::Left } else { Side::Right }
    }
}

impl Region {
    /// The whole space as a region.
    pub fn root(space: &SampleSpace) -> Self {
        let state = space
            .dims()
            .iter()
            .map(|d| match d {
                Dim::Continuous { .. } => DimState::Cont { splits: 0, cell: 0 },
                Dim::Binary => DimState::Free,
            })
            .collect();
        Self { state, depth: 0 }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn state(&self) -> &[DimState] {
        &self.state
    }

    /// Current bounds of one coordinate, derived from the root range so they
    /// do not depend on the split order that reached this region.
    pub fn bounds(&self, space: &SampleSpace, dim: usize) -> (f64, f64) {
        match (self.state[dim], space.dims()[dim]) {
            (DimState::Cont { splits, cell }, Dim::Continuous { lo, hi }) => {
                let width = (hi - lo) / (1u64 << splits) as f64;
                let a = lo + width * cell as f64;
                (a, a + width)
            }
            (DimState::Free, Dim::Binary) => (0.0, 1.0),
            (DimState::Fixed(b), Dim::Binary) => {
                let v = if b { 1.0 } else { 0.0 };
                (v, v)
            }
            _ => unreachable!("region state inconsistent with space"),
        }
    }

    /// log of the region's product measure.
    pub fn log_measure(&self, space: &SampleSpace) -> f64 {
        self.state
            .iter()
            .zip(space.dims())
            .map(|(s, d)| match (s, d) {
                (DimState::Cont { splits, .. }, Dim::Continuous { lo, hi }) => {
                    (hi - lo).ln() - *splits as f64 * std::f64::consts::LN_2
                }
                (DimState::Free, Dim::Binary) => std::f64::consts::LN_2,
                (DimState::Fixed(_), Dim::Binary) => 0.0,
                _ => unreachable!("region state inconsistent with space"),
            })
            .sum()
    }

    pub fn measure(&self, space: &SampleSpace) -> f64 {
        self.log_measure(space).exp()
    }

    /// Whether a point lies in this region. Cells are left-closed/right-open
    /// except that a point exactly on the root's upper boundary belongs to
    /// the last cell at every depth.
    pub fn contains(&self, space: &SampleSpace, point: &[f64]) -> bool {
        self.state
            .iter()
            .zip(space.dims())
            .zip(point)
            .all(|((s, d), &v)| match (s, d) {
                (DimState::Cont { splits, cell }, Dim::Continuous { lo, hi }) => {
                    let width = (hi - lo) / (1u64 << *splits) as f64;
                    let a = lo + width * *cell as f64;
                    let last = *cell as u64 == (1u64 << *splits) - 1;
                    a <= v && (v < a + width || (last && v <= *hi))
                }
                (DimState::Free, Dim::Binary) => v == 0.0 || v == 1.0,
                (DimState::Fixed(b), Dim::Binary) => v == if *b { 1.0 } else { 0.0 },
                _ => unreachable!(),
            })
    }

    /// Which side of `split` a point falls on. Mid-split children are
    /// left-closed/right-open: a coordinate equal to the midpoint goes right.
    pub fn side_of(&self, space: &SampleSpace, split: Split, point: &[f64]) -> Side {
        match (self.state[split.dim], space.dims()[split.dim]) {
            (DimState::Cont { splits, cell }, Dim::Continuous { lo, hi }) => {
                let width = (hi - lo) / (1u64 << splits) as f64;
                let mid = lo + width * cell as f64 + width / 2.0;
                if point[split.dim] < mid {
                    Side::Left
                } else {
                    Side::Right
                }
            }
            (DimState::Free, Dim::Binary) => {
                if point[split.dim] == 0.0 {
                    Side::Left
                } else {
                    Side::Right
                }
            }
            _ => panic!("split on a non-splittable dimension"),
        }
    }

    /// The child region on one side of a split.
    pub fn child(&self, split: Split, side: Side) -> Region {
        let mut region = self.clone();
        region.descend(split, side);
        region
    }

    /// Step into a child in place, returning the displaced coordinate state
    /// for the matching `ascend`.
    pub(crate) fn descend(&mut self, split: Split, side: Side) -> DimState {
        let old = self.state[split.dim];
        self.state[split.dim] = match old {
            DimState::Cont { splits, cell } => DimState::Cont {
                splits: splits + 1,
                cell: cell * 2 + side.index() as u32,
            },
            DimState::Free => DimState::Fixed(side == Side::Right),
            DimState::Fixed(_) => panic!("split on a fixed binary dimension"),
        };
        self.depth += 1;
        old
    }

    /// Undo the matching `descend`.
    pub(crate) fn ascend(&mut self, split: Split, old: DimState) {
        self.state[split.dim] = old;
        self.depth -= 1;
    }
}

#[inline]
pub(crate) fn is_splittable(space: &SampleSpace, region: &Region, dim: usize) -> bool {
    matches!(
        (&region.state()[dim], &space.dims()[dim]),
        (DimState::Cont { .. }, Dim::Continuous { .. }) | (DimState::Free, Dim::Binary)
    )
}

/// All admissible splits of a region, in ascending dimension order: one per
/// continuous dimension plus one per still-free binary dimension. Empty iff
/// the region is undividable.
pub fn candidate_splits(space: &SampleSpace, region: &Region) -> Vec<Split> {
    (0..space.n_dims())
        .filter(|&dim| is_splittable(space, region, dim))
        .map(|dim| Split { dim })
        .collect()
}

/// Number of admissible splits without materializing them.
pub fn n_candidate_splits(space: &SampleSpace, region: &Region) -> usize {
    (0..space.n_dims()).filter(|&dim| is_splittable(space, region, dim)).count()
}

/// Split a region into its two children.
pub fn split_region(region: &Region, split: Split) -> (Region, Region) {
    (region.child(split, Side::Left), region.child(split, Side::Right))
}

/// The membership test a split induces on its dimension's coordinate.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SplitTest {
    /// Left iff the coordinate is strictly below the midpoint.
    Mid(f64),
    /// Left iff the coordinate is 0.
    Level,
}

impl SplitTest {
    #[inline]
    pub fn goes_left(self, v: f64) -> bool {
        match self {
            SplitTest::Mid(m) => v < m,
            SplitTest::Level => v == 0.0,
        }
    }
}

pub(crate) fn split_test(space: &SampleSpace, region: &Region, split: Split) -> SplitTest {
    match (region.state()[split.dim], space.dims()[split.dim]) {
        (DimState::Cont { splits, cell }, Dim::Continuous { lo, hi }) => {
            let width = (hi - lo) / (1u64 << splits) as f64;
            SplitTest::Mid(lo + width * cell as f64 + width / 2.0)
        }
        (DimState::Free, Dim::Binary) => SplitTest::Level,
        _ => panic!("split on a non-splittable dimension"),
    }
}

/// Stable in-place partition of an index slice: indices whose coordinate
/// goes left move to the front, the rest follow, both sides keeping their
/// relative order. Returns the boundary. `scratch` is reused storage.
pub(crate) fn partition_in_place(
    idx: &mut [u32],
    test: SplitTest,
    coord: impl Fn(u32) -> f64,
    scratch: &mut Vec<u32>,
) -> usize {
    scratch.clear();
    let mut w = 0;
    for r in 0..idx.len() {
        let v = idx[r];
        if test.goes_left(coord(v)) {
            idx[w] = v;
            w += 1;
        } else {
            scratch.push(v);
        }
    }
    idx[w..].copy_from_slice(scratch);
    w
}

/// Stable partition of point indices by child membership under a split.
///
/// `coord(i)` must return the split-dimension coordinate of point `i`. Every
/// index lands in exactly one output list; a coordinate exactly at the
/// midpoint goes right.
pub fn partition_points(
    space: &SampleSpace,
    region: &Region,
    split: Split,
    indices: &[u32],
    coord: impl Fn(u32) -> f64,
) -> (Vec<u32>, Vec<u32>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    match (region.state()[split.dim], space.dims()[split.dim]) {
        (DimState::Cont { splits, cell }, Dim::Continuous { lo, hi }) => {
            let width = (hi - lo) / (1u64 << splits) as f64;
            let mid = lo + width * cell as f64 + width / 2.0;
            for &i in indices {
                if coord(i) < mid {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
        }
        (DimState::Free, Dim::Binary) => {
            for &i in indices {
                if coord(i) == 0.0 {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
        }
        _ => panic!("split on a non-splittable dimension"),
    }
    (left, right)
}
