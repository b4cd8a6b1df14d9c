//! Finite dyadic trees, node-indexed data and the Hardy operators.
//!
//! Nodes use heap numbering: the root is `1` and node `k` has children
//! `2k` and `2k + 1`. The root interval has unit length, so a node at depth
//! `d` stands for a dyadic interval of length `2^-d`. Dense storage puts node
//! `k` at slot `k - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits;

/// Index geometry of the complete binary tree of a fixed depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeShape {
    depth: u32,
}

/// Builds the tree of the given depth under the default (or environment) size guard.
pub fn build_tree(depth: u32) -> Result<TreeShape> {
    TreeShape::with_limit(depth, limits::tree_node_limit())
}

impl TreeShape {
    pub const ROOT: usize = 1;

    pub fn with_limit(depth: u32, max_nodes: u128) -> Result<Self> {
        let requested = if depth >= 126 {
            u128::MAX
        } else {
            (1u128 << (depth + 1)) - 1
        };
        if requested > max_nodes || depth >= usize::BITS - 1 {
            return Err(Error::TooLarge {
                kind: "tree",
                requested,
                limit: max_nodes,
            });
        }
        Ok(Self { depth })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        (1usize << (self.depth + 1)) - 1
    }

    pub fn leaf_count(&self) -> usize {
        1usize << self.depth
    }

    pub fn contains(&self, node: usize) -> bool {
        node >= 1 && node <= self.node_count()
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(Error::InvalidNode(node))
        }
    }

    /// Depth of a node, `floor(log2 node)`.
    pub fn node_depth(node: usize) -> u32 {
        debug_assert!(node >= 1);
        usize::BITS - 1 - node.leading_zeros()
    }

    /// Length of the dyadic interval attached to `node`.
    pub fn interval_length(node: usize) -> f64 {
        dyadic_length(Self::node_depth(node))
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        Self::node_depth(node) == self.depth
    }

    pub fn parent(node: usize) -> Option<usize> {
        (node > 1).then_some(node / 2)
    }

    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        (!self.is_leaf(node)).then_some((2 * node, 2 * node + 1))
    }

    pub fn nodes(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.node_count()
    }

    /// The boundary of the tree: every node of maximal depth.
    pub fn leaves(&self) -> std::ops::RangeInclusive<usize> {
        self.leaf_count()..=self.node_count()
    }

    /// True if `node` lies in the subtree rooted at `ancestor` (inclusive).
    pub fn is_descendant(node: usize, ancestor: usize) -> bool {
        let (dn, da) = (Self::node_depth(node), Self::node_depth(ancestor));
        dn >= da && node >> (dn - da) == ancestor
    }

    /// Nodes of the subtree rooted at `node`, level by level.
    pub fn subtree(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let top = Self::node_depth(node);
        (0..=self.depth - top).flat_map(move |offset| {
            let first = node << offset;
            first..first + (1usize << offset)
        })
    }

    fn check_len(&self, found: usize) -> Result<()> {
        if found == self.node_count() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.node_count(),
                found,
            })
        }
    }

    pub(crate) fn ensure_same(&self, other: &TreeShape) -> Result<()> {
        other.check_len(self.node_count())
    }
}

/// `2^-depth`, exact in binary floating point.
pub fn dyadic_length(depth: u32) -> f64 {
    0.5f64.powi(depth as i32)
}

/// Anything that assigns one real number to each node of a tree.
pub trait NodeValues {
    fn shape(&self) -> TreeShape;
    fn values(&self) -> &[f64];

    fn at(&self, node: usize) -> f64 {
        self.values()[node - 1]
    }
}

/// A dense real-valued function on the nodes of a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeVector {
    shape: TreeShape,
    values: Vec<f64>,
}

impl NodeVector {
    pub fn new(shape: TreeShape, values: Vec<f64>) -> Result<Self> {
        shape.check_len(values.len())?;
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("node {}", i + 1)));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: TreeShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.node_count()],
        }
    }

    pub fn constant(shape: TreeShape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.node_count()],
        }
    }

    pub fn from_fn(shape: TreeShape, mut f: impl FnMut(usize) -> f64) -> Self {
        Self {
            shape,
            values: shape.nodes().map(&mut f).collect(),
        }
    }

    pub fn indicator(shape: TreeShape, node: usize) -> Result<Self> {
        shape.check_node(node)?;
        let mut v = Self::zeros(shape);
        v.values[node - 1] = 1.0;
        Ok(v)
    }

    pub fn get(&self, node: usize) -> Option<f64> {
        self.shape.contains(node).then(|| self.values[node - 1])
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &NodeVector) -> Result<f64> {
        self.shape.ensure_same(&other.shape)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }
}

impl NodeValues for NodeVector {
    fn shape(&self) -> TreeShape {
        self.shape
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Where a tree measure is allowed to put mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportMode {
    AllNodes,
    BoundaryOnly,
}

impl std::fmt::Display for SupportMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SupportMode::AllNodes => "all-nodes",
            SupportMode::BoundaryOnly => "boundary-only",
        })
    }
}

/// Nonnegative masses attached to tree nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeMeasure {
    shape: TreeShape,
    masses: Vec<f64>,
    mode: SupportMode,
}

impl TreeMeasure {
    pub fn new(shape: TreeShape, masses: Vec<f64>, mode: SupportMode) -> Result<Self> {
        shape.check_len(masses.len())?;
        for (i, &m) in masses.iter().enumerate() {
            let node = i + 1;
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("node {node}")));
            }
            if m < 0.0 {
                return Err(Error::NegativeMass {
                    position: format!("node {node}"),
                    value: m,
                });
            }
            if mode == SupportMode::BoundaryOnly && m != 0.0 && !shape.is_leaf(node) {
                return Err(Error::InteriorMass { node, value: m });
            }
        }
        Ok(Self {
            shape,
            masses,
            mode,
        })
    }

    /// A boundary-only measure from the leaf masses, left to right.
    pub fn boundary(shape: TreeShape, leaf_masses: &[f64]) -> Result<Self> {
        if leaf_masses.len() != shape.leaf_count() {
            return Err(Error::ShapeMismatch {
                expected: shape.leaf_count(),
                found: leaf_masses.len(),
            });
        }
        let mut masses = vec![0.0; shape.leaf_count() - 1];
        masses.extend_from_slice(leaf_masses);
        Self::new(shape, masses, SupportMode::BoundaryOnly)
    }

    pub fn zero(shape: TreeShape, mode: SupportMode) -> Self {
        Self {
            shape,
            masses: vec![0.0; shape.node_count()],
            mode,
        }
    }

    /// Uniform boundary measure of the given total mass.
    pub fn uniform_boundary(shape: TreeShape, total: f64) -> Result<Self> {
        let leaf = total / shape.leaf_count() as f64;
        Self::boundary(shape, &vec![leaf; shape.leaf_count()])
    }

    /// A single atom; boundary-only when the node is a leaf.
    pub fn point_mass(shape: TreeShape, node: usize, mass: f64) -> Result<Self> {
        shape.check_node(node)?;
        let mode = if shape.is_leaf(node) {
            SupportMode::BoundaryOnly
        } else {
            SupportMode::AllNodes
        };
        let mut masses = vec![0.0; shape.node_count()];
        masses[node - 1] = mass;
        Self::new(shape, masses, mode)
    }

    pub fn mode(&self) -> SupportMode {
        self.mode
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.masses.iter().all(|&m| m == 0.0)
    }

    /// `t * self` for `t >= 0`.
    pub fn scaled(&self, t: f64) -> Self {
        assert!(t >= 0.0 && t.is_finite(), "scale factor must be finite and nonnegative");
        Self {
            shape: self.shape,
            masses: self.masses.iter().map(|m| m * t).collect(),
            mode: self.mode,
        }
    }

    /// Nodes carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

impl NodeValues for TreeMeasure {
    fn shape(&self) -> TreeShape {
        self.shape
    }
    fn values(&self) -> &[f64] {
        &self.masses
    }
}

/// Hardy transform: sums over the node and all its ancestors.
pub fn hardy_up(phi: &impl NodeValues) -> NodeVector {
    let shape = phi.shape();
    let mut out = phi.values().to_vec();
    for k in 2..=shape.node_count() {
        out[k - 1] += out[k / 2 - 1];
    }
    NodeVector { shape, values: out }
}

/// Adjoint Hardy transform: sums over the subtree rooted at each node.
pub fn hardy_down(phi: &impl NodeValues) -> NodeVector {
    let shape = phi.shape();
    let mut out = phi.values().to_vec();
    for k in (2..=shape.node_count()).rev() {
        out[k / 2 - 1] += out[k - 1];
    }
    NodeVector { shape, values: out }
}

/// Potential `V = I I* mu`.
pub fn potential(mu: &TreeMeasure) -> NodeVector {
    hardy_up(&hardy_down(mu))
}

/// Sum of `v` over the subtree rooted at `node`.
pub fn box_integral(v: &impl NodeValues, node: usize) -> Result<f64> {
    let shape = v.shape();
    shape.check_node(node)?;
    let values = v.values();
    Ok(shape.subtree(node).map(|k| values[k - 1]).sum())
}

/// `box_integral / |I_node|`.
pub fn box_average(v: &impl NodeValues, node: usize) -> Result<f64> {
    Ok(box_integral(v, node)? / TreeShape::interval_length(node))
}
