//! Random forest inference over flat node, leaf and root arrays.
//!
//! Trees are stored depth-first. An internal node's left child is the next
//! node and only the right child index is stored; a node with feature index
//! `-1` is a leaf whose `right_child` indexes the leaf array instead. Each
//! leaf holds one `u8` probability per class, and a prediction sums the
//! reached leaves of all trees and takes the argmax.

mod features;
pub mod format;
pub mod json;

use thiserror::Error;

pub use features::{extract_features, quantize_features, FeatureQuantizer, AXES, FEATURES_PER_AXIS, N_FEATURES, WINDOW};

/// Feature index marking a leaf node.
pub const LEAF: i16 = -1;

/// One 5-byte node record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RfNode {
    pub feature_index: i16,
    pub threshold: i8,
    pub right_child: u16,
}

impl RfNode {
    pub const fn leaf(index: u16) -> Self {
        Self {
            feature_index: LEAF,
            threshold: 0,
            right_child: index,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature_index == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RfError {
    #[error("forest needs at least one class, one feature and one tree")]
    Empty,
    #[error("{what} = {value} exceeds the 16-bit index range")]
    TooLarge { what: &'static str, value: usize },
    #[error("root {root} points past the {n_nodes} nodes")]
    BadRoot { root: usize, n_nodes: usize },
    #[error("node {node}: feature index {feature} out of range for {n_features} features")]
    BadFeature { node: usize, feature: i16, n_features: usize },
    #[error("node {node}: child {child} is not a later node")]
    BadChild { node: usize, child: usize },
    #[error("node {node}: leaf index {leaf} out of range for {n_leaves} leaves")]
    BadLeaf { node: usize, leaf: usize, n_leaves: usize },
    #[error("node {node}: leaf records must have threshold 0")]
    LeafThreshold { node: usize },
    #[error("leaf {leaf} has {actual} entries, expected {expected}")]
    LeafWidth { leaf: usize, expected: usize, actual: usize },
    #[error("leaf {leaf} probabilities sum to {sum}, expected 255 +- {slack}")]
    LeafSum { leaf: usize, sum: u32, slack: u32 },
    #[error("expected {expected} features, got {actual}")]
    FeatureCount { expected: usize, actual: usize },
    #[error("window must be {expected} samples, got {actual}")]
    WindowShape { expected: usize, actual: usize },
    #[error("quantizer scale for feature {feature} must be positive and finite")]
    BadScale { feature: usize },
    #[error("quantizer has {actual} entries, forest has {expected} features")]
    QuantizerWidth { expected: usize, actual: usize },
    #[error("malformed forest: traversal from node {root} did not reach a leaf within {steps} steps")]
    Malformed { root: usize, steps: usize },
}

/// Walks one tree from `root` to a leaf and returns the leaf index.
/// Bounded by the node count, so a cyclic or overrunning array fails
/// instead of looping.
pub fn descend(nodes: &[RfNode], root: usize, features: &[i8]) -> Result<usize, RfError> {
    let malformed = RfError::Malformed {
        root,
        steps: nodes.len(),
    };
    let mut i = root;
    for _ in 0..nodes.len() {
        let node = nodes.get(i).ok_or_else(|| malformed.clone())?;
        if node.is_leaf() {
            return Ok(node.right_child as usize);
        }
        let f = *usize::try_from(node.feature_index)
            .ok()
            .and_then(|f| features.get(f))
            .ok_or_else(|| malformed.clone())?;
        i = if f <= node.threshold { i + 1 } else { node.right_child as usize };
    }
    Err(malformed)
}

/// A validated forest with its input quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    n_classes: usize,
    n_features: usize,
    nodes: Vec<RfNode>,
    /// `n_leaves * n_classes`, one row per leaf.
    leaves: Vec<u8>,
    roots: Vec<u16>,
    quantizer: FeatureQuantizer,
}

impl Forest {
    pub fn new(
        n_classes: usize,
        n_features: usize,
        nodes: Vec<RfNode>,
        leaves: Vec<Vec<u8>>,
        roots: Vec<u16>,
        quantizer: FeatureQuantizer,
    ) -> Result<Self, RfError> {
        if n_classes == 0 || n_features == 0 || roots.is_empty() || nodes.is_empty() {
            return Err(RfError::Empty);
        }
        // counts are u16 fields; nodes and leaves are addressed by u16
        const COUNT: usize = u16::MAX as usize;
        for (what, value, max) in [
            ("n_classes", n_classes, COUNT),
            ("n_features", n_features, COUNT),
            ("n_roots", roots.len(), COUNT),
            ("n_nodes", nodes.len(), COUNT + 1),
            ("n_leaves", leaves.len(), COUNT + 1),
        ] {
            if value > max {
                return Err(RfError::TooLarge { what, value });
            }
        }
        if quantizer.len() != n_features {
            return Err(RfError::QuantizerWidth {
                expected: n_features,
                actual: quantizer.len(),
            });
        }
        let n_nodes = nodes.len();
        for &r in &roots {
            if r as usize >= n_nodes {
                return Err(RfError::BadRoot { root: r as usize, n_nodes });
            }
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.is_leaf() {
                if node.right_child as usize >= leaves.len() {
                    return Err(RfError::BadLeaf {
                        node: i,
                        leaf: node.right_child as usize,
                        n_leaves: leaves.len(),
                    });
                }
                if node.threshold != 0 {
                    return Err(RfError::LeafThreshold { node: i });
                }
                continue;
            }
            if node.feature_index < 0 || node.feature_index as usize >= n_features {
                return Err(RfError::BadFeature {
                    node: i,
                    feature: node.feature_index,
                    n_features,
                });
            }
            if i + 1 >= n_nodes {
                return Err(RfError::BadChild { node: i, child: i + 1 });
            }
            let r = node.right_child as usize;
            // the left subtree starts at i + 1, so the right one starts later
            if r <= i + 1 || r >= n_nodes {
                return Err(RfError::BadChild { node: i, child: r });
            }
        }
        let slack = n_classes as u32;
        let mut flat = Vec::with_capacity(leaves.len() * n_classes);
        for (i, leaf) in leaves.iter().enumerate() {
            if leaf.len() != n_classes {
                return Err(RfError::LeafWidth {
                    leaf: i,
                    expected: n_classes,
                    actual: leaf.len(),
                });
            }
            let sum: u32 = leaf.iter().map(|&p| p as u32).sum();
            if sum.abs_diff(255) > slack {
                return Err(RfError::LeafSum { leaf: i, sum, slack });
            }
            flat.extend_from_slice(leaf);
        }
        Ok(Self {
            n_classes,
            n_features,
            nodes,
            leaves: flat,
            roots,
            quantizer,
        })
    }

    /// Flattens trees depth-first, one leaf record per leaf node.
    pub fn from_trees(trees: &[Tree], n_classes: usize, n_features: usize, quantizer: FeatureQuantizer) -> Result<Self, RfError> {
        let mut nodes = Vec::new();
        let mut leaves = Vec::new();
        let mut roots = Vec::with_capacity(trees.len());
        for tree in trees {
            let root = u16::try_from(nodes.len()).map_err(|_| RfError::TooLarge {
                what: "n_nodes",
                value: nodes.len(),
            })?;
            roots.push(root);
            tree.flatten_into(&mut nodes, &mut leaves)?;
        }
        Self::new(n_classes, n_features, nodes, leaves, roots, quantizer)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[RfNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len() / self.n_classes
    }

    pub fn leaf(&self, index: usize) -> &[u8] {
        &self.leaves[index * self.n_classes..(index + 1) * self.n_classes]
    }

    pub fn roots(&self) -> &[u16] {
        &self.roots
    }

    pub fn quantizer(&self) -> &FeatureQuantizer {
        &self.quantizer
    }

    /// Summed leaf probabilities over all trees.
    pub fn votes(&self, features: &[i8]) -> Result<Vec<u32>, RfError> {
        if features.len() != self.n_features {
            return Err(RfError::FeatureCount {
                expected: self.n_features,
                actual: features.len(),
            });
        }
        let mut sums = vec![0u32; self.n_classes];
        for &root in &self.roots {
            let leaf = descend(&self.nodes, root as usize, features)?;
            for (s, &p) in sums.iter_mut().zip(self.leaf(leaf)) {
                *s += p as u32;
            }
        }
        Ok(sums)
    }

    /// Class with the largest vote sum; ties go to the lowest index.
    pub fn predict(&self, features: &[i8]) -> Result<usize, RfError> {
        let votes = self.votes(features)?;
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        Ok(best)
    }

    /// Extracts and quantizes the features of one raw window, then predicts.
    pub fn classify_window(&self, window: &[i32]) -> Result<usize, RfError> {
        let f = extract_features(window)?;
        let q = quantize_features(&f, &self.quantizer)?;
        self.predict(&q)
    }
}

/// A decision tree before flattening.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    Leaf(Vec<u8>),
    Split {
        feature: u16,
        threshold: i8,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

impl Tree {
    pub fn split(feature: u16, threshold: i8, left: Tree, right: Tree) -> Self {
        Tree::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Leaf probabilities reached by `features`.
    pub fn eval(&self, features: &[i8]) -> &[u8] {
        match self {
            Tree::Leaf(p) => p,
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if features[*feature as usize] <= *threshold {
                    left.eval(features)
                } else {
                    right.eval(features)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Split { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    fn flatten_into(&self, nodes: &mut Vec<RfNode>, leaves: &mut Vec<Vec<u8>>) -> Result<(), RfError> {
        let index = |what, value: usize| u16::try_from(value).map_err(|_| RfError::TooLarge { what, value });
        match self {
            Tree::Leaf(p) => {
                nodes.push(RfNode::leaf(index("n_leaves", leaves.len())?));
                leaves.push(p.clone());
            }
            Tree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let at = nodes.len();
                let feature_index = i16::try_from(*feature).map_err(|_| RfError::TooLarge {
                    what: "feature",
                    value: *feature as usize,
                })?;
                nodes.push(RfNode {
                    feature_index,
                    threshold: *threshold,
                    right_child: 0,
                });
                left.flatten_into(nodes, leaves)?;
                nodes[at].right_child = index("n_nodes", nodes.len())?;
                right.flatten_into(nodes, leaves)?;
            }
        }
        Ok(())
    }
}
