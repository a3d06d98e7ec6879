//! Tree and forest structures, prediction and serialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary regression tree. Feature 0 is the running variable; the remaining
/// indices address covariates in the order the forest was trained on.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        var: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

/// A leaf together with the running-variable interval `(x_lo, x_hi]` that
/// its ancestors' splits on feature 0 carve out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafInfo {
    pub id: usize,
    pub value: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl LeafInfo {
    /// Whether a query with running variable `c` can land in this leaf.
    pub fn covers(&self, c: f64) -> bool {
        self.x_lo < c && c <= self.x_hi
    }
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        TreeNode::Leaf { value }
    }

    pub fn split(var: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Internal {
            var,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Value of the leaf that `row` routes to (`<= threshold` goes left).
    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Internal {
                    var,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*var] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Preorder ordinal of the leaf that `row` routes to.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        fn walk(node: &TreeNode, row: &[f64], offset: usize) -> usize {
            match node {
                TreeNode::Leaf { .. } => offset,
                TreeNode::Internal {
                    var,
                    threshold,
                    left,
                    right,
                } => {
                    if row[*var] <= *threshold {
                        walk(left, row, offset)
                    } else {
                        walk(right, row, offset + left.num_leaves())
                    }
                }
            }
        }
        walk(self, row, 0)
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    pub fn num_internal(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => {
                1 + left.num_internal() + right.num_internal()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaves in preorder with their running-variable intervals.
    pub fn leaves(&self) -> Vec<LeafInfo> {
        fn walk(node: &TreeNode, lo: f64, hi: f64, out: &mut Vec<LeafInfo>) {
            match node {
                TreeNode::Leaf { value } => out.push(LeafInfo {
                    id: out.len(),
                    value: *value,
                    x_lo: lo,
                    x_hi: hi,
                }),
                TreeNode::Internal {
                    var,
                    threshold,
                    left,
                    right,
                } => {
                    if *var == 0 {
                        walk(left, lo, hi.min(*threshold), out);
                        walk(right, lo.max(*threshold), hi, out);
                    } else {
                        walk(left, lo, hi, out);
                        walk(right, lo, hi, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(self, f64::NEG_INFINITY, f64::INFINITY, &mut out);
        out
    }

    fn to_preorder(&self, out: &mut Vec<PreorderNode>) {
        match self {
            TreeNode::Leaf { value } => out.push(PreorderNode::Leaf { value: *value }),
            TreeNode::Internal {
                var,
                threshold,
                left,
                right,
            } => {
                out.push(PreorderNode::Split {
                    var: *var,
                    threshold: *threshold,
                });
                left.to_preorder(out);
                right.to_preorder(out);
            }
        }
    }

    fn from_preorder(nodes: &[PreorderNode], pos: &mut usize) -> Result<TreeNode> {
        let node = nodes
            .get(*pos)
            .ok_or_else(|| Error::Serialization("truncated preorder tree".into()))?;
        *pos += 1;
        Ok(match *node {
            PreorderNode::Leaf { value } => TreeNode::Leaf { value },
            PreorderNode::Split { var, threshold } => {
                let left = TreeNode::from_preorder(nodes, pos)?;
                let right = TreeNode::from_preorder(nodes, pos)?;
                TreeNode::split(var, threshold, left, right)
            }
        })
    }
}

/// Sum of trees.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
}

impl Forest {
    pub fn new(trees: Vec<TreeNode>) -> Self {
        Forest { trees }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum()
    }

    /// Prediction at running variable `x` and covariate row `w`.
    pub fn predict(&self, x: f64, w: &[f64]) -> f64 {
        let mut row = Vec::with_capacity(w.len() + 1);
        row.push(x);
        row.extend_from_slice(w);
        self.predict_row(&row)
    }

    pub fn to_serialized(&self) -> SerializedForest {
        SerializedForest {
            trees: self
                .trees
                .iter()
                .map(|t| {
                    let mut v = Vec::new();
                    t.to_preorder(&mut v);
                    v
                })
                .collect(),
        }
    }

    pub fn from_serialized(s: &SerializedForest) -> Result<Self> {
        let trees = s
            .trees
            .iter()
            .map(|nodes| {
                let mut pos = 0;
                let t = TreeNode::from_preorder(nodes, &mut pos)?;
                if pos != nodes.len() {
                    return Err(Error::Serialization("trailing nodes after tree".into()));
                }
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest { trees })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_serialized()).expect("forest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let parsed: SerializedForest =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        Forest::from_serialized(&parsed)
    }
}

/// Flat preorder node record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PreorderNode {
    Split { var: usize, threshold: f64 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedForest {
    pub trees: Vec<Vec<PreorderNode>>,
}
