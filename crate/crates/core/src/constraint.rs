//! Identification-strip split policy.
//!
//! A node whose running-variable interval covers the cutoff is valid when
//!
//! * (i) it holds at least `n_omin` strip observations on each side of the
//!   cutoff, and
//! * (ii) at least a fraction `alpha` of its observations lie in the strip.
//!
//! Nodes away from the cutoff are unrestricted. Condition (i) cannot be
//! repaired by further splitting, so violating candidates get zero weight.
//! Condition (ii) can, so a node violating it is not allowed to stop.

use crate::data::{ConstraintConfig, StripIndex, StripSide};
use crate::error::{Error, Result};
use crate::forest::{NodeExtent, PolicyOutcome, SplitPolicy, SplitWeights, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStripStats {
    /// Whether a query at `x = c` can route to this node.
    pub contains_cutoff: bool,
    pub n_l: usize,
    pub n_r: usize,
    pub n_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitValidity {
    Valid,
    InvalidConditionI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopValidity {
    MayStop,
    MustSplit,
}

/// Interval `(lo, hi]` covers `c` under `<=`-goes-left routing.
pub fn interval_contains(lo: f64, hi: f64, c: f64) -> bool {
    lo < c && c <= hi
}

pub fn node_strip_stats(
    members: &[usize],
    x_lo: f64,
    x_hi: f64,
    sides: &[StripSide],
    cutoff: f64,
) -> NodeStripStats {
    let mut s = NodeStripStats {
        contains_cutoff: interval_contains(x_lo, x_hi, cutoff),
        n_l: 0,
        n_r: 0,
        n_b: members.len(),
    };
    for &i in members {
        match sides[i] {
            StripSide::Left => s.n_l += 1,
            StripSide::Right => s.n_r += 1,
            StripSide::Outside => {}
        }
    }
    s
}

impl NodeStripStats {
    pub fn from_extent(e: &NodeExtent, cutoff: f64) -> Self {
        NodeStripStats {
            contains_cutoff: interval_contains(e.x_lo, e.x_hi, cutoff),
            n_l: e.strip_left,
            n_r: e.strip_right,
            n_b: e.n,
        }
    }

    fn violates_condition_i(&self, cfg: &ConstraintConfig) -> bool {
        self.contains_cutoff && self.n_l.min(self.n_r) < cfg.n_omin
    }

    fn violates_condition_ii(&self, cfg: &ConstraintConfig) -> bool {
        self.contains_cutoff && ((self.n_l + self.n_r) as f64) < cfg.alpha * self.n_b as f64
    }
}

/// Condition (i) applied to both children of a candidate split. A split on a
/// covariate leaves both children covering the cutoff; a split on the running
/// variable leaves exactly one.
pub fn split_validity(
    _parent: &NodeStripStats,
    left: &NodeStripStats,
    right: &NodeStripStats,
    cfg: &ConstraintConfig,
) -> SplitValidity {
    if left.violates_condition_i(cfg) || right.violates_condition_i(cfg) {
        SplitValidity::InvalidConditionI
    } else {
        SplitValidity::Valid
    }
}

pub fn stop_validity(node: &NodeStripStats, cfg: &ConstraintConfig) -> StopValidity {
    if node.violates_condition_ii(cfg) {
        StopValidity::MustSplit
    } else {
        StopValidity::MayStop
    }
}

/// Zeroes the weights of condition-(i) violators and, when the node may not
/// stop, the stop weight. If stopping is forbidden but nothing valid remains
/// the stop weight is set to one and the node is reported as an invalid leaf.
pub fn apply_policy(
    weights: &mut SplitWeights,
    node: &NodeStripStats,
    children: &[(NodeStripStats, NodeStripStats)],
    cfg: &ConstraintConfig,
) -> PolicyOutcome {
    debug_assert_eq!(weights.log_split.len(), children.len());
    let mut changed = false;
    for (w, (l, r)) in weights.log_split.iter_mut().zip(children) {
        if split_validity(node, l, r, cfg) == SplitValidity::InvalidConditionI
            && *w != f64::NEG_INFINITY
        {
            *w = f64::NEG_INFINITY;
            changed = true;
        }
    }
    if stop_validity(node, cfg) == StopValidity::MustSplit {
        let any_valid = weights.log_split.iter().any(|&w| w > f64::NEG_INFINITY);
        if any_valid {
            if weights.log_stop != f64::NEG_INFINITY {
                weights.log_stop = f64::NEG_INFINITY;
                changed = true;
            }
        } else {
            weights.log_stop = 0.0;
            return PolicyOutcome::InvalidLeaf;
        }
    }
    if changed {
        PolicyOutcome::Adjusted
    } else {
        PolicyOutcome::Unchanged
    }
}

/// The identification-strip constraint as a grower policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RddPolicy {
    pub cfg: ConstraintConfig,
    pub cutoff: f64,
}

impl RddPolicy {
    pub fn new(cfg: ConstraintConfig, cutoff: f64) -> Self {
        RddPolicy { cfg, cutoff }
    }
}

impl SplitPolicy for RddPolicy {
    fn tracks_strip(&self) -> bool {
        true
    }

    fn must_split(&self, node: &NodeExtent) -> bool {
        stop_validity(&NodeStripStats::from_extent(node, self.cutoff), &self.cfg)
            == StopValidity::MustSplit
    }

    fn adjust(
        &self,
        node: &NodeExtent,
        children: &[(NodeExtent, NodeExtent)],
        weights: &mut SplitWeights,
    ) -> PolicyOutcome {
        let parent = NodeStripStats::from_extent(node, self.cutoff);
        let kids: Vec<_> = children
            .iter()
            .map(|(l, r)| {
                (
                    NodeStripStats::from_extent(l, self.cutoff),
                    NodeStripStats::from_extent(r, self.cutoff),
                )
            })
            .collect();
        apply_policy(weights, &parent, &kids, &self.cfg)
    }
}

/// Fails when condition (i) cannot hold even at the root.
pub fn check_root_condition(strip: &StripIndex, cfg: &ConstraintConfig) -> Result<()> {
    let (left, right) = (strip.left_ids.len(), strip.right_ids.len());
    if left.min(right) < cfg.n_omin {
        return Err(Error::RootCondition {
            h: cfg.h,
            n_omin: cfg.n_omin,
            left,
            right,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafViolation {
    pub leaf: usize,
    pub stats: NodeStripStats,
    pub condition_i: bool,
    pub condition_ii: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditReport {
    pub cutoff_leaves: usize,
    pub violations: Vec<LeafViolation>,
}

/// Re-derives every leaf's strip counts by routing the training rows and
/// checks both conditions on leaves that cover the cutoff. `rows[i]` is the
/// feature row of observation `i` with the running variable first.
pub fn audit_tree(
    tree: &TreeNode,
    rows: &[Vec<f64>],
    sides: &[StripSide],
    cutoff: f64,
    cfg: &ConstraintConfig,
) -> AuditReport {
    let leaves = tree.leaves();
    let mut stats: Vec<NodeStripStats> = leaves
        .iter()
        .map(|l| NodeStripStats {
            contains_cutoff: l.covers(cutoff),
            n_l: 0,
            n_r: 0,
            n_b: 0,
        })
        .collect();
    for (row, side) in rows.iter().zip(sides) {
        let s = &mut stats[tree.leaf_index(row)];
        s.n_b += 1;
        match side {
            StripSide::Left => s.n_l += 1,
            StripSide::Right => s.n_r += 1,
            StripSide::Outside => {}
        }
    }
    let mut report = AuditReport::default();
    for (leaf, s) in stats.into_iter().enumerate() {
        if !s.contains_cutoff {
            continue;
        }
        report.cutoff_leaves += 1;
        let condition_i = s.violates_condition_i(cfg);
        let condition_ii = s.violates_condition_ii(cfg);
        if condition_i || condition_ii {
            report.violations.push(LeafViolation {
                leaf,
                stats: s,
                condition_i,
                condition_ii,
            });
        }
    }
    report
}
