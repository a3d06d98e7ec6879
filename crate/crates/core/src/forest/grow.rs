//! Grow-From-Root: recursive stochastic tree construction.
//!
//! At every node each candidate cutpoint is weighted by the product of the
//! children's integrated likelihoods, and the no-split option by
//! `|C| ((1 + d)^beta / alpha - 1)` times the node's own integrated
//! likelihood. A [`SplitPolicy`] may veto individual candidates or the
//! no-split option before one outcome is drawn.

use rand::Rng;

use super::cutpoints::thresholds_sorted;
use super::leaf::{log_marginal_likelihood_unchecked, sample_leaf_unchecked, SuffStat};
use super::tree::TreeNode;
use crate::data::StripSide;

/// Training features, column-major, with each column's row order presorted
/// once so nodes can keep sorted index lists by stable partitioning.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    cols: Vec<Vec<f64>>,
    sorted: Vec<Vec<u32>>,
}

impl FeatureMatrix {
    /// `cols[0]` must be the running variable.
    pub fn new(cols: Vec<Vec<f64>>) -> Self {
        assert!(!cols.is_empty(), "at least one feature is required");
        let n = cols[0].len();
        assert!(cols.iter().all(|c| c.len() == n), "ragged feature columns");
        assert!(n <= u32::MAX as usize);
        let sorted = cols
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                idx
            })
            .collect();
        FeatureMatrix { cols, sorted }
    }

    pub fn n(&self) -> usize {
        self.cols[0].len()
    }

    pub fn num_features(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }
}

/// What a policy sees about a node: its size, running-variable interval
/// `(x_lo, x_hi]`, and identification-strip counts (zero unless the policy
/// asked for strip tracking).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeExtent {
    pub n: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub strip_left: usize,
    pub strip_right: usize,
}

impl NodeExtent {
    pub fn root(n: usize, strip_left: usize, strip_right: usize) -> Self {
        NodeExtent {
            n,
            x_lo: f64::NEG_INFINITY,
            x_hi: f64::INFINITY,
            strip_left,
            strip_right,
        }
    }
}

/// Log selection weights at a node; `-inf` encodes a zero weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWeights {
    pub log_split: Vec<f64>,
    pub log_stop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyOutcome {
    Unchanged,
    Adjusted,
    /// No valid split exists but stopping was forbidden; the node becomes a
    /// leaf that violates the policy.
    InvalidLeaf,
}

/// Split-validity rules plugged into the grower.
pub trait SplitPolicy: Sync {
    /// Whether the grower must compute identification-strip counts.
    fn tracks_strip(&self) -> bool {
        false
    }

    /// Whether stopping at this node is forbidden.
    fn must_split(&self, _node: &NodeExtent) -> bool {
        false
    }

    /// Adjusts candidate weights; `children[k]` are the child extents of
    /// candidate `k`.
    fn adjust(
        &self,
        _node: &NodeExtent,
        _children: &[(NodeExtent, NodeExtent)],
        _weights: &mut SplitWeights,
    ) -> PolicyOutcome {
        PolicyOutcome::Unchanged
    }
}

/// Plain BART growth.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unconstrained;

impl SplitPolicy for Unconstrained {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowParams {
    pub max_depth: usize,
    pub min_node_size: usize,
    pub num_cutpoints: usize,
    pub tree_alpha: f64,
    pub tree_beta: f64,
    pub leaf_variance: f64,
    /// Reference noise variance; observation weights are relative to it.
    pub sigma2: f64,
}

/// Per-observation inputs for one tree: weights `w_i` and weighted partial
/// residuals `w_i r_i` under the model `r_i ~ N(mu_leaf, sigma2 / w_i)`.
#[derive(Debug, Clone, Copy)]
pub struct TreeData<'a> {
    pub features: &'a FeatureMatrix,
    pub weights: &'a [f64],
    pub scores: &'a [f64],
    pub strip: Option<&'a [StripSide]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowOutcome {
    pub tree: TreeNode,
    pub invalid_leaves: usize,
}

/// Candidate at a node: feature, threshold, left count and left statistic.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    left_count: usize,
    left: SuffStat,
    left_strip: (usize, usize),
}

struct Grower<'a, 'r, R: Rng + ?Sized> {
    data: TreeData<'a>,
    params: GrowParams,
    policy: &'a dyn SplitPolicy,
    rng: &'r mut R,
    fit: &'r mut [f64],
    goes_left: Vec<bool>,
    invalid_leaves: usize,
}

/// Grows a tree from the root over every observation, writing the tree's
/// fitted value for each observation into `fit`.
pub fn grow_from_root<R: Rng + ?Sized>(
    data: TreeData<'_>,
    params: &GrowParams,
    policy: &dyn SplitPolicy,
    rng: &mut R,
    fit: &mut [f64],
) -> GrowOutcome {
    let n = data.features.n();
    assert_eq!(data.weights.len(), n);
    assert_eq!(data.scores.len(), n);
    assert_eq!(fit.len(), n);
    if let Some(s) = data.strip {
        assert_eq!(s.len(), n);
    }
    let lists = data.features.sorted.clone();
    let mut g = Grower {
        data,
        params: *params,
        policy,
        rng,
        fit,
        goes_left: vec![false; n],
        invalid_leaves: 0,
    };
    let tree = g.grow(lists, f64::NEG_INFINITY, f64::INFINITY, 0);
    GrowOutcome {
        tree,
        invalid_leaves: g.invalid_leaves,
    }
}

/// Draws an index proportionally to `exp(log_split)` and `exp(log_stop)`;
/// `None` is the stop option.
pub fn sample_log_weights<R: Rng + ?Sized>(
    log_split: &[f64],
    log_stop: f64,
    rng: &mut R,
) -> Option<usize> {
    let max = log_split.iter().copied().fold(log_stop, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let stop_w = (log_stop - max).exp();
    let w: Vec<f64> = log_split.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum::<f64>() + stop_w;
    let mut u = rng.random::<f64>() * total;
    if u < stop_w {
        return None;
    }
    u -= stop_w;
    let mut last_positive = None;
    for (k, &wk) in w.iter().enumerate() {
        if wk > 0.0 {
            last_positive = Some(k);
            if u < wk {
                return Some(k);
            }
            u -= wk;
        }
    }
    // floating-point leftovers land on the last positive weight
    last_positive
}

impl<R: Rng + ?Sized> Grower<'_, '_, R> {
    fn make_leaf(&mut self, members: &[u32], stat: &SuffStat) -> TreeNode {
        let value = sample_leaf_unchecked(
            stat,
            self.params.sigma2,
            self.params.leaf_variance,
            self.rng,
        );
        for &i in members {
            self.fit[i as usize] = value;
        }
        TreeNode::Leaf { value }
    }

    fn grow(&mut self, lists: Vec<Vec<u32>>, x_lo: f64, x_hi: f64, depth: usize) -> TreeNode {
        let members = &lists[0];
        let n = members.len();
        let mut stat = SuffStat::default();
        let mut strip = (0usize, 0usize);
        for &i in members {
            let i = i as usize;
            stat.push(self.data.weights[i], self.data.scores[i]);
        }
        let track = self.policy.tracks_strip() && self.data.strip.is_some();
        if track {
            strip = count_strip(self.data.strip.unwrap(), members);
        }
        let extent = NodeExtent {
            n,
            x_lo,
            x_hi,
            strip_left: strip.0,
            strip_right: strip.1,
        };
        let p = &self.params;
        let forced_stop = depth >= p.max_depth || n < 2 * p.min_node_size;
        let must_split = self.policy.must_split(&extent);
        if forced_stop && !must_split {
            return self.make_leaf(&lists[0], &stat);
        }

        let candidates = self.candidates(&lists);
        if candidates.is_empty() {
            if must_split {
                self.invalid_leaves += 1;
            }
            return self.make_leaf(&lists[0], &stat);
        }

        let (sigma2, tau) = (p.sigma2, p.leaf_variance);
        let log_split: Vec<f64> = candidates
            .iter()
            .map(|c| {
                log_marginal_likelihood_unchecked(&c.left, sigma2, tau)
                    + log_marginal_likelihood_unchecked(&(stat - c.left), sigma2, tau)
            })
            .collect();
        let log_stop = if forced_stop {
            f64::NEG_INFINITY
        } else {
            (candidates.len() as f64).ln()
                + ((1.0 + depth as f64).powf(p.tree_beta) / p.tree_alpha - 1.0).ln()
                + log_marginal_likelihood_unchecked(&stat, sigma2, tau)
        };
        let mut weights = SplitWeights {
            log_split,
            log_stop,
        };

        let children: Vec<(NodeExtent, NodeExtent)> = if track {
            candidates
                .iter()
                .map(|c| child_extents(&extent, c))
                .collect()
        } else {
            Vec::new()
        };
        if track || must_split {
            if self.policy.adjust(&extent, &children, &mut weights) == PolicyOutcome::InvalidLeaf {
                self.invalid_leaves += 1;
            }
        }

        let choice = sample_log_weights(&weights.log_split, weights.log_stop, self.rng);
        let Some(k) = choice else {
            return self.make_leaf(&lists[0], &stat);
        };
        let cand = candidates[k];

        let chosen = &lists[cand.feature];
        for (pos, &i) in chosen.iter().enumerate() {
            self.goes_left[i as usize] = pos < cand.left_count;
        }
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in &lists {
            let mut l = Vec::with_capacity(cand.left_count);
            let mut r = Vec::with_capacity(n - cand.left_count);
            for &i in list {
                if self.goes_left[i as usize] {
                    l.push(i);
                } else {
                    r.push(i);
                }
            }
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(lists);

        let ((l_lo, l_hi), (r_lo, r_hi)) = if cand.feature == 0 {
            (
                (x_lo, x_hi.min(cand.threshold)),
                (x_lo.max(cand.threshold), x_hi),
            )
        } else {
            ((x_lo, x_hi), (x_lo, x_hi))
        };
        let left = self.grow(left_lists, l_lo, l_hi, depth + 1);
        let right = self.grow(right_lists, r_lo, r_hi, depth + 1);
        TreeNode::split(cand.feature, cand.threshold, left, right)
    }

    fn candidates(&self, lists: &[Vec<u32>]) -> Vec<Candidate> {
        let k = self.params.num_cutpoints;
        let mut out = Vec::new();
        let mut vals = Vec::with_capacity(lists[0].len());
        let strip = if self.policy.tracks_strip() {
            self.data.strip
        } else {
            None
        };
        for (j, list) in lists.iter().enumerate() {
            let col = self.data.features.col(j);
            vals.clear();
            vals.extend(list.iter().map(|&i| col[i as usize]));
            let cps = thresholds_sorted(&vals, k);
            if cps.is_empty() {
                continue;
            }
            let mut next = 0;
            let mut acc = SuffStat::default();
            let mut acc_strip = (0usize, 0usize);
            for (pos, &i) in list.iter().enumerate() {
                let i = i as usize;
                acc.push(self.data.weights[i], self.data.scores[i]);
                if let Some(tags) = strip {
                    match tags[i] {
                        StripSide::Left => acc_strip.0 += 1,
                        StripSide::Right => acc_strip.1 += 1,
                        StripSide::Outside => {}
                    }
                }
                if pos + 1 == cps[next].left_count {
                    out.push(Candidate {
                        feature: j,
                        threshold: cps[next].threshold,
                        left_count: cps[next].left_count,
                        left: acc,
                        left_strip: acc_strip,
                    });
                    next += 1;
                    if next == cps.len() {
                        break;
                    }
                }
            }
        }
        out
    }
}

fn count_strip(tags: &[StripSide], members: &[u32]) -> (usize, usize) {
    let mut c = (0, 0);
    for &i in members {
        match tags[i as usize] {
            StripSide::Left => c.0 += 1,
            StripSide::Right => c.1 += 1,
            StripSide::Outside => {}
        }
    }
    c
}

fn child_extents(parent: &NodeExtent, c: &Candidate) -> (NodeExtent, NodeExtent) {
    let (l_lo, l_hi, r_lo, r_hi) = if c.feature == 0 {
        (
            parent.x_lo,
            parent.x_hi.min(c.threshold),
            parent.x_lo.max(c.threshold),
            parent.x_hi,
        )
    } else {
        (parent.x_lo, parent.x_hi, parent.x_lo, parent.x_hi)
    };
    (
        NodeExtent {
            n: c.left_count,
            x_lo: l_lo,
            x_hi: l_hi,
            strip_left: c.left_strip.0,
            strip_right: c.left_strip.1,
        },
        NodeExtent {
            n: parent.n - c.left_count,
            x_lo: r_lo,
            x_hi: r_hi,
            strip_left: parent.strip_left - c.left_strip.0,
            strip_right: parent.strip_right - c.left_strip.1,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn params() -> GrowParams {
        GrowParams {
            max_depth: 10,
            min_node_size: 1,
            num_cutpoints: 100,
            tree_alpha: 0.95,
            tree_beta: 1.25,
            leaf_variance: 0.5,
            sigma2: 1.0,
        }
    }

    fn members_of_leaves(tree: &TreeNode, fm: &FeatureMatrix) -> Vec<usize> {
        (0..fm.n()).map(|i| tree.leaf_index(&fm.row(i))).collect()
    }

    #[test]
    fn single_point_is_a_leaf() {
        let fm = FeatureMatrix::new(vec![vec![0.3]]);
        let mut fit = vec![0.0];
        let mut rng = rng_from_seed(1);
        let out = grow_from_root(
            TreeData {
                features: &fm,
                weights: &[1.0],
                scores: &[2.0],
                strip: None,
            },
            &params(),
            &Unconstrained,
            &mut rng,
            &mut fit,
        );
        let TreeNode::Leaf { value } = out.tree else {
            panic!("expected a leaf")
        };
        assert_eq!(fit[0], value);
    }

    #[test]
    fn fitted_values_match_routing() {
        let n = 200;
        let mut rng = rng_from_seed(3);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let r: Vec<f64> = x
            .iter()
            .map(|&v| if v > 0.5 { 2.0 } else { -1.0 })
            .collect();
        let fm = FeatureMatrix::new(vec![x, w]);
        let ones = vec![1.0; n];
        let mut fit = vec![f64::NAN; n];
        let out = grow_from_root(
            TreeData {
                features: &fm,
                weights: &ones,
                scores: &r,
                strip: None,
            },
            &params(),
            &Unconstrained,
            &mut rng,
            &mut fit,
        );
        assert!(out.tree.num_internal() >= 1);
        for i in 0..n {
            assert_eq!(fit[i], out.tree.predict_row(&fm.row(i)));
        }
        // every observation lands in exactly one leaf
        let ids = members_of_leaves(&out.tree, &fm);
        assert!(ids.iter().all(|&id| id < out.tree.num_leaves()));
        assert_eq!(out.tree.num_leaves(), out.tree.num_internal() + 1);
    }

    #[test]
    fn huge_beta_stops_below_root() {
        let n = 100;
        let mut rng = rng_from_seed(4);
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let r: Vec<f64> = x.iter().map(|&v| (v / 10.0).sin() * 3.0).collect();
        let fm = FeatureMatrix::new(vec![x]);
        let ones = vec![1.0; n];
        let mut p = params();
        p.tree_beta = 1e6;
        for _ in 0..50 {
            let mut fit = vec![0.0; n];
            let out = grow_from_root(
                TreeData {
                    features: &fm,
                    weights: &ones,
                    scores: &r,
                    strip: None,
                },
                &p,
                &Unconstrained,
                &mut rng,
                &mut fit,
            );
            assert!(out.tree.depth() <= 1);
        }
    }

    #[test]
    fn sampler_respects_zero_weights() {
        let mut rng = rng_from_seed(9);
        let ls = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        for _ in 0..1000 {
            assert_eq!(
                sample_log_weights(&ls, f64::NEG_INFINITY, &mut rng),
                Some(1)
            );
        }
        assert_eq!(
            sample_log_weights(&[f64::NEG_INFINITY], 0.0, &mut rng),
            None
        );
    }
}
