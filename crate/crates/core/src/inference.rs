//! Posterior summaries: credible intervals, subgroup contrasts and a CART
//! tree fit to unit-level point estimates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{mean, sample_sd};
use crate::error::{Error, Result};
use crate::models::PosteriorDraws;

/// Equal-tailed summary of a scalar posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean: f64,
    pub sd: f64,
    /// Lower end of the equal-tailed interval, the `(1 - level)/2` quantile.
    pub lower: f64,
    pub upper: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub level: f64,
}

impl IntervalSummary {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Quantile of already sorted values by linear interpolation between order
/// statistics at position `(m - 1) q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = (m - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn summarize(draws: &[f64], level: f64) -> Result<IntervalSummary> {
    if draws.len() < 2 {
        return Err(Error::InsufficientDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(
            "posterior draws contain non-finite values".into(),
        ));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let m = mean(draws);
    Ok(IntervalSummary {
        // clamp guards the last-ulp rounding of a constant chain's mean
        mean: m.clamp(sorted[0], sorted[sorted.len() - 1]),
        sd: sample_sd(draws),
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
        median: quantile_sorted(&sorted, 0.5),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        level,
    })
}

/// Summary of the strip-average effect.
pub fn summarize_ate(draws: &PosteriorDraws, level: f64) -> Result<IntervalSummary> {
    summarize(&draws.ate, level)
}

/// One summary per strip unit, in `draws.units` order.
pub fn summarize_units(draws: &PosteriorDraws, level: f64) -> Result<Vec<IntervalSummary>> {
    (0..draws.num_units())
        .map(|k| summarize(&draws.unit_draws(k), level))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupContrast {
    /// Per draw: mean effect over group A minus mean over group B.
    pub differences: Vec<f64>,
    /// Share of draws with a strictly positive difference.
    pub prob_positive: f64,
    pub size_a: usize,
    pub size_b: usize,
}

/// Contrast of two disjoint groups given as positions into `draws.units`.
pub fn subgroup_contrast(
    draws: &PosteriorDraws,
    group_a: &[usize],
    group_b: &[usize],
) -> Result<SubgroupContrast> {
    let k = draws.num_units();
    for (name, g) in [("A", group_a), ("B", group_b)] {
        if g.is_empty() {
            return Err(Error::InvalidData(format!("subgroup {name} is empty")));
        }
        if let Some(&bad) = g.iter().find(|&&u| u >= k) {
            return Err(Error::InvalidData(format!(
                "subgroup {name} refers to unit position {bad}, but only {k} strip units exist"
            )));
        }
    }
    let mut in_a = vec![false; k];
    for &u in group_a {
        in_a[u] = true;
    }
    if group_b.iter().any(|&u| in_a[u]) {
        return Err(Error::InvalidData("subgroups must be disjoint".into()));
    }
    if draws.num_draws() == 0 {
        return Err(Error::InsufficientDraws { needed: 1, got: 0 });
    }
    let group_mean =
        |row: &[f64], g: &[usize]| g.iter().map(|&u| row[u]).sum::<f64>() / g.len() as f64;
    let differences: Vec<f64> = draws
        .cate
        .iter()
        .map(|row| group_mean(row, group_a) - group_mean(row, group_b))
        .collect();
    let positive = differences.iter().filter(|&&d| d > 0.0).count();
    Ok(SubgroupContrast {
        prob_positive: positive as f64 / differences.len() as f64,
        differences,
        size_a: group_a.len(),
        size_b: group_b.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryTreeConfig {
    pub max_depth: usize,
    /// Minimum units per child; `None` means 5% of the units, at least one.
    pub min_leaf: Option<usize>,
}

impl Default for SummaryTreeConfig {
    fn default() -> Self {
        SummaryTreeConfig {
            max_depth: 3,
            min_leaf: None,
        }
    }
}

impl SummaryTreeConfig {
    pub fn resolved_min_leaf(&self, n: usize) -> usize {
        self.min_leaf
            .unwrap_or_else(|| (n as f64 * 0.05).ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySplit {
    pub feature: usize,
    pub name: String,
    /// Units with `value <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub n: usize,
    pub share: f64,
    pub mean: f64,
    pub split: Option<SummarySplit>,
}

/// Nodes are stored in preorder; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTree {
    pub nodes: Vec<SummaryNode>,
}

impl SummaryTree {
    pub fn root(&self) -> &SummaryNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &SummaryNode> {
        self.nodes.iter().filter(|n| n.split.is_none())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Indented text, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(0, "all units", &mut out);
        out
    }

    fn render_node(&self, id: usize, label: &str, out: &mut String) {
        let node = &self.nodes[id];
        let _ = writeln!(
            out,
            "{}{label}: n={} share={:.3} mean={:.4}",
            "  ".repeat(node.depth),
            node.n,
            node.share,
            node.mean
        );
        if let Some(s) = &node.split {
            self.render_node(s.left, &format!("{} <= {}", s.name, s.threshold), out);
            self.render_node(s.right, &format!("{} > {}", s.name, s.threshold), out);
        }
    }
}

/// Best split of `idx` on one feature: `(gain, threshold)` maximizing the
/// drop in the sum of squared deviations with both children holding at
/// least `min_leaf` units. Thresholds are observed values.
pub fn best_split_on_feature(
    y: &[f64],
    col: &[f64],
    idx: &[usize],
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&i| y[i]).sum();
    let base = total * total / n as f64;
    let mut left = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for k in 0..n - 1 {
        left += y[order[k]];
        let v = col[order[k]];
        if v == col[order[k + 1]] {
            continue;
        }
        let nl = k + 1;
        let nr = n - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let right = total - left;
        let gain = left * left / nl as f64 + right * right / nr as f64 - base;
        if best.map_or(true, |(g, _)| gain > g) {
            best = Some((gain, v));
        }
    }
    best
}

/// Greedy variance-reduction tree over column-major `features`.
pub fn fit_summary_tree(
    estimates: &[f64],
    features: &[Vec<f64>],
    names: &[String],
    cfg: &SummaryTreeConfig,
) -> Result<SummaryTree> {
    let n = estimates.len();
    if features.len() != names.len() {
        return Err(Error::InvalidData(
            "feature names and columns differ in count".into(),
        ));
    }
    if features.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidData(
            "feature columns must match the estimates in length".into(),
        ));
    }
    let min_leaf = cfg.resolved_min_leaf(n);
    if n < 2 * min_leaf || n == 0 {
        return Err(Error::InvalidData(format!(
            "summary tree needs at least {} units, got {n}",
            2 * min_leaf
        )));
    }
    let mut tree = SummaryTree { nodes: Vec::new() };
    let idx: Vec<usize> = (0..n).collect();
    grow_summary(
        estimates, features, names, cfg, min_leaf, n, &idx, None, 0, &mut tree,
    );
    Ok(tree)
}

#[allow(clippy::too_many_arguments)]
fn grow_summary(
    y: &[f64],
    features: &[Vec<f64>],
    names: &[String],
    cfg: &SummaryTreeConfig,
    min_leaf: usize,
    n_total: usize,
    idx: &[usize],
    parent: Option<usize>,
    depth: usize,
    tree: &mut SummaryTree,
) -> usize {
    let id = tree.nodes.len();
    let node_mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    tree.nodes.push(SummaryNode {
        id,
        parent,
        depth,
        n: idx.len(),
        share: idx.len() as f64 / n_total as f64,
        mean: node_mean,
        split: None,
    });
    if depth >= cfg.max_depth {
        return id;
    }
    let sse: f64 = idx.iter().map(|&i| (y[i] - node_mean).powi(2)).sum();
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, col) in features.iter().enumerate() {
        if let Some((gain, t)) = best_split_on_feature(y, col, idx, min_leaf) {
            if best.map_or(true, |(_, g, _)| gain > g) {
                best = Some((f, gain, t));
            }
        }
    }
    let Some((f, gain, t)) = best else {
        return id;
    };
    // the gain comes from raw sums, so its rounding error scales with sum y^2
    let scale: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    if !(gain > 1e-10 * scale) || sse <= 0.0 {
        return id;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| features[f][i] <= t);
    let left = grow_summary(
        y,
        features,
        names,
        cfg,
        min_leaf,
        n_total,
        &l,
        Some(id),
        depth + 1,
        tree,
    );
    let right = grow_summary(
        y,
        features,
        names,
        cfg,
        min_leaf,
        n_total,
        &r,
        Some(id),
        depth + 1,
        tree,
    );
    tree.nodes[id].split = Some(SummarySplit {
        feature: f,
        name: names[f].clone(),
        threshold: t,
        left,
        right,
    });
    id
}
