//! Candidate thresholds at evenly spaced empirical quantiles.

/// One candidate threshold together with the number of node observations
/// that route left (`value <= threshold`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutpoint {
    pub threshold: f64,
    pub left_count: usize,
}

/// Per-feature candidate thresholds for a node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CutpointSet {
    pub per_feature: Vec<Vec<Cutpoint>>,
}

impl CutpointSet {
    pub fn len(&self) -> usize {
        self.per_feature.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Thresholds for one feature given the node's values in ascending order.
///
/// Takes the order statistics at ranks `ceil(q m / (k + 1))`, `q = 1..=k`,
/// drops the maximum (it would leave the right child empty) and duplicates.
/// When `k >= m - 1` every distinct split position is produced.
pub fn thresholds_sorted(sorted: &[f64], k: usize) -> Vec<Cutpoint> {
    let m = sorted.len();
    if m < 2 || k == 0 {
        return Vec::new();
    }
    let max = sorted[m - 1];
    let mut out: Vec<Cutpoint> = Vec::with_capacity(k.min(m));
    let mut covered = 0;
    for q in 1..=k {
        let r = (q * m + k) / (k + 1) - 1;
        if r < covered {
            // sorted[r] ties with the previous threshold
            continue;
        }
        let t = sorted[r];
        if t >= max {
            break;
        }
        let mut left_count = r + 1;
        while sorted[left_count] <= t {
            left_count += 1;
        }
        covered = left_count;
        out.push(Cutpoint {
            threshold: t,
            left_count,
        });
    }
    out
}

/// Candidate thresholds for every feature of a node. `node_values[j]` holds
/// the node's values of feature `j` in any order.
pub fn candidate_cutpoints(node_values: &[Vec<f64>], k: usize) -> CutpointSet {
    CutpointSet {
        per_feature: node_values
            .iter()
            .map(|vals| {
                let mut sorted = vals.clone();
                sorted.sort_by(f64::total_cmp);
                thresholds_sorted(&sorted, k)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_values_three_candidates() {
        let c = thresholds_sorted(&[1.0, 2.0, 3.0, 4.0], 3);
        let t: Vec<f64> = c.iter().map(|c| c.threshold).collect();
        assert_eq!(t, vec![1.0, 2.0, 3.0]);
        assert_eq!(
            c.iter().map(|c| c.left_count).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn constant_feature_has_no_candidates() {
        let set = candidate_cutpoints(&[vec![2.0; 5], vec![1.0, 0.0, 1.0, 0.0, 1.0]], 10);
        assert!(set.per_feature[0].is_empty());
        assert_eq!(set.per_feature[1].len(), 1);
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn ties_route_left() {
        let c = thresholds_sorted(&[0.0, 1.0, 1.0, 1.0, 2.0], 2);
        assert!(c.iter().all(|c| c.threshold < 2.0));
        let one = c.iter().find(|c| c.threshold == 1.0).unwrap();
        assert_eq!(one.left_count, 4);
    }

    fn distinct_split_positions(sorted: &[f64]) -> Vec<f64> {
        // enumerate every threshold that leaves both children nonempty
        let mut out = Vec::new();
        for i in 0..sorted.len() - 1 {
            if sorted[i] < sorted[i + 1] {
                out.push(sorted[i]);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn large_k_enumerates_everything(vals in prop::collection::vec(0u8..12, 2..40)) {
            let mut sorted: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
            sorted.sort_by(f64::total_cmp);
            let got: Vec<f64> = thresholds_sorted(&sorted, sorted.len()).iter().map(|c| c.threshold).collect();
            prop_assert_eq!(got, distinct_split_positions(&sorted));
        }

        #[test]
        fn candidates_are_nontrivial(vals in prop::collection::vec(-5.0f64..5.0, 2..60), k in 1usize..20) {
            let mut sorted = vals.clone();
            sorted.sort_by(f64::total_cmp);
            let c = thresholds_sorted(&sorted, k);
            prop_assert!(c.len() <= k);
            for cp in &c {
                let left = sorted.iter().filter(|&&v| v <= cp.threshold).count();
                prop_assert_eq!(left, cp.left_count);
                prop_assert!(left >= 1 && left < sorted.len());
                prop_assert!(sorted.contains(&cp.threshold));
            }
            prop_assert!(c.windows(2).all(|w| w[0].threshold < w[1].threshold));
        }
    }
}
