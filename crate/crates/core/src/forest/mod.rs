//! Sum-of-trees machinery shared by every model.

pub mod cutpoints;
pub mod grow;
pub mod leaf;
pub mod tree;

pub use cutpoints::{candidate_cutpoints, thresholds_sorted, Cutpoint, CutpointSet};
pub use grow::{
    grow_from_root, sample_log_weights, FeatureMatrix, GrowOutcome, GrowParams, NodeExtent,
    PolicyOutcome, SplitPolicy, SplitWeights, TreeData, Unconstrained,
};
pub use leaf::{
    leaf_posterior, log_marginal_likelihood, sample_inverse_gamma, sample_leaf, sample_sigma2,
    SuffStat,
};
pub use tree::{Forest, LeafInfo, PreorderNode, SerializedForest, TreeNode};
