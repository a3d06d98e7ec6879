//! Constrained causal forest for sharp designs.
//!
//! Model on the standardized outcome:
//!
//! ```text
//! y_i = a mu(x_i, w_i) + b_{z_i} tau~(x_i, w_i) + e_i,   e_i ~ N(0, sigma2_{z_i})
//! a ~ N(0, 1),  b0, b1 ~ N(0, 1/2)
//! ```
//!
//! Both forests are grown with the identification-strip policy. The effect
//! at the cutoff for unit `i` is `(b1 - b0) tau~(c, w_i)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ChainRow, Estimator, PosteriorDraws, STREAM_MU, STREAM_SCALE, STREAM_SIGMA, STREAM_TAU,
};
use crate::constraint::{audit_tree, check_root_condition, RddPolicy};
use crate::data::{
    build_strip_index, standardize, ConstraintConfig, Dataset, SamplerConfig, ScalingRecord,
    StripSide,
};
use crate::error::{Error, Result};
use crate::forest::{
    grow_from_root, leaf::sample_normal, sample_inverse_gamma, FeatureMatrix, Forest, GrowParams,
    SplitPolicy, TreeData, TreeNode, Unconstrained,
};
use crate::rng::child_rng;

/// Where unit-level effects are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CateEvaluation {
    /// `tau(c, w_i)`
    #[default]
    AtCutoff,
    /// `tau(x_i, w_i)`
    AtUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BartRddOptions {
    pub cate_at: CateEvaluation,
    /// One noise variance shared by both arms instead of one per arm.
    pub pooled_variance: bool,
    /// Re-check every retained tree against the constraint by routing the
    /// training rows.
    pub audit: bool,
    pub keep_forests: bool,
    /// Disabling the constraint turns the model into an unconstrained
    /// causal forest.
    pub constrained: bool,
}

impl Default for BartRddOptions {
    fn default() -> Self {
        BartRddOptions {
            cate_at: CateEvaluation::AtCutoff,
            pooled_variance: false,
            audit: false,
            keep_forests: false,
            constrained: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleParams {
    pub a: f64,
    pub b0: f64,
    pub b1: f64,
}

impl Default for ScaleParams {
    fn default() -> Self {
        ScaleParams {
            a: 1.0,
            b0: -0.5,
            b1: 0.5,
        }
    }
}

impl ScaleParams {
    pub fn b(&self, z: u8) -> f64 {
        if z == 1 {
            self.b1
        } else {
            self.b0
        }
    }
}

/// One retained state, kept when `keep_forests` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RddDraw {
    pub mu: Forest,
    pub tau: Forest,
    pub scale: ScaleParams,
    pub sigma2: [f64; 2],
    /// `a mu_i + b_{z_i} tau~_i` on the standardized scale.
    pub fitted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BartRddFit {
    pub draws: PosteriorDraws,
    pub scaling: ScalingRecord,
    pub states: Vec<RddDraw>,
}

/// Conjugate draws of `a`, then `b0` and `b1`.
///
/// `a | .` regresses `y - b_z tau~` on `mu` with arm-specific noise
/// variances and prior `N(0, 1)`; each `b_z | .` regresses `y - a mu` on
/// `tau~` within its arm with prior `N(0, 1/2)`.
pub fn sample_scale_params<R: Rng + ?Sized>(
    y: &[f64],
    z: &[u8],
    mu: &[f64],
    tau: &[f64],
    sigma2: [f64; 2],
    current: ScaleParams,
    rng: &mut R,
) -> ScaleParams {
    let mut prec = 1.0;
    let mut lin = 0.0;
    for i in 0..y.len() {
        let s2 = sigma2[z[i] as usize];
        let u = y[i] - current.b(z[i]) * tau[i];
        prec += mu[i] * mu[i] / s2;
        lin += mu[i] * u / s2;
    }
    let a = sample_normal(lin / prec, (1.0 / prec).sqrt(), rng);

    let mut prec_b = [2.0, 2.0];
    let mut lin_b = [0.0, 0.0];
    for i in 0..y.len() {
        let arm = z[i] as usize;
        let s2 = sigma2[arm];
        let u = y[i] - a * mu[i];
        prec_b[arm] += tau[i] * tau[i] / s2;
        lin_b[arm] += tau[i] * u / s2;
    }
    let b0 = sample_normal(lin_b[0] / prec_b[0], (1.0 / prec_b[0]).sqrt(), rng);
    let b1 = sample_normal(lin_b[1] / prec_b[1], (1.0 / prec_b[1]).sqrt(), rng);
    ScaleParams { a, b0, b1 }
}

struct ForestState {
    trees: Vec<TreeNode>,
    fits: Vec<Vec<f64>>,
    invalid: Vec<usize>,
    total: Vec<f64>,
}

impl ForestState {
    fn new(m: usize, n: usize) -> Self {
        ForestState {
            trees: vec![TreeNode::leaf(0.0); m],
            fits: vec![vec![0.0; n]; m],
            invalid: vec![0; m],
            total: vec![0.0; n],
        }
    }

    /// Sums per-tree fits in tree order, matching `Forest::predict_row`.
    fn resync(&mut self) {
        for i in 0..self.total.len() {
            self.total[i] = self.fits.iter().map(|f| f[i]).sum();
        }
    }

    fn forest(&self) -> Forest {
        Forest::new(self.trees.clone())
    }
}

pub fn fit_bart_rdd_with(
    ds: &Dataset,
    scfg: &SamplerConfig,
    ccfg: &ConstraintConfig,
    opts: &BartRddOptions,
) -> Result<BartRddFit> {
    scfg.validate()?;
    ccfg.validate()?;
    let n = ds.n();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    let treated = ds.design().treated_count();
    if treated == 0 || treated == n {
        return Err(Error::InvalidData(
            "both treatment arms must be nonempty".into(),
        ));
    }
    let strip = build_strip_index(ds.design(), ccfg)?;
    if opts.constrained {
        check_root_condition(&strip, ccfg)?;
    }
    let sides: Vec<StripSide> = strip.sides(n);
    let units = strip.units();

    let (std_ds, scaling) = standardize(ds);
    let y = std_ds.y();
    let z = ds.z();
    let design = ds.design();
    let c = ds.cutoff();
    let mut cols = vec![design.x().to_vec()];
    cols.extend(design.w().iter().cloned());
    let features = FeatureMatrix::new(cols);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| features.row(i)).collect();
    let eval_rows: Vec<Vec<f64>> = units
        .iter()
        .map(|&i| {
            let mut r = rows[i].clone();
            if opts.cate_at == CateEvaluation::AtCutoff {
                r[0] = c;
            }
            r
        })
        .collect();

    let rdd_policy = RddPolicy::new(*ccfg, c);
    let policy: &dyn SplitPolicy = if opts.constrained {
        &rdd_policy
    } else {
        &Unconstrained
    };
    let strip_tags = opts.constrained.then_some(sides.as_slice());

    let base_params = GrowParams {
        max_depth: scfg.max_depth,
        min_node_size: scfg.min_node_size,
        num_cutpoints: scfg.num_cutpoint_candidates,
        tree_alpha: scfg.tree_prior_alpha,
        tree_beta: scfg.tree_prior_beta,
        leaf_variance: scfg.leaf_variance_mu(),
        sigma2: 1.0,
    };
    let tau_params = GrowParams {
        leaf_variance: scfg.leaf_variance_tau(),
        ..base_params
    };

    let mut mu = ForestState::new(scfg.num_trees_mu, n);
    let mut tau = ForestState::new(scfg.num_trees_tau, n);
    let mut scale = ScaleParams::default();
    let mut sigma2 = [1.0f64, 1.0f64];
    let mut weights = vec![0.0; n];
    let mut scores = vec![0.0; n];

    let mut draws = PosteriorDraws::new(Estimator::BartRdd, units.clone());
    let mut states = Vec::new();

    for sweep in 0..scfg.num_sweeps {
        mu.resync();
        tau.resync();

        // prognostic forest: y - b_z tau~ = a mu + e
        for j in 0..scfg.num_trees_mu {
            for i in 0..n {
                mu.total[i] -= mu.fits[j][i];
                let s2 = sigma2[z[i] as usize];
                let r = y[i] - scale.b(z[i]) * tau.total[i] - scale.a * mu.total[i];
                weights[i] = scale.a * scale.a / s2;
                scores[i] = scale.a * r / s2;
            }
            let mut rng = child_rng(scfg.seed, &[sweep as u64, STREAM_MU, j as u64]);
            let out = grow_from_root(
                TreeData {
                    features: &features,
                    weights: &weights,
                    scores: &scores,
                    strip: strip_tags,
                },
                &base_params,
                policy,
                &mut rng,
                &mut mu.fits[j],
            );
            mu.trees[j] = out.tree;
            mu.invalid[j] = out.invalid_leaves;
            for i in 0..n {
                mu.total[i] += mu.fits[j][i];
            }
        }

        // treatment forest: y - a mu = b_z tau~ + e
        for j in 0..scfg.num_trees_tau {
            for i in 0..n {
                tau.total[i] -= tau.fits[j][i];
                let s2 = sigma2[z[i] as usize];
                let b = scale.b(z[i]);
                let r = y[i] - scale.a * mu.total[i] - b * tau.total[i];
                weights[i] = b * b / s2;
                scores[i] = b * r / s2;
            }
            let mut rng = child_rng(scfg.seed, &[sweep as u64, STREAM_TAU, j as u64]);
            let out = grow_from_root(
                TreeData {
                    features: &features,
                    weights: &weights,
                    scores: &scores,
                    strip: strip_tags,
                },
                &tau_params,
                policy,
                &mut rng,
                &mut tau.fits[j],
            );
            tau.trees[j] = out.tree;
            tau.invalid[j] = out.invalid_leaves;
            for i in 0..n {
                tau.total[i] += tau.fits[j][i];
            }
        }
        mu.resync();
        tau.resync();

        let mut rng = child_rng(scfg.seed, &[sweep as u64, STREAM_SCALE]);
        scale = sample_scale_params(y, z, &mu.total, &tau.total, sigma2, scale, &mut rng);

        let mut rng = child_rng(scfg.seed, &[sweep as u64, STREAM_SIGMA]);
        let mut ss = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for i in 0..n {
            let e = y[i] - scale.a * mu.total[i] - scale.b(z[i]) * tau.total[i];
            ss[z[i] as usize] += e * e;
            counts[z[i] as usize] += 1;
        }
        let (shape, rate) = (scfg.sigma_prior_shape, scfg.sigma_prior_rate);
        if opts.pooled_variance {
            let s = sample_inverse_gamma(
                shape + 0.5 * n as f64,
                rate + 0.5 * (ss[0] + ss[1]),
                &mut rng,
            )?;
            sigma2 = [s, s];
        } else {
            for arm in 0..2 {
                sigma2[arm] = sample_inverse_gamma(
                    shape + 0.5 * counts[arm] as f64,
                    rate + 0.5 * ss[arm],
                    &mut rng,
                )?;
            }
        }

        if sweep < scfg.burn_in {
            continue;
        }

        let contrast = scale.b1 - scale.b0;
        let cate: Vec<f64> = eval_rows
            .iter()
            .map(|r| {
                let t: f64 = tau.trees.iter().map(|tr| tr.predict_row(r)).sum();
                scaling.inverse_effect(contrast * t)
            })
            .collect();
        draws.push_draw(cate);
        let var_scale = scaling.sd * scaling.sd;
        draws.chain.push(ChainRow {
            sweep,
            a: scale.a,
            b0: scale.b0,
            b1: scale.b1,
            sigma2_0: sigma2[0] * var_scale,
            sigma2_1: sigma2[1] * var_scale,
        });

        let diag = &mut draws.diagnostics;
        for forest in [&mu, &tau] {
            for (tree, &bad) in forest.trees.iter().zip(&forest.invalid) {
                diag.invalid_leaves += bad;
                if bad > 0 {
                    diag.flagged_trees += 1;
                    continue;
                }
                if opts.audit {
                    let rep = audit_tree(tree, &rows, &sides, c, ccfg);
                    diag.audited_leaves += rep.cutoff_leaves;
                    diag.unflagged_violations += rep.violations.len();
                }
            }
        }

        if opts.keep_forests {
            states.push(RddDraw {
                mu: mu.forest(),
                tau: tau.forest(),
                scale,
                sigma2,
                fitted: (0..n)
                    .map(|i| scale.a * mu.total[i] + scale.b(z[i]) * tau.total[i])
                    .collect(),
            });
        }
    }

    Ok(BartRddFit {
        draws,
        scaling,
        states,
    })
}

/// Constrained fit with default options.
pub fn fit_bart_rdd(
    ds: &Dataset,
    scfg: &SamplerConfig,
    ccfg: &ConstraintConfig,
) -> Result<BartRddFit> {
    fit_bart_rdd_with(ds, scfg, ccfg, &BartRddOptions::default())
}
