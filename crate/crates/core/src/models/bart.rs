use super::{Estimator, PosteriorDraws, STREAM_MU, STREAM_SIGMA};
use crate::data::{build_strip_index, standardize, ConstraintConfig, Dataset, SamplerConfig};
use crate::error::{Error, Result};
use crate::forest::{
    grow_from_root, sample_sigma2, FeatureMatrix, Forest, GrowParams, TreeData, TreeNode,
    Unconstrained,
};
use crate::rng::{child_rng, derive_seed};

/// Retained draws of a plain BART fit on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BartFit {
    pub forests: Vec<Forest>,
    pub sigma2: Vec<f64>,
}

/// Backfitting Grow-From-Root sampler for `y = sum_j g_j(features) + e`.
/// `on_draw(forest, sigma2)` is called after every retained sweep.
pub fn fit_bart_with<F>(
    features: &FeatureMatrix,
    y: &[f64],
    cfg: &SamplerConfig,
    mut on_draw: F,
) -> Result<()>
where
    F: FnMut(&Forest, f64),
{
    cfg.validate()?;
    let n = features.n();
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "BART needs at least 2 observations, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::InvalidData(
            "outcome and features differ in length".into(),
        ));
    }
    let m = cfg.num_trees_mu;
    let mut params = GrowParams {
        max_depth: cfg.max_depth,
        min_node_size: cfg.min_node_size,
        num_cutpoints: cfg.num_cutpoint_candidates,
        tree_alpha: cfg.tree_prior_alpha,
        tree_beta: cfg.tree_prior_beta,
        leaf_variance: cfg.leaf_variance_mu(),
        sigma2: 1.0,
    };
    let mut trees = vec![TreeNode::leaf(0.0); m];
    let mut tree_fit = vec![vec![0.0; n]; m];
    let mut total = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let ones = vec![1.0; n];
    let mut sigma2 = 1.0;

    for sweep in 0..cfg.num_sweeps {
        for j in 0..m {
            for i in 0..n {
                total[i] -= tree_fit[j][i];
                resid[i] = y[i] - total[i];
            }
            params.sigma2 = sigma2;
            let mut rng = child_rng(cfg.seed, &[sweep as u64, STREAM_MU, j as u64]);
            let out = grow_from_root(
                TreeData {
                    features,
                    weights: &ones,
                    scores: &resid,
                    strip: None,
                },
                &params,
                &Unconstrained,
                &mut rng,
                &mut tree_fit[j],
            );
            trees[j] = out.tree;
            for i in 0..n {
                total[i] += tree_fit[j][i];
            }
        }
        // resynchronize the running total to the per-tree fits
        for i in 0..n {
            total[i] = tree_fit.iter().map(|f| f[i]).sum();
            resid[i] = y[i] - total[i];
        }
        let mut rng = child_rng(cfg.seed, &[sweep as u64, STREAM_SIGMA]);
        sigma2 = sample_sigma2(
            &resid,
            cfg.sigma_prior_shape,
            cfg.sigma_prior_rate,
            &mut rng,
        )?;
        if sweep >= cfg.burn_in {
            on_draw(&Forest::new(trees.clone()), sigma2);
        }
    }
    Ok(())
}

/// Plain BART on an already standardized outcome, keeping every retained
/// forest.
pub fn fit_bart(features: &FeatureMatrix, y: &[f64], cfg: &SamplerConfig) -> Result<BartFit> {
    let mut fit = BartFit {
        forests: Vec::with_capacity(cfg.retained()),
        sigma2: Vec::with_capacity(cfg.retained()),
    };
    fit_bart_with(features, y, cfg, |f, s2| {
        fit.forests.push(f.clone());
        fit.sigma2.push(s2);
    })?;
    Ok(fit)
}

fn design_columns(ds: &Dataset, rows: Option<&[usize]>) -> Vec<Vec<f64>> {
    let d = ds.design();
    let pick = |col: &[f64]| -> Vec<f64> {
        match rows {
            Some(r) => r.iter().map(|&i| col[i]).collect(),
            None => col.to_vec(),
        }
    };
    let mut cols = vec![pick(d.x())];
    cols.extend(d.w().iter().map(|c| pick(c)));
    cols
}

/// S-learner: one forest over `(x, w, z)`; the unit effect is the contrast of
/// the forest at `(c, w_i, 1)` and `(c, w_i, 0)`.
pub fn fit_s_bart(
    ds: &Dataset,
    scfg: &SamplerConfig,
    ccfg: &ConstraintConfig,
) -> Result<PosteriorDraws> {
    let strip = build_strip_index(ds.design(), ccfg)?;
    let units = strip.units();
    let (std_ds, scale) = standardize(ds);
    let mut cols = design_columns(&std_ds, None);
    cols.push(ds.z().iter().map(|&z| f64::from(z)).collect());
    let features = FeatureMatrix::new(cols);

    let c = ds.cutoff();
    let design = ds.design();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = units
        .iter()
        .map(|&i| {
            let mut treated = vec![c];
            treated.extend(design.w_row(i));
            let mut control = treated.clone();
            treated.push(1.0);
            control.push(0.0);
            (treated, control)
        })
        .collect();

    let mut draws = PosteriorDraws::new(Estimator::SBart, units);
    let mut sweep = scfg.burn_in;
    fit_bart_with(&features, std_ds.y(), scfg, |forest, s2| {
        let cate = rows
            .iter()
            .map(|(t, u)| scale.inverse_effect(forest.predict_row(t) - forest.predict_row(u)))
            .collect();
        draws.push_draw(cate);
        draws.chain.push(super::ChainRow {
            sweep,
            a: f64::NAN,
            b0: f64::NAN,
            b1: f64::NAN,
            sigma2_0: s2 * scale.sd * scale.sd,
            sigma2_1: s2 * scale.sd * scale.sd,
        });
        sweep += 1;
    })?;
    Ok(draws)
}

/// T-learner: independent forests on each arm; unit effect is the difference
/// of the arms' predictions at `(c, w_i)`, paired by sweep.
pub fn fit_t_bart(
    ds: &Dataset,
    scfg: &SamplerConfig,
    ccfg: &ConstraintConfig,
) -> Result<PosteriorDraws> {
    let strip = build_strip_index(ds.design(), ccfg)?;
    let units = strip.units();
    let (std_ds, scale) = standardize(ds);
    let design = ds.design();
    let c = ds.cutoff();
    let arm_rows = |arm: u8| -> Vec<usize> { (0..ds.n()).filter(|&i| ds.z()[i] == arm).collect() };
    let rows_at_cutoff: Vec<Vec<f64>> = units
        .iter()
        .map(|&i| {
            let mut r = vec![c];
            r.extend(design.w_row(i));
            r
        })
        .collect();

    let mut arm_preds: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut arm_sigma: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for arm in [0u8, 1u8] {
        let idx = arm_rows(arm);
        if idx.is_empty() {
            return Err(Error::InvalidData(format!(
                "treatment arm z = {arm} is empty"
            )));
        }
        let features = FeatureMatrix::new(design_columns(&std_ds, Some(&idx)));
        let y: Vec<f64> = idx.iter().map(|&i| std_ds.y()[i]).collect();
        let mut cfg = scfg.clone();
        cfg.seed = derive_seed(scfg.seed, &[u64::from(arm)]);
        let preds = &mut arm_preds[arm as usize];
        let sig = &mut arm_sigma[arm as usize];
        fit_bart_with(&features, &y, &cfg, |forest, s2| {
            preds.push(
                rows_at_cutoff
                    .iter()
                    .map(|r| forest.predict_row(r))
                    .collect(),
            );
            sig.push(s2 * scale.sd * scale.sd);
        })?;
    }

    let mut draws = PosteriorDraws::new(Estimator::TBart, units);
    for (s, (p1, p0)) in arm_preds[1].iter().zip(&arm_preds[0]).enumerate() {
        draws.push_draw(
            p1.iter()
                .zip(p0)
                .map(|(a, b)| scale.inverse_effect(a - b))
                .collect(),
        );
        draws.chain.push(super::ChainRow {
            sweep: scfg.burn_in + s,
            a: f64::NAN,
            b0: f64::NAN,
            b1: f64::NAN,
            sigma2_0: arm_sigma[0][s],
            sigma2_1: arm_sigma[1][s],
        });
    }
    Ok(draws)
}
