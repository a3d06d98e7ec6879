//! Plain BART, the S- and T-learner baselines, and the constrained causal
//! forest.

mod bart;
mod bart_rdd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ConstraintConfig, Dataset, SamplerConfig};
use crate::error::{Error, Result};

pub use bart::{fit_bart, fit_bart_with, fit_s_bart, fit_t_bart, BartFit};
pub use bart_rdd::{
    fit_bart_rdd, fit_bart_rdd_with, sample_scale_params, BartRddFit, BartRddOptions,
    CateEvaluation, RddDraw, ScaleParams,
};

/// Random-stream keys. The plain forest and the prognostic forest share a key
/// so that, with the constraint disabled, both grow from identical streams.
pub(crate) const STREAM_MU: u64 = 0;
pub(crate) const STREAM_TAU: u64 = 1;
pub(crate) const STREAM_SIGMA: u64 = 100;
pub(crate) const STREAM_SCALE: u64 = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "bart-rdd")]
    BartRdd,
    #[serde(rename = "s-bart")]
    SBart,
    #[serde(rename = "t-bart")]
    TBart,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::BartRdd, Estimator::SBart, Estimator::TBart];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::BartRdd => "bart-rdd",
            Estimator::SBart => "s-bart",
            Estimator::TBart => "t-bart",
        }
    }

    /// Fits the estimator with default options. Every estimator averages its
    /// effects over the same identification strip `[c - h, c + h]`.
    pub fn fit(
        &self,
        ds: &Dataset,
        scfg: &SamplerConfig,
        ccfg: &ConstraintConfig,
    ) -> Result<PosteriorDraws> {
        match self {
            Estimator::BartRdd => Ok(fit_bart_rdd(ds, scfg, ccfg)?.draws),
            Estimator::SBart => fit_s_bart(ds, scfg, ccfg),
            Estimator::TBart => fit_t_bart(ds, scfg, ccfg),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bart-rdd" => Ok(Estimator::BartRdd),
            "s-bart" => Ok(Estimator::SBart),
            "t-bart" => Ok(Estimator::TBart),
            other => Err(Error::Config(format!(
                "unknown estimator '{other}' (expected bart-rdd, s-bart or t-bart)"
            ))),
        }
    }
}

/// Scalar parameters of one retained sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainRow {
    pub sweep: usize,
    pub a: f64,
    pub b0: f64,
    pub b1: f64,
    pub sigma2_0: f64,
    pub sigma2_1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Forced-split fallbacks summed over the trees of every retained draw.
    pub invalid_leaves: usize,
    /// Retained (draw, tree) pairs carrying at least one invalid leaf.
    pub flagged_trees: usize,
    /// Leaf-audit violations in trees without an invalid-leaf flag; only
    /// populated when auditing was requested.
    pub unflagged_violations: usize,
    /// Cutoff-covering leaves inspected by the audit.
    pub audited_leaves: usize,
}

/// Retained posterior draws of unit-level effects at the cutoff, on the
/// original outcome scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub estimator: Estimator,
    /// Row indices of the strip units the effects refer to.
    pub units: Vec<usize>,
    /// `cate[s][k]`: effect for unit `units[k]` in retained draw `s`.
    pub cate: Vec<Vec<f64>>,
    /// `ate[s]`: mean of `cate[s]`.
    pub ate: Vec<f64>,
    pub chain: Vec<ChainRow>,
    pub diagnostics: Diagnostics,
}

impl PosteriorDraws {
    pub fn new(estimator: Estimator, units: Vec<usize>) -> Self {
        PosteriorDraws {
            estimator,
            units,
            cate: Vec::new(),
            ate: Vec::new(),
            chain: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn push_draw(&mut self, cate: Vec<f64>) {
        let ate = cate.iter().sum::<f64>() / cate.len() as f64;
        self.cate.push(cate);
        self.ate.push(ate);
    }

    pub fn num_draws(&self) -> usize {
        self.ate.len()
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    /// Posterior mean of the strip-average effect.
    pub fn ate_mean(&self) -> f64 {
        self.ate.iter().sum::<f64>() / self.ate.len() as f64
    }

    /// Posterior mean effect per unit.
    pub fn cate_means(&self) -> Vec<f64> {
        let s = self.num_draws() as f64;
        (0..self.num_units())
            .map(|k| self.cate.iter().map(|row| row[k]).sum::<f64>() / s)
            .collect()
    }

    /// Draws of unit `k`.
    pub fn unit_draws(&self, k: usize) -> Vec<f64> {
        self.cate.iter().map(|row| row[k]).collect()
    }
}
