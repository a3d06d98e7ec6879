//! Conjugate Gaussian leaf model and variance updates.
//!
//! Observations in a node are modelled as `r_i ~ N(mu, sigma2 / w_i)` with
//! leaf prior `mu ~ N(0, tau_leaf)`. Plain regression uses unit weights; the
//! causal forest folds its scale parameters and arm-specific variances into
//! the weights, so one set of formulas serves every forest.

use std::ops::{Add, AddAssign, Sub};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};

/// Sufficient statistic of a node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SuffStat {
    pub n: usize,
    /// Sum of observation weights (equals `n` for unit weights).
    pub sum_w: f64,
    /// Weighted sum of partial residuals, `sum_i w_i r_i`.
    pub sum_r: f64,
}

impl SuffStat {
    pub fn from_residuals(r: &[f64]) -> Self {
        SuffStat {
            n: r.len(),
            sum_w: r.len() as f64,
            sum_r: r.iter().sum(),
        }
    }

    pub fn push(&mut self, weight: f64, weighted_residual: f64) {
        self.n += 1;
        self.sum_w += weight;
        self.sum_r += weighted_residual;
    }
}

impl Add for SuffStat {
    type Output = SuffStat;
    fn add(self, o: SuffStat) -> SuffStat {
        SuffStat {
            n: self.n + o.n,
            sum_w: self.sum_w + o.sum_w,
            sum_r: self.sum_r + o.sum_r,
        }
    }
}

impl AddAssign for SuffStat {
    fn add_assign(&mut self, o: SuffStat) {
        *self = *self + o;
    }
}

impl Sub for SuffStat {
    type Output = SuffStat;
    fn sub(self, o: SuffStat) -> SuffStat {
        SuffStat {
            n: self.n - o.n,
            sum_w: self.sum_w - o.sum_w,
            sum_r: self.sum_r - o.sum_r,
        }
    }
}

fn check_variances(sigma2: f64, tau_leaf: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    if !(tau_leaf > 0.0 && tau_leaf.is_finite()) {
        return Err(Error::Domain(format!(
            "leaf prior variance must be positive, got {tau_leaf}"
        )));
    }
    Ok(())
}

/// Log integrated likelihood of a node, dropping the terms shared by every
/// split candidate of the same parent:
/// `1/2 log(s2 / (s2 + t n)) + t S^2 / (2 s2 (s2 + t n))`.
#[inline]
pub fn log_marginal_likelihood_unchecked(s: &SuffStat, sigma2: f64, tau_leaf: f64) -> f64 {
    if s.n == 0 {
        return 0.0;
    }
    let precision = s.sum_w / sigma2;
    let score = s.sum_r / sigma2;
    let denom = 1.0 + tau_leaf * precision;
    -0.5 * denom.ln() + 0.5 * tau_leaf * score * score / denom
}

pub fn log_marginal_likelihood(s: &SuffStat, sigma2: f64, tau_leaf: f64) -> Result<f64> {
    check_variances(sigma2, tau_leaf)?;
    Ok(log_marginal_likelihood_unchecked(s, sigma2, tau_leaf))
}

/// Mean and variance of the conjugate leaf posterior.
pub fn leaf_posterior(s: &SuffStat, sigma2: f64, tau_leaf: f64) -> (f64, f64) {
    let precision = s.sum_w / sigma2;
    let score = s.sum_r / sigma2;
    let denom = 1.0 + tau_leaf * precision;
    (tau_leaf * score / denom, tau_leaf / denom)
}

pub fn sample_leaf<R: Rng + ?Sized>(
    s: &SuffStat,
    sigma2: f64,
    tau_leaf: f64,
    rng: &mut R,
) -> Result<f64> {
    check_variances(sigma2, tau_leaf)?;
    Ok(sample_leaf_unchecked(s, sigma2, tau_leaf, rng))
}

#[inline]
pub(crate) fn sample_leaf_unchecked<R: Rng + ?Sized>(
    s: &SuffStat,
    sigma2: f64,
    tau_leaf: f64,
    rng: &mut R,
) -> f64 {
    let (m, v) = leaf_posterior(s, sigma2, tau_leaf);
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    m + v.sqrt() * z
}

/// Draw from `InverseGamma(shape + n/2, rate + sum(r^2)/2)`.
pub fn sample_sigma2<R: Rng + ?Sized>(
    residuals: &[f64],
    prior_shape: f64,
    prior_rate: f64,
    rng: &mut R,
) -> Result<f64> {
    if let Some(r) = residuals.iter().find(|r| !r.is_finite()) {
        return Err(Error::Domain(format!("non-finite residual {r}")));
    }
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    sample_inverse_gamma(
        prior_shape + 0.5 * residuals.len() as f64,
        prior_rate + 0.5 * ss,
        rng,
    )
}

pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Domain(format!("inverse gamma({shape}, {rate}): {e}")))?;
    Ok(1.0 / g.sample(rng))
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    Normal::new(mean, sd).map_or(mean, |d| d.sample(rng))
}
