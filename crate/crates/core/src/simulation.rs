//! Synthetic sharp designs and the replicated estimator comparison.

use std::io::Write;

use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{mean, sample_sd, ConstraintConfig, Dataset, Design, SamplerConfig};
use crate::error::{Error, Result};
use crate::inference::summarize;
use crate::models::Estimator;
use crate::parallel::map_indexed;
use crate::rng::{child_rng, derive_seed};

/// Interval level used for every coverage figure.
pub const COVERAGE_LEVEL: f64 = 0.95;

const STREAM_DATA: u64 = 0;
const STREAM_FIT: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub tau_bar: f64,
    pub delta_mu: f64,
    pub delta_tau: f64,
    pub cutoff: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n: 1000,
            tau_bar: 0.2,
            delta_mu: 0.5,
            delta_tau: 0.1,
            cutoff: 0.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        for (name, v) in [
            ("tau_bar", self.tau_bar),
            ("delta_mu", self.delta_mu),
            ("delta_tau", self.delta_tau),
            ("cutoff", self.cutoff),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.delta_mu < 0.0 || self.delta_tau < 0.0 {
            return Err(Error::Config(
                "delta_mu and delta_tau must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Noise-free components of a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    /// `tau(c, w_i)`.
    pub tau_at_cutoff: Vec<f64>,
    /// Mean of `tau(c, w)` over the whole sample.
    pub ate_at_cutoff: f64,
    /// Population value of the effect at the cutoff with `w` at its mean.
    pub ate_analytic: f64,
}

impl SimTruth {
    /// Mean of `tau(c, w_i)` over the given rows.
    pub fn ate_over(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&i| self.tau_at_cutoff[i]).sum::<f64>() / rows.len() as f64
    }
}

fn normal_density(x: f64, m: f64, sd: f64) -> f64 {
    let u = (x - m) / sd;
    (-0.5 * u * u).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

fn prognostic_poly(x: f64) -> f64 {
    3.0 * x.powi(5) - 2.5 * x.powi(4) - 1.5 * x.powi(3) + 2.0 * x * x + 3.0 * x + 2.0
}

fn unit_scale(v: &[f64]) -> f64 {
    let s = sample_sd(v);
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Draws one sample of the benchmark design. Covariates are centered at
/// their sample means and both functions are scaled by their sample
/// standard deviations.
pub fn generate_sim_dataset<R: Rng + ?Sized>(
    cfg: &DgpConfig,
    rng: &mut R,
) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let n = cfg.n;
    let c = cfg.cutoff;
    let beta = Beta::new(2.0, 4.0).expect("valid beta parameters");
    let unif = Uniform::new(-0.1, 0.1).expect("valid uniform bounds");
    let w2_dist = Normal::new(0.0, 0.2).expect("valid normal");
    let w3_dist = Bernoulli::new(0.4).expect("valid probability");
    let noise = Normal::new(0.0, 1.0).expect("valid normal");

    let x: Vec<f64> = (0..n).map(|_| 2.0 * beta.sample(rng) - 0.75).collect();
    let mut w = vec![Vec::with_capacity(n); 4];
    for &xi in &x {
        w[0].push(unif.sample(rng));
        w[1].push(w2_dist.sample(rng));
        w[2].push(f64::from(u8::from(w3_dist.sample(rng))));
        let p = normal_density(xi, c, 0.5).min(1.0);
        w[3].push(f64::from(u8::from(rng.random_bool(p))));
    }
    let w_means: Vec<f64> = w.iter().map(|col| mean(col)).collect();
    let centered_sum: Vec<f64> = (0..n)
        .map(|i| (0..4).map(|p| w[p][i] - w_means[p]).sum())
        .collect();

    let mu0: Vec<f64> = (0..n)
        .map(|i| prognostic_poly(x[i]) + 0.5 * centered_sum[i])
        .collect();
    let tau0: Vec<f64> = (0..n)
        .map(|i| -0.1 * x[i] + 0.25 * centered_sum[i])
        .collect();
    let mu_sd = unit_scale(&mu0);
    let tau_sd = unit_scale(&tau0);
    let mu: Vec<f64> = mu0.iter().map(|v| v / mu_sd * cfg.delta_mu).collect();
    let tau: Vec<f64> = tau0
        .iter()
        .map(|v| cfg.tau_bar + v / tau_sd * cfg.delta_tau)
        .collect();
    let tau_at_cutoff: Vec<f64> = centered_sum
        .iter()
        .map(|s| cfg.tau_bar + (-0.1 * c + 0.25 * s) / tau_sd * cfg.delta_tau)
        .collect();

    let design = Design::new(
        x,
        w,
        vec!["w1".into(), "w2".into(), "w3".into(), "w4".into()],
        c,
    )?;
    let y: Vec<f64> = (0..n)
        .map(|i| mu[i] + tau[i] * f64::from(design.z()[i]) + noise.sample(rng))
        .collect();
    let truth = SimTruth {
        ate_at_cutoff: mean(&tau_at_cutoff),
        ate_analytic: cfg.tau_bar + (-0.1 * c) / tau_sd * cfg.delta_tau,
        mu,
        tau,
        tau_at_cutoff,
    };
    Ok((Dataset::new(y, design)?, truth))
}

/// Effect at the cutoff of the synthetic elicitation outcome.
pub const ELICITATION_ATE: f64 = 0.4;

/// Synthetic outcome on the observed design:
/// `mu = mean_p(w_p) + 1/(1 + exp(-5 x))`, `tau = 0.4 - ln(1 + x)/50`,
/// with `x` measured from the cutoff and standard normal noise.
pub fn generate_elicitation_outcome<R: Rng + ?Sized>(
    design: &Design,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let c = design.cutoff();
    if let Some(bad) = design.x().iter().find(|&&x| x - c <= -1.0) {
        return Err(Error::Domain(format!(
            "running variable {bad} lies at or below cutoff - 1, where ln(1 + x) is undefined"
        )));
    }
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let p = design.p();
    Ok((0..design.n())
        .map(|i| {
            let x = design.x()[i] - c;
            let wbar = if p == 0 {
                0.0
            } else {
                design.w().iter().map(|col| col[i]).sum::<f64>() / p as f64
            };
            let mu = wbar + 1.0 / (1.0 + (-5.0 * x).exp());
            let tau = ELICITATION_ATE - (1.0 + x).ln() / 50.0;
            mu + tau * f64::from(design.z()[i]) + noise.sample(rng)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub row: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub estimator: Estimator,
    /// `None` when the fit succeeded.
    pub error: Option<String>,
    pub ate_estimate: f64,
    pub ate_lower: f64,
    pub ate_upper: f64,
    /// Mean of `tau(c, w_i)` over the strip units.
    pub ate_truth: f64,
    pub ate_truth_analytic: f64,
    pub units: Vec<UnitResult>,
}

impl ReplicationResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationTable {
    pub dgp: DgpConfig,
    pub results: Vec<ReplicationResult>,
}

/// Sampler seed of one (replication, estimator) cell.
pub fn replication_seed(dgp_seed: u64, rep: usize, estimator: Estimator) -> u64 {
    let code = match estimator {
        Estimator::BartRdd => 0,
        Estimator::SBart => 1,
        Estimator::TBart => 2,
    };
    derive_seed(dgp_seed, &[rep as u64, STREAM_FIT, code])
}

fn run_cell(
    ds: &Dataset,
    truth: &SimTruth,
    rep: usize,
    estimator: Estimator,
    scfg: &SamplerConfig,
    ccfg: &ConstraintConfig,
    seed: u64,
) -> ReplicationResult {
    let failed = |msg: String| ReplicationResult {
        rep,
        estimator,
        error: Some(msg),
        ate_estimate: f64::NAN,
        ate_lower: f64::NAN,
        ate_upper: f64::NAN,
        ate_truth: f64::NAN,
        ate_truth_analytic: truth.ate_analytic,
        units: Vec::new(),
    };
    let mut cfg = scfg.clone();
    cfg.seed = seed;
    let outcome = estimator.fit(ds, &cfg, ccfg).and_then(|draws| {
        let ate = summarize(&draws.ate, COVERAGE_LEVEL)?;
        let units = (0..draws.num_units())
            .map(|k| {
                let s = summarize(&draws.unit_draws(k), COVERAGE_LEVEL)?;
                let row = draws.units[k];
                Ok(UnitResult {
                    row,
                    estimate: s.mean,
                    lower: s.lower,
                    upper: s.upper,
                    truth: truth.tau_at_cutoff[row],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ate, units, truth.ate_over(&draws.units)))
    });
    match outcome {
        Ok((ate, units, ate_truth)) => ReplicationResult {
            rep,
            estimator,
            error: None,
            ate_estimate: ate.mean,
            ate_lower: ate.lower,
            ate_upper: ate.upper,
            ate_truth,
            ate_truth_analytic: truth.ate_analytic,
            units,
        },
        Err(e) => failed(e.to_string()),
    }
}

/// Fits every estimator on `reps` independent samples. Sample `r` is drawn
/// from a stream keyed on `(dgp.seed, r)`, and each fit's sampler seed is
/// keyed on `(dgp.seed, r, estimator)`, so the table does not depend on
/// `workers`. `scfg.seed` is ignored. Failed fits are recorded, not raised.
pub fn run_replications(
    dgp: &DgpConfig,
    estimators: &[Estimator],
    reps: usize,
    workers: usize,
    scfg: &SamplerConfig,
    ccfg: &ConstraintConfig,
) -> Result<ReplicationTable> {
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Config("at least one estimator is required".into()));
    }
    dgp.validate()?;
    scfg.validate()?;
    ccfg.validate()?;
    let samples = map_indexed(reps, workers, |r| {
        let mut rng = child_rng(dgp.seed, &[r as u64, STREAM_DATA]);
        generate_sim_dataset(dgp, &mut rng)
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let k = estimators.len();
    let results = map_indexed(reps * k, workers, |t| {
        let (r, e) = (t / k, estimators[t % k]);
        let (ds, truth) = &samples[r];
        run_cell(
            ds,
            truth,
            r,
            e,
            scfg,
            ccfg,
            replication_seed(dgp.seed, r, e),
        )
    });
    Ok(ReplicationTable { dgp: *dgp, results })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Target {
    Ate,
    Cate,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Ate => "ATE",
            Target::Cate => "CATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub estimator: Estimator,
    pub target: Target,
    pub tau_bar: f64,
    pub delta_mu: f64,
    pub delta_tau: f64,
    pub n: usize,
    pub reps: usize,
    pub failed: usize,
    pub rmse: f64,
    pub abs_bias: f64,
    /// Population variance of the estimation error. It equals the variance
    /// of the estimates when the truth is fixed across replications.
    pub variance: f64,
    pub coverage: f64,
    pub interval_size: f64,
}

/// Column order of the metrics CSV.
pub const METRICS_COLUMNS: [&str; 13] = [
    "estimator",
    "target",
    "tau_bar",
    "delta_mu",
    "delta_tau",
    "n",
    "reps",
    "failed",
    "rmse",
    "abs_bias",
    "variance",
    "coverage",
    "interval_size",
];

/// Weighted error moments. With weights summing to one,
/// `rmse^2 = bias^2 + variance` holds by construction.
struct ErrorMoments {
    rmse: f64,
    abs_bias: f64,
    variance: f64,
    coverage: f64,
    interval_size: f64,
}

/// Items are `(weight, error, covered, width)`.
fn weighted_moments(items: &[(f64, f64, f64, f64)]) -> ErrorMoments {
    let bias: f64 = items.iter().map(|&(w, e, ..)| w * e).sum();
    let variance: f64 = items
        .iter()
        .map(|&(w, e, ..)| w * (e - bias) * (e - bias))
        .sum();
    let coverage: f64 = items.iter().map(|&(w, _, cov, ..)| w * cov).sum();
    let interval_size: f64 = items.iter().map(|&(w, _, _, width)| w * width).sum();
    ErrorMoments {
        rmse: (bias * bias + variance).sqrt(),
        abs_bias: bias.abs(),
        variance,
        coverage,
        interval_size,
    }
}

fn covered(lo: f64, hi: f64, truth: f64) -> f64 {
    if lo <= truth && truth <= hi {
        1.0
    } else {
        0.0
    }
}

/// ATE and CATE metrics per estimator, in order of first appearance. CATE
/// errors are averaged over strip units within a replication, then over
/// replications.
pub fn compute_metrics(table: &ReplicationTable) -> Result<Vec<MetricsRow>> {
    let mut order: Vec<Estimator> = Vec::new();
    for r in &table.results {
        if !order.contains(&r.estimator) {
            order.push(r.estimator);
        }
    }
    if order.is_empty() {
        return Err(Error::Config("no replications to summarize".into()));
    }
    let mut rows = Vec::new();
    for est in order {
        let all: Vec<&ReplicationResult> = table
            .results
            .iter()
            .filter(|r| r.estimator == est)
            .collect();
        let ok: Vec<&ReplicationResult> = all.iter().copied().filter(|r| r.ok()).collect();
        if ok.is_empty() {
            return Err(Error::Config(format!(
                "estimator {est} has no successful replication"
            )));
        }
        let reps = ok.len() as f64;
        let ate: Vec<_> = ok
            .iter()
            .map(|r| {
                (
                    1.0 / reps,
                    r.ate_estimate - r.ate_truth,
                    covered(r.ate_lower, r.ate_upper, r.ate_truth),
                    r.ate_upper - r.ate_lower,
                )
            })
            .collect();
        let cate: Vec<_> = ok
            .iter()
            .flat_map(|r| {
                let w = 1.0 / (reps * r.units.len() as f64);
                r.units.iter().map(move |u| {
                    (
                        w,
                        u.estimate - u.truth,
                        covered(u.lower, u.upper, u.truth),
                        u.upper - u.lower,
                    )
                })
            })
            .collect();
        for (target, items) in [(Target::Ate, ate), (Target::Cate, cate)] {
            let m = weighted_moments(&items);
            rows.push(MetricsRow {
                estimator: est,
                target,
                tau_bar: table.dgp.tau_bar,
                delta_mu: table.dgp.delta_mu,
                delta_tau: table.dgp.delta_tau,
                n: table.dgp.n,
                reps: ok.len(),
                failed: all.len() - ok.len(),
                rmse: m.rmse,
                abs_bias: m.abs_bias,
                variance: m.variance,
                coverage: m.coverage,
                interval_size: m.interval_size,
            });
        }
    }
    Ok(rows)
}

/// Writes metrics with a header in `METRICS_COLUMNS` order. Floats use the
/// shortest round-trip representation.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    wtr.write_record(METRICS_COLUMNS).map_err(ser)?;
    for r in rows {
        wtr.write_record([
            r.estimator.name().to_string(),
            r.target.name().to_string(),
            r.tau_bar.to_string(),
            r.delta_mu.to_string(),
            r.delta_tau.to_string(),
            r.n.to_string(),
            r.reps.to_string(),
            r.failed.to_string(),
            r.rmse.to_string(),
            r.abs_bias.to_string(),
            r.variance.to_string(),
            r.coverage.to_string(),
            r.interval_size.to_string(),
        ])
        .map_err(ser)?;
    }
    wtr.flush()
        .map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

/// Column order of the raw replication CSV.
pub const RESULTS_COLUMNS: [&str; 9] = [
    "rep",
    "estimator",
    "status",
    "ate_estimate",
    "ate_lower",
    "ate_upper",
    "ate_truth",
    "ate_truth_analytic",
    "strip_units",
];

/// One line per (replication, estimator).
pub fn write_results_csv<W: Write>(table: &ReplicationTable, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    wtr.write_record(RESULTS_COLUMNS).map_err(ser)?;
    for r in &table.results {
        wtr.write_record([
            r.rep.to_string(),
            r.estimator.name().to_string(),
            r.error
                .clone()
                .map_or_else(|| "ok".to_string(), |e| format!("failed: {e}")),
            r.ate_estimate.to_string(),
            r.ate_lower.to_string(),
            r.ate_upper.to_string(),
            r.ate_truth.to_string(),
            r.ate_truth_analytic.to_string(),
            r.units.len().to_string(),
        ])
        .map_err(ser)?;
    }
    wtr.flush()
        .map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}
