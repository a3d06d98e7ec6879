//! Grid search over the constraint parameters on synthetic outcomes built
//! from the observed running variable and covariates.
//!
//! Only the design `(x, w, c)` is read; the observed outcome never enters.

use serde::{Deserialize, Serialize};

use crate::constraint::check_root_condition;
use crate::data::{build_strip_index, ConstraintConfig, Dataset, Design, SamplerConfig};
use crate::error::{Error, Result};
use crate::models::fit_bart_rdd;
use crate::parallel::map_indexed;
use crate::rng::{child_rng, derive_seed};
use crate::simulation::{generate_elicitation_outcome, ELICITATION_ATE};

const STREAM_OUTCOME: u64 = 0;
const STREAM_FIT: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationGrid {
    pub h_values: Vec<f64>,
    pub n_omin_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    /// Synthetic samples per cell.
    pub samples: usize,
}

impl Default for ElicitationGrid {
    fn default() -> Self {
        ElicitationGrid {
            h_values: vec![0.05, 0.1, 0.15, 0.2],
            n_omin_values: vec![1, 5, 10],
            alpha_values: vec![0.6, 0.75, 0.9],
            samples: 20,
        }
    }
}

impl ElicitationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.h_values.is_empty() || self.n_omin_values.is_empty() || self.alpha_values.is_empty()
        {
            return Err(Error::Config(
                "elicitation grid lists must be nonempty".into(),
            ));
        }
        if self.samples == 0 {
            return Err(Error::Config(
                "at least one synthetic sample is required".into(),
            ));
        }
        for cfg in self.cells() {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Cells in h-major, then n_omin, then alpha order.
    pub fn cells(&self) -> Vec<ConstraintConfig> {
        let mut out = Vec::new();
        for &h in &self.h_values {
            for &n_omin in &self.n_omin_values {
                for &alpha in &self.alpha_values {
                    out.push(ConstraintConfig { h, n_omin, alpha });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationCell {
    pub h: f64,
    pub n_omin: usize,
    pub alpha: f64,
    pub feasible: bool,
    /// ATE RMSE against the synthetic truth over the successful samples.
    pub rmse: Option<f64>,
    pub samples_ok: usize,
    pub note: Option<String>,
}

impl ElicitationCell {
    pub fn config(&self) -> ConstraintConfig {
        ConstraintConfig {
            h: self.h,
            n_omin: self.n_omin,
            alpha: self.alpha,
        }
    }
}

/// Scored cells by ascending RMSE (grid order breaks ties), followed by
/// infeasible cells in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationTable {
    pub cells: Vec<ElicitationCell>,
}

impl ElicitationTable {
    pub fn scored(&self) -> impl Iterator<Item = &ElicitationCell> {
        self.cells.iter().filter(|c| c.rmse.is_some())
    }
}

/// Whether fitting can start for this cell: the strip is nonempty and holds
/// at least `n_omin` observations on each side.
pub fn cell_feasibility(design: &Design, cfg: &ConstraintConfig) -> Result<()> {
    let strip = build_strip_index(design, cfg)?;
    check_root_condition(&strip, cfg)
}

/// Synthetic outcome `s` and the sampler seed used for it. Both depend on
/// the sample index only, so every cell sees the same outcomes.
fn synthetic_sample(design: &Design, seed: u64, s: usize) -> Result<(Dataset, u64)> {
    let mut rng = child_rng(seed, &[STREAM_OUTCOME, s as u64]);
    let y = generate_elicitation_outcome(design, &mut rng)?;
    Ok((
        Dataset::new(y, design.clone())?,
        derive_seed(seed, &[STREAM_FIT, s as u64]),
    ))
}

/// Scores every grid cell. Fits are spread over `workers` threads; the
/// table depends only on the inputs and `scfg.seed`.
pub fn elicit(
    design: &Design,
    grid: &ElicitationGrid,
    scfg: &SamplerConfig,
    workers: usize,
) -> Result<ElicitationTable> {
    grid.validate()?;
    scfg.validate()?;
    let cells = grid.cells();
    let samples: Vec<(Dataset, u64)> = (0..grid.samples)
        .map(|s| synthetic_sample(design, scfg.seed, s))
        .collect::<Result<_>>()?;

    let feasibility: Vec<Option<String>> = cells
        .iter()
        .map(|c| cell_feasibility(design, c).err().map(|e| e.to_string()))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .filter(|&k| feasibility[k].is_none())
        .flat_map(|k| (0..grid.samples).map(move |s| (k, s)))
        .collect();
    let errors = map_indexed(tasks.len(), workers, |t| {
        let (k, s) = tasks[t];
        let (ds, seed) = &samples[s];
        let mut cfg = scfg.clone();
        cfg.seed = *seed;
        fit_bart_rdd(ds, &cfg, &cells[k])
            .map(|fit| fit.draws.ate_mean() - ELICITATION_ATE)
            .map_err(|e| e.to_string())
    });

    let mut per_cell: Vec<Vec<std::result::Result<f64, String>>> = vec![Vec::new(); cells.len()];
    for ((k, _), e) in tasks.iter().zip(errors) {
        per_cell[*k].push(e);
    }
    let mut out: Vec<ElicitationCell> = cells
        .iter()
        .zip(per_cell)
        .zip(feasibility)
        .map(|((cfg, results), infeasible)| {
            let ok: Vec<f64> = results
                .iter()
                .filter_map(|r| r.as_ref().ok().copied())
                .collect();
            let first_err = results.iter().find_map(|r| r.as_ref().err().cloned());
            let rmse = (!ok.is_empty())
                .then(|| (ok.iter().map(|e| e * e).sum::<f64>() / ok.len() as f64).sqrt());
            ElicitationCell {
                h: cfg.h,
                n_omin: cfg.n_omin,
                alpha: cfg.alpha,
                feasible: infeasible.is_none(),
                rmse,
                samples_ok: ok.len(),
                note: infeasible.or(first_err),
            }
        })
        .collect();
    if out.iter().all(|c| c.rmse.is_none()) {
        return Err(Error::Config(
            "every elicitation cell is infeasible: the identification strip holds too few \
             observations on one side of the cutoff; try larger h values or smaller n_omin"
                .into(),
        ));
    }
    // stable sort keeps grid order among ties and among unscored cells
    out.sort_by(|a, b| match (a.rmse, b.rmse) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(ElicitationTable { cells: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSpread {
    pub h: f64,
    /// Max minus min RMSE over the scored cells with this `h`.
    pub spread: f64,
    pub min_rmse: f64,
    pub max_rmse: f64,
    pub cells: usize,
    pub high_sensitivity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub chosen: ElicitationCell,
    pub spread_multiple: f64,
    /// Strata in order of first appearance in the table.
    pub strata: Vec<StratumSpread>,
}

impl Recommendation {
    pub fn stratum(&self, h: f64) -> Option<&StratumSpread> {
        self.strata.iter().find(|s| s.h == h)
    }
}

/// Lowest-RMSE cell plus a per-`h` sensitivity report. A stratum is flagged
/// when its spread exceeds `spread_multiple` times the spread of the chosen
/// cell's stratum.
pub fn recommend(table: &ElicitationTable, spread_multiple: f64) -> Result<Recommendation> {
    let chosen = table
        .cells
        .iter()
        .filter(|c| c.rmse.is_some())
        .min_by(|a, b| a.rmse.unwrap().total_cmp(&b.rmse.unwrap()))
        .cloned()
        .ok_or_else(|| Error::Config("no scored elicitation cell to recommend".into()))?;
    let mut strata: Vec<StratumSpread> = Vec::new();
    for cell in table.scored() {
        let r = cell.rmse.unwrap();
        match strata.iter_mut().find(|s| s.h == cell.h) {
            Some(s) => {
                s.min_rmse = s.min_rmse.min(r);
                s.max_rmse = s.max_rmse.max(r);
                s.cells += 1;
            }
            None => strata.push(StratumSpread {
                h: cell.h,
                spread: 0.0,
                min_rmse: r,
                max_rmse: r,
                cells: 1,
                high_sensitivity: false,
            }),
        }
    }
    for s in &mut strata {
        s.spread = s.max_rmse - s.min_rmse;
    }
    let reference = strata
        .iter()
        .find(|s| s.h == chosen.h)
        .map_or(0.0, |s| s.spread);
    for s in &mut strata {
        s.high_sensitivity = s.spread > spread_multiple * reference;
    }
    Ok(Recommendation {
        chosen,
        spread_multiple,
        strata,
    })
}
