//! Dataset representation, configuration records and outcome standardization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running variable, covariates and cutoff of a sharp design. Holds
/// everything about a sample except the outcome, so routines that must not
/// look at `y` (prior elicitation) take a `Design` rather than a `Dataset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    x: Vec<f64>,
    /// Covariates stored column-major: `w[p][i]`.
    w: Vec<Vec<f64>>,
    w_names: Vec<String>,
    cutoff: f64,
    z: Vec<u8>,
}

impl Design {
    pub fn new(x: Vec<f64>, w: Vec<Vec<f64>>, w_names: Vec<String>, cutoff: f64) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::EmptyData("design has no rows".into()));
        }
        if w.len() != w_names.len() {
            return Err(Error::InvalidData(format!(
                "{} covariate columns but {} names",
                w.len(),
                w_names.len()
            )));
        }
        if !cutoff.is_finite() {
            return Err(Error::InvalidData("cutoff must be finite".into()));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite running variable at row {i}"
            )));
        }
        for (col, name) in w.iter().zip(&w_names) {
            if col.len() != n {
                return Err(Error::InvalidData(format!(
                    "covariate '{name}' has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite value in '{name}' at row {i}"
                )));
            }
        }
        let z = x.iter().map(|&xi| u8::from(xi >= cutoff)).collect();
        Ok(Design {
            x,
            w,
            w_names,
            cutoff,
            z,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Number of covariates (excluding the running variable).
    pub fn p(&self) -> usize {
        self.w.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn w_names(&self) -> &[String] {
        &self.w_names
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    /// Covariate row `i` (without the running variable).
    pub fn w_row(&self, i: usize) -> Vec<f64> {
        self.w.iter().map(|col| col[i]).collect()
    }

    /// Column index of a named covariate.
    pub fn w_index(&self, name: &str) -> Option<usize> {
        self.w_names.iter().position(|n| n == name)
    }

    pub fn treated_count(&self) -> usize {
        self.z.iter().filter(|&&z| z == 1).count()
    }
}

/// Outcome plus design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    design: Design,
}

impl Dataset {
    pub fn new(y: Vec<f64>, design: Design) -> Result<Self> {
        if y.len() != design.n() {
            return Err(Error::InvalidData(format!(
                "outcome has {} rows, design has {}",
                y.len(),
                design.n()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite outcome at row {i}")));
        }
        Ok(Dataset { y, design })
    }

    pub fn from_parts(
        y: Vec<f64>,
        x: Vec<f64>,
        w: Vec<Vec<f64>>,
        w_names: Vec<String>,
        cutoff: f64,
    ) -> Result<Self> {
        Dataset::new(y, Design::new(x, w, w_names, cutoff)?)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn x(&self) -> &[f64] {
        self.design.x()
    }

    pub fn z(&self) -> &[u8] {
        self.design.z()
    }

    pub fn cutoff(&self) -> f64 {
        self.design.cutoff()
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        Dataset::new(y, self.design.clone())
    }

    /// Rows selected by `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let d = &self.design;
        Dataset::from_parts(
            idx.iter().map(|&i| self.y[i]).collect(),
            idx.iter().map(|&i| d.x[i]).collect(),
            d.w.iter()
                .map(|col| idx.iter().map(|&i| col[i]).collect())
                .collect(),
            d.w_names.clone(),
            d.cutoff,
        )
    }
}

/// Explicit CSV column mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub outcome: String,
    pub running: String,
    pub covariates: Vec<String>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
}

fn parse_cell(record: &csv::StringRecord, col: usize, row: usize, name: &str) -> Result<f64> {
    let raw = record.get(col).unwrap_or("").trim();
    if raw.is_empty() {
        return Err(Error::Parse {
            row,
            column: name.to_string(),
            message: "blank cell".into(),
        });
    }
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        column: name.to_string(),
        message: format!("'{raw}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: name.to_string(),
            message: format!("'{raw}' is not finite"),
        });
    }
    Ok(v)
}

struct RawColumns {
    y: Option<Vec<f64>>,
    x: Vec<f64>,
    w: Vec<Vec<f64>>,
}

fn read_columns(
    path: &Path,
    outcome: Option<&str>,
    running: &str,
    covariates: &[String],
) -> Result<RawColumns> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::EmptyData(format!(
            "{} has no header",
            path.display()
        )));
    }
    let y_col = outcome
        .map(|name| column_index(&headers, name))
        .transpose()?;
    let x_col = column_index(&headers, running)?;
    let w_cols = covariates
        .iter()
        .map(|name| column_index(&headers, name))
        .collect::<Result<Vec<_>>>()?;

    let mut y = y_col.map(|_| Vec::new());
    let mut x = Vec::new();
    let mut w = vec![Vec::new(); w_cols.len()];
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if let (Some(col), Some(ys), Some(name)) = (y_col, y.as_mut(), outcome) {
            ys.push(parse_cell(&record, col, row, name)?);
        }
        x.push(parse_cell(&record, x_col, row, running)?);
        for ((col, name), dst) in w_cols.iter().zip(covariates).zip(w.iter_mut()) {
            dst.push(parse_cell(&record, *col, row, name)?);
        }
    }
    if x.is_empty() {
        return Err(Error::EmptyData(format!(
            "{} has no data rows",
            path.display()
        )));
    }
    Ok(RawColumns { y, x, w })
}

/// Reads a header-bearing CSV. Rows are numbered from 1 (first data row).
pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema, cutoff: f64) -> Result<Dataset> {
    let raw = read_columns(
        path.as_ref(),
        Some(&schema.outcome),
        &schema.running,
        &schema.covariates,
    )?;
    Dataset::from_parts(
        raw.y.unwrap_or_default(),
        raw.x,
        raw.w,
        schema.covariates.clone(),
        cutoff,
    )
}

/// Reads only the running variable and covariates; no outcome column is
/// needed.
pub fn load_design_csv(
    path: impl AsRef<Path>,
    running: &str,
    covariates: &[String],
    cutoff: f64,
) -> Result<Design> {
    let raw = read_columns(path.as_ref(), None, running, covariates)?;
    Design::new(raw.x, raw.w, covariates.to_vec(), cutoff)
}

/// Writes `y, x, <covariates>` with shortest round-trip float formatting.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = vec![schema.outcome.clone(), schema.running.clone()];
    header.extend(schema.covariates.iter().cloned());
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let d = ds.design();
    for i in 0..ds.n() {
        let mut line = format!("{},{}", ds.y[i], d.x[i]);
        for col in &d.w {
            line.push(',');
            line.push_str(&col[i].to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Affine map between the original and the standardized outcome scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub mean: f64,
    pub sd: f64,
}

impl ScalingRecord {
    pub const IDENTITY: ScalingRecord = ScalingRecord { mean: 0.0, sd: 1.0 };

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }

    /// Differences (treatment effects) only pick up the scale.
    pub fn inverse_effect(&self, v: f64) -> f64 {
        v * self.sd
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation with the n-1 denominator.
pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    let ss: f64 = v.iter().map(|a| (a - m) * (a - m)).sum();
    (ss / (v.len() as f64 - 1.0)).sqrt()
}

/// Centers and scales the outcome; a constant outcome is left untouched
/// with a unit scale.
pub fn standardize_outcome(y: &[f64]) -> (Vec<f64>, ScalingRecord) {
    if y.len() < 2 {
        let m = y.first().copied().unwrap_or(0.0);
        return (y.to_vec(), ScalingRecord { mean: m, sd: 1.0 });
    }
    let m = mean(y);
    let sd = sample_sd(y);
    if !(sd > 0.0) || y.iter().all(|&v| v == y[0]) {
        return (
            y.to_vec(),
            ScalingRecord {
                mean: y[0],
                sd: 1.0,
            },
        );
    }
    let rec = ScalingRecord { mean: m, sd };
    (y.iter().map(|&v| rec.forward(v)).collect(), rec)
}

pub fn standardize(ds: &Dataset) -> (Dataset, ScalingRecord) {
    let (y, rec) = standardize_outcome(&ds.y);
    let out = Dataset {
        y,
        design: ds.design.clone(),
    };
    (out, rec)
}

/// Prior parameters of the identification-strip constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig {
    /// Half-width of the identification strip, in units of the running variable.
    pub h: f64,
    /// Minimum number of strip observations required on each side of the cutoff.
    pub n_omin: usize,
    /// Minimum fraction of a cutoff node's observations lying inside the strip.
    pub alpha: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            h: 0.1,
            n_omin: 10,
            alpha: 0.6,
        }
    }
}

impl ConstraintConfig {
    pub fn new(h: f64, n_omin: usize, alpha: f64) -> Result<Self> {
        let cfg = ConstraintConfig { h, n_omin, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if self.n_omin < 1 {
            return Err(Error::Config("n_omin must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Tuning of the tree samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub num_trees_mu: usize,
    pub num_trees_tau: usize,
    pub num_sweeps: usize,
    pub burn_in: usize,
    pub max_depth: usize,
    pub min_node_size: usize,
    pub num_cutpoint_candidates: usize,
    pub tree_prior_alpha: f64,
    pub tree_prior_beta: f64,
    /// Leaf prior variance of the prognostic (or plain) forest; `None` means
    /// `0.6 / num_trees_mu` on the standardized scale.
    pub leaf_prior_variance_mu: Option<f64>,
    /// Leaf prior variance of the treatment forest; `None` means
    /// `0.3 / num_trees_tau`.
    pub leaf_prior_variance_tau: Option<f64>,
    pub sigma_prior_shape: f64,
    pub sigma_prior_rate: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_trees_mu: 50,
            num_trees_tau: 20,
            num_sweeps: 120,
            burn_in: 20,
            max_depth: 10,
            min_node_size: 5,
            num_cutpoint_candidates: 100,
            tree_prior_alpha: 0.95,
            tree_prior_beta: 1.25,
            leaf_prior_variance_mu: None,
            leaf_prior_variance_tau: None,
            sigma_prior_shape: 3.0,
            sigma_prior_rate: 1.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn leaf_variance_mu(&self) -> f64 {
        self.leaf_prior_variance_mu
            .unwrap_or(0.6 / self.num_trees_mu as f64)
    }

    pub fn leaf_variance_tau(&self) -> f64 {
        self.leaf_prior_variance_tau
            .unwrap_or(0.3 / self.num_trees_tau as f64)
    }

    pub fn retained(&self) -> usize {
        self.num_sweeps - self.burn_in
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_trees_mu", self.num_trees_mu),
            ("num_trees_tau", self.num_trees_tau),
            ("num_sweeps", self.num_sweeps),
            ("max_depth", self.max_depth),
            ("min_node_size", self.min_node_size),
            ("num_cutpoint_candidates", self.num_cutpoint_candidates),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.burn_in >= self.num_sweeps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than num_sweeps ({})",
                self.burn_in, self.num_sweeps
            )));
        }
        if !(self.tree_prior_alpha > 0.0 && self.tree_prior_alpha < 1.0) {
            return Err(Error::Config("tree_prior_alpha must lie in (0, 1)".into()));
        }
        if !(self.tree_prior_beta >= 0.0) {
            return Err(Error::Config("tree_prior_beta must be non-negative".into()));
        }
        for (name, v) in [
            ("leaf_prior_variance_mu", self.leaf_variance_mu()),
            ("leaf_prior_variance_tau", self.leaf_variance_tau()),
            ("sigma_prior_shape", self.sigma_prior_shape),
            ("sigma_prior_rate", self.sigma_prior_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Flat key-value configuration document combining sampler and constraint
/// settings, e.g.
///
/// ```toml
/// num_trees_mu = 50
/// num_sweeps = 120
/// h = 0.1
/// n_omin = 10
/// alpha = 0.6
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub sampler: SamplerConfig,
    #[serde(flatten)]
    pub constraint: ConstraintConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.sampler.validate()?;
        cfg.constraint.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Which side of the identification strip an observation falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripSide {
    Outside,
    Left,
    Right,
}

/// Observations inside `[c - h, c)` (left) and `[c, c + h]` (right).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripIndex {
    pub left_ids: Vec<usize>,
    pub right_ids: Vec<usize>,
}

pub fn strip_side(x: f64, cutoff: f64, h: f64) -> StripSide {
    if x >= cutoff - h && x < cutoff {
        StripSide::Left
    } else if x >= cutoff && x <= cutoff + h {
        StripSide::Right
    } else {
        StripSide::Outside
    }
}

impl StripIndex {
    pub fn len(&self) -> usize {
        self.left_ids.len() + self.right_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All strip members in ascending row order.
    pub fn units(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .left_ids
            .iter()
            .chain(&self.right_ids)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }

    /// Per-observation side tags for a sample of size `n`.
    pub fn sides(&self, n: usize) -> Vec<StripSide> {
        let mut tags = vec![StripSide::Outside; n];
        for &i in &self.left_ids {
            tags[i] = StripSide::Left;
        }
        for &i in &self.right_ids {
            tags[i] = StripSide::Right;
        }
        tags
    }
}

pub fn build_strip_index(design: &Design, cfg: &ConstraintConfig) -> Result<StripIndex> {
    cfg.validate()?;
    let c = design.cutoff();
    let mut left_ids = Vec::new();
    let mut right_ids = Vec::new();
    for (i, &x) in design.x().iter().enumerate() {
        match strip_side(x, c, cfg.h) {
            StripSide::Left => left_ids.push(i),
            StripSide::Right => right_ids.push(i),
            StripSide::Outside => {}
        }
    }
    if left_ids.is_empty() && right_ids.is_empty() {
        return Err(Error::StripEmpty {
            h: cfg.h,
            cutoff: c,
        });
    }
    Ok(StripIndex {
        left_ids,
        right_ids,
    })
}
