use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bart_rdd::inference::{fit_summary_tree, subgroup_contrast, summarize, SummaryTreeConfig};
use bart_rdd::{Estimator, PosteriorDraws};
use serde_json::json;

use crate::args::SummarizeArgs;
use crate::fit::open_csv;
use crate::manifest::{OutputDir, RunManifest};
use crate::predicate::PredicateSet;
use crate::usage;

/// Trailing interval columns of `units.csv`.
const UNIT_STATS: usize = 4;

/// `units.csv` held column-major.
struct UnitTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl UnitTable {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if names.len() < 2 + UNIT_STATS || names[0] != "row" || names[1] != "x" {
            bail!(
                "{} does not look like fit output (unexpected header)",
                path.display()
            );
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.with_context(|| format!("{} line {}", path.display(), i + 2))?;
            for (col, cell) in columns.iter_mut().zip(rec.iter()) {
                col.push(cell.parse::<f64>().with_context(|| {
                    format!(
                        "{} line {}: '{cell}' is not a number",
                        path.display(),
                        i + 2
                    )
                })?);
            }
        }
        Ok(UnitTable { names, columns })
    }

    fn column(&self, name: &str) -> &[f64] {
        let k = self
            .names
            .iter()
            .position(|n| n == name)
            .expect("known column");
        &self.columns[k]
    }

    fn covariate_range(&self) -> std::ops::Range<usize> {
        2..self.names.len() - UNIT_STATS
    }
}

fn read_draws(path: &Path, estimator: Estimator, rows: &[f64]) -> Result<PosteriorDraws> {
    let mut rdr = open_csv(path)?;
    let header = rdr.headers()?.clone();
    let units: Vec<usize> = header
        .iter()
        .skip(2)
        .map(|h| {
            h.strip_prefix("row_")
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| anyhow!("{}: bad column '{h}'", path.display()))
        })
        .collect::<Result<_>>()?;
    if units.len() != rows.len() || units.iter().zip(rows).any(|(&u, &r)| u as f64 != r) {
        bail!("{} and units.csv list different units", path.display());
    }
    let mut draws = PosteriorDraws::new(estimator, units);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{} line {}", path.display(), i + 2))?;
        let cate = rec
            .iter()
            .skip(2)
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {}", path.display(), i + 2))?;
        draws.push_draw(cate);
    }
    Ok(draws)
}

pub fn cmd_summarize(args: &SummarizeArgs, argv: &[String]) -> Result<RunManifest> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(usage(format!(
            "--level must lie in (0, 1), got {}",
            args.level
        )));
    }
    let fit_dir = &args.fit_dir;
    let units = UnitTable::read(&fit_dir.join("units.csv"))?;
    let summary_path = fit_dir.join("ate_summary.json");
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&summary_path)
            .with_context(|| format!("reading {}", summary_path.display()))?,
    )?;
    let estimator: Estimator = serde_json::from_value(summary["estimator"].clone())
        .with_context(|| format!("{} has no estimator", summary_path.display()))?;
    let draws = read_draws(
        &fit_dir.join("cate_draws.csv"),
        estimator,
        units.column("row"),
    )?;

    // resolve the groups before any output is written
    let groups = match &args.group {
        Some(group) => {
            let a_set = PredicateSet::parse(group)?;
            let a = a_set.select(&units.names, &units.columns)?;
            let (b, versus) = match &args.versus {
                Some(v) => {
                    let b_set = PredicateSet::parse(v)?;
                    (
                        b_set.select(&units.names, &units.columns)?,
                        b_set.to_string(),
                    )
                }
                None => {
                    let mut in_a = vec![false; draws.num_units()];
                    a.iter().for_each(|&u| in_a[u] = true);
                    let rest = (0..draws.num_units()).filter(|&u| !in_a[u]).collect();
                    (rest, "complement".to_string())
                }
            };
            if a.is_empty() {
                bail!("group '{a_set}' selects no strip units");
            }
            if b.is_empty() {
                bail!("comparison group '{versus}' selects no strip units");
            }
            Some((a_set.to_string(), a, versus, b))
        }
        None => None,
    };

    let out_dir = args.out_dir.as_deref().unwrap_or(fit_dir);
    let mut out = OutputDir::create(out_dir)?;

    let tcfg = SummaryTreeConfig {
        max_depth: args.max_depth,
        min_leaf: args.min_leaf,
    };
    let range = units.covariate_range();
    let tree = fit_summary_tree(
        units.column("estimate"),
        &units.columns[range.clone()],
        &units.names[range],
        &tcfg,
    )?;
    let rendered = tree.render();
    out.write("summary_tree.txt", rendered.as_bytes())?;
    out.write_json("summary_tree.json", &tree)?;
    print!("{rendered}");

    if let Some((group, a, versus, b)) = &groups {
        let contrast = subgroup_contrast(&draws, a, b)?;
        let diff = summarize(&contrast.differences, args.level)?;
        let report = json!({
            "group": group,
            "versus": versus,
            "size_group": contrast.size_a,
            "size_versus": contrast.size_b,
            "prob_positive": contrast.prob_positive,
            "difference": diff,
        });
        let mut buf = Vec::new();
        {
            let mut wtr = csv::Writer::from_writer(&mut buf);
            wtr.write_record(["draw", "difference"])?;
            for (s, d) in contrast.differences.iter().enumerate() {
                wtr.write_record([s.to_string(), d.to_string()])?;
            }
            wtr.flush()?;
        }
        out.write("contrast_draws.csv", &buf)?;
        out.write_json("contrast.json", &report)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
    }

    let config = json!({
        "fit_dir": fit_dir,
        "tree": tcfg,
        "group": args.group,
        "versus": args.versus,
        "level": args.level,
    });
    out.finish("summarize", argv.to_vec(), config, None)
}
