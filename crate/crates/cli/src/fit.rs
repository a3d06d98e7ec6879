use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use bart_rdd::inference::{summarize_ate, summarize_units};
use bart_rdd::models::fit_bart_rdd_with;
use bart_rdd::{load_csv, BartRddOptions, ColumnSchema, Estimator, PosteriorDraws};
use serde_json::json;

use crate::args::{DataArgs, FitArgs};
use crate::manifest::{replay_argv, resolve_seed, OutputDir, RunManifest};
use crate::usage;

const DEMO_CSV: &str = include_str!("../data/demo.csv");
const DEMO_FILE: &str = "demo_data.csv";

/// Resolved input file and column mapping.
pub(crate) struct Input {
    pub path: PathBuf,
    pub schema: ColumnSchema,
}

/// Locates the data (copying the bundled sample when `--demo` is given) and
/// fills in the covariate list from the header when it was not spelled out.
pub(crate) fn resolve_input(data: &DataArgs, out: &mut OutputDir) -> Result<Input> {
    let path = match (&data.data, data.demo) {
        (Some(p), false) => p.clone(),
        (None, true) => out.write(DEMO_FILE, DEMO_CSV.as_bytes())?,
        _ => return Err(usage("pass either --data <csv> or --demo")),
    };
    let covariates = match &data.covariates {
        Some(c) => c.clone(),
        None => {
            let mut reader = csv::Reader::from_path(&path)
                .with_context(|| format!("opening {}", path.display()))?;
            reader
                .headers()
                .with_context(|| format!("reading header of {}", path.display()))?
                .iter()
                .map(|h| h.trim().to_string())
                .filter(|h| *h != data.outcome && *h != data.running)
                .collect()
        }
    };
    Ok(Input {
        path,
        schema: ColumnSchema {
            outcome: data.outcome.clone(),
            running: data.running.clone(),
            covariates,
        },
    })
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        fill(&mut wtr)?;
        wtr.flush()?;
    }
    Ok(buf)
}

fn draws_csv(draws: &PosteriorDraws) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        let mut header = vec!["draw".to_string(), "ate".to_string()];
        header.extend(draws.units.iter().map(|r| format!("row_{r}")));
        w.write_record(&header)?;
        for (s, row) in draws.cate.iter().enumerate() {
            let mut rec = vec![s.to_string(), draws.ate[s].to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

fn chain_csv(draws: &PosteriorDraws) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["sweep", "a", "b0", "b1", "sigma2_0", "sigma2_1"])?;
        for c in &draws.chain {
            w.write_record([
                c.sweep.to_string(),
                c.a.to_string(),
                c.b0.to_string(),
                c.b1.to_string(),
                c.sigma2_0.to_string(),
                c.sigma2_1.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn cmd_fit(args: &FitArgs, argv: &[String]) -> Result<RunManifest> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(usage(format!(
            "--level must lie in (0, 1), got {}",
            args.level
        )));
    }
    let mut cfg = args.common.run_config()?;
    let seed = resolve_seed(args.common.seed);
    cfg.sampler.seed = seed;
    let mut out = OutputDir::create(&args.common.out_dir)?;
    let input = resolve_input(&args.data, &mut out)?;
    let ds = load_csv(&input.path, &input.schema, args.data.cutoff)
        .with_context(|| format!("loading {}", input.path.display()))?;

    let mut forests = None;
    let draws = match args.estimator {
        Estimator::BartRdd => {
            let opts = BartRddOptions {
                audit: args.audit,
                keep_forests: true,
                ..BartRddOptions::default()
            };
            let fit = fit_bart_rdd_with(&ds, &cfg.sampler, &cfg.constraint, &opts)?;
            if let Some(last) = fit.states.last() {
                forests = Some(json!({
                    "mu": last.mu.to_serialized(),
                    "tau": last.tau.to_serialized(),
                    "a": last.scale.a,
                    "b0": last.scale.b0,
                    "b1": last.scale.b1,
                    "sigma2": last.sigma2,
                    "scaling": fit.scaling,
                }));
            }
            fit.draws
        }
        other => other.fit(&ds, &cfg.sampler, &cfg.constraint)?,
    };

    let ate = summarize_ate(&draws, args.level)?;
    let units = summarize_units(&draws, args.level)?;
    let design = ds.design();

    out.write("cate_draws.csv", &draws_csv(&draws)?)?;
    let units_csv = csv_bytes(|w| {
        let mut header = vec!["row".to_string(), "x".to_string()];
        header.extend(input.schema.covariates.iter().cloned());
        header.extend(["estimate", "sd", "lower", "upper"].map(String::from));
        w.write_record(&header)?;
        for (&row, s) in draws.units.iter().zip(&units) {
            let mut rec = vec![row.to_string(), design.x()[row].to_string()];
            rec.extend(design.w_row(row).iter().map(f64::to_string));
            rec.extend([s.mean, s.sd, s.lower, s.upper].map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        Ok(())
    })?;
    out.write("units.csv", &units_csv)?;
    out.write("chain.csv", &chain_csv(&draws)?)?;
    let summary = json!({
        "estimator": draws.estimator,
        "strip_units": draws.num_units(),
        "draws": draws.num_draws(),
        "ate": ate,
    });
    out.write_json("ate_summary.json", &summary)?;
    out.write_json("diagnostics.json", &draws.diagnostics)?;
    if let Some(f) = &forests {
        out.write_json("forests.json", f)?;
    }

    let config = json!({
        "sampler": cfg.sampler,
        "constraint": cfg.constraint,
        "estimator": args.estimator,
        "level": args.level,
        "audit": args.audit,
        "data": input.path,
        "schema": input.schema,
        "cutoff": args.data.cutoff,
    });
    let manifest = out.finish("fit", replay_argv(argv, seed), config, Some(seed))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if draws.diagnostics.flagged_trees > 0 {
        eprintln!(
            "warning: {} retained trees fell back to a forced split (see diagnostics.json)",
            draws.diagnostics.flagged_trees
        );
    }
    Ok(manifest)
}

/// Opens a CSV for reading with a readable error.
pub(crate) fn open_csv(path: &std::path::Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))
}
