use anyhow::{Context, Result};
use bart_rdd::elicitation::{elicit, recommend, ElicitationGrid};
use bart_rdd::load_design_csv;
use serde_json::json;

use crate::args::ElicitArgs;
use crate::fit::resolve_input;
use crate::manifest::{replay_argv, resolve_seed, OutputDir, RunManifest};
use crate::usage;

pub fn cmd_elicit(args: &ElicitArgs, argv: &[String]) -> Result<RunManifest> {
    if args.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let mut cfg = args.common.run_config()?;
    let seed = resolve_seed(args.common.seed);
    cfg.sampler.seed = seed;
    let mut out = OutputDir::create(&args.common.out_dir)?;
    let input = resolve_input(&args.data, &mut out)?;
    let design = load_design_csv(
        &input.path,
        &input.schema.running,
        &input.schema.covariates,
        args.data.cutoff,
    )
    .with_context(|| format!("loading {}", input.path.display()))?;

    let grid = ElicitationGrid {
        h_values: args.h.clone(),
        n_omin_values: args.n_omin.clone(),
        alpha_values: args.alpha.clone(),
        samples: args.samples,
    };
    let table = elicit(&design, &grid, &cfg.sampler, args.common.workers())?;
    let rec = recommend(&table, args.spread_multiple)?;

    let mut buf = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record([
            "rank",
            "h",
            "n_omin",
            "alpha",
            "feasible",
            "rmse",
            "samples_ok",
            "note",
        ])?;
        for (i, c) in table.cells.iter().enumerate() {
            wtr.write_record([
                c.rmse.map_or_else(String::new, |_| (i + 1).to_string()),
                c.h.to_string(),
                c.n_omin.to_string(),
                c.alpha.to_string(),
                c.feasible.to_string(),
                c.rmse.map_or_else(String::new, |r| r.to_string()),
                c.samples_ok.to_string(),
                c.note.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
    }
    out.write("elicitation.csv", &buf)?;
    out.write_json("recommendation.json", &rec)?;

    let config = json!({
        "sampler": cfg.sampler,
        "grid": grid,
        "spread_multiple": args.spread_multiple,
        "data": input.path,
        "running": input.schema.running,
        "covariates": input.schema.covariates,
        "cutoff": args.data.cutoff,
    });
    let manifest = out.finish("elicit", replay_argv(argv, seed), config, Some(seed))?;
    let c = &rec.chosen;
    println!(
        "recommended h={} n_omin={} alpha={} (rmse {:.4})",
        c.h,
        c.n_omin,
        c.alpha,
        c.rmse.unwrap_or(f64::NAN)
    );
    for s in rec.strata.iter().filter(|s| s.high_sensitivity) {
        println!(
            "h={} is sensitive to n_omin and alpha (spread {:.4})",
            s.h, s.spread
        );
    }
    Ok(manifest)
}
