use anyhow::{Context, Result};
use bart_rdd::rng::derive_seed;
use bart_rdd::simulation::{
    compute_metrics, run_replications, write_metrics_csv, write_results_csv, DgpConfig, MetricsRow,
    Target, RESULTS_COLUMNS,
};
use serde_json::json;

use crate::args::SimulateArgs;
use crate::manifest::{replay_argv, resolve_seed, OutputDir, RunManifest};
use crate::usage;

/// Metrics that get one pivot table per target.
const PIVOTED: [&str; 5] = ["rmse", "abs_bias", "variance", "coverage", "interval_size"];

fn metric(row: &MetricsRow, name: &str) -> f64 {
    match name {
        "rmse" => row.rmse,
        "abs_bias" => row.abs_bias,
        "variance" => row.variance,
        "coverage" => row.coverage,
        _ => row.interval_size,
    }
}

pub fn cmd_simulate(args: &SimulateArgs, argv: &[String]) -> Result<RunManifest> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if args.tau_bar.is_empty() || args.delta_mu.is_empty() || args.delta_tau.is_empty() {
        return Err(usage("every grid list needs at least one value"));
    }
    let mut estimators = Vec::new();
    for e in &args.estimators {
        if !estimators.contains(e) {
            estimators.push(*e);
        }
    }
    let cfg = args.common.run_config()?;
    let seed = resolve_seed(args.common.seed);
    let workers = args.common.workers();
    let mut out = OutputDir::create(&args.common.out_dir)?;
    let metrics_path = args
        .common
        .out_dir
        .join("metrics.csv")
        .display()
        .to_string();

    let mut cells = Vec::new();
    for &tau_bar in &args.tau_bar {
        for &delta_mu in &args.delta_mu {
            for &delta_tau in &args.delta_tau {
                let dgp = DgpConfig {
                    n: args.n,
                    tau_bar,
                    delta_mu,
                    delta_tau,
                    seed: derive_seed(seed, &[cells.len() as u64]),
                    ..DgpConfig::default()
                };
                dgp.validate()?;
                cells.push(dgp);
            }
        }
    }

    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut raw = Vec::new();
    {
        let mut wtr = csv::Writer::from_writer(&mut raw);
        let mut header = vec!["tau_bar", "delta_mu", "delta_tau"];
        header.extend(RESULTS_COLUMNS);
        wtr.write_record(&header)?;
        for (k, dgp) in cells.iter().enumerate() {
            eprintln!(
                "cell {}/{}: tau_bar={} delta_mu={} delta_tau={}",
                k + 1,
                cells.len(),
                dgp.tau_bar,
                dgp.delta_mu,
                dgp.delta_tau
            );
            let table = run_replications(
                dgp,
                &estimators,
                args.reps,
                workers,
                &cfg.sampler,
                &cfg.constraint,
            )?;
            metrics.extend(compute_metrics(&table)?);
            let mut buf = Vec::new();
            write_results_csv(&table, &mut buf)?;
            let mut rdr = csv::Reader::from_reader(buf.as_slice());
            for rec in rdr.records() {
                let rec = rec.context("re-reading replication rows")?;
                let prefix = [dgp.tau_bar, dgp.delta_mu, dgp.delta_tau].map(|v| v.to_string());
                wtr.write_record(prefix.iter().map(String::as_str).chain(rec.iter()))?;
            }
        }
        wtr.flush()?;
    }

    let mut metrics_bytes = Vec::new();
    write_metrics_csv(&metrics, &mut metrics_bytes)?;
    out.write("metrics.csv", &metrics_bytes)?;
    out.write("replications.csv", &raw)?;

    for target in [Target::Ate, Target::Cate] {
        for name in PIVOTED {
            let mut buf = Vec::new();
            {
                let mut wtr = csv::Writer::from_writer(&mut buf);
                let mut header = vec!["tau_bar", "delta_mu", "delta_tau"];
                header.extend(estimators.iter().map(|e| e.name()));
                wtr.write_record(&header)?;
                for dgp in &cells {
                    let mut rec = vec![
                        dgp.tau_bar.to_string(),
                        dgp.delta_mu.to_string(),
                        dgp.delta_tau.to_string(),
                    ];
                    for e in &estimators {
                        let v = metrics
                            .iter()
                            .find(|m| {
                                m.estimator == *e
                                    && m.target == target
                                    && m.tau_bar == dgp.tau_bar
                                    && m.delta_mu == dgp.delta_mu
                                    && m.delta_tau == dgp.delta_tau
                            })
                            .map_or(f64::NAN, |m| metric(m, name));
                        rec.push(v.to_string());
                    }
                    wtr.write_record(&rec)?;
                }
                wtr.flush()?;
            }
            let file = format!("table_{name}_{}.csv", target.name().to_lowercase());
            out.write(&file, &buf)?;
        }
    }

    let failed: usize = metrics
        .iter()
        .filter(|m| m.target == Target::Ate)
        .map(|m| m.failed)
        .sum();
    if failed > 0 {
        eprintln!("warning: {failed} fits failed; see replications.csv");
    }
    let config = json!({
        "sampler": cfg.sampler,
        "constraint": cfg.constraint,
        "estimators": estimators,
        "reps": args.reps,
        "cells": cells,
    });
    let manifest = out.finish("simulate", replay_argv(argv, seed), config, Some(seed))?;
    println!(
        "{} metric rows for {} cells written to {}",
        metrics.len(),
        cells.len(),
        metrics_path
    );
    Ok(manifest)
}
