use std::fs;

use plg_core::ergodicity::{drift_report, drift_value};
use plg_core::gibbs::{initial_state, run_chain, ChainConfig, InitMode, KernelOptions};
use plg_core::model::State;
use plg_core::output::{between_within, summarize};
use plg_core::{GroupStructure, Hyperparameters};
use rayon::prelude::*;

use crate::args::{FitArgs, InitArg};
use crate::error::{CliError, Result};
use crate::io::{ingest_csv, write_json, write_samples};
use crate::reports::{ChainSummary, DriftFile, SummaryFile, SCHEMA_VERSION};

fn read_state(path: &std::path::Path) -> Result<State> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let groups = match (&args.groups, args.model.needs_groups()) {
        (Some(sizes), true) => Some(GroupStructure::new(sizes.clone())?),
        (None, false) => None,
        (None, true) => return Err(CliError::Usage(format!("--groups is required for {}", args.model))),
        (Some(_), false) => return Err(CliError::Usage(format!("--groups does not apply to {}", args.model))),
    };
    let data = ingest_csv(&args.data)?;
    let hyper = Hyperparameters::new(args.lambda1, args.lambda2, args.alpha, args.xi);
    hyper.validate(args.model)?;
    if let Some(g) = &groups {
        g.check_dimension(data.p())?;
    }
    let init = match &args.init {
        InitArg::Default => InitMode::Default,
        InitArg::Zero => InitMode::Zero,
        InitArg::File(p) => InitMode::Custom(read_state(p)?),
    };
    let burn_in = args.burnin.unwrap_or(args.iters / 10);
    let base = ChainConfig {
        n_iter: args.iters as usize,
        burn_in: burn_in as usize,
        thin: args.thin as usize,
        seed: args.seed,
        stream_id: 0,
        init,
        kernel: KernelOptions {
            method: args.method.into(),
            mutation: args.mutation,
        },
    };
    base.validate()?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;

    let g = groups.as_ref();
    let chains = (0..args.chains)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let config = ChainConfig {
                stream_id: c,
                ..base.clone()
            };
            let chain = run_chain(args.model, &data, &hyper, g, &config)?;
            write_samples(args.out.join(format!("samples_{c}.csv")), &chain.labels, &chain.draws)?;
            Ok(chain)
        })
        .collect::<Result<Vec<_>>>()?;

    let summaries = chains
        .iter()
        .enumerate()
        .map(|(c, chain)| {
            Ok(ChainSummary {
                chain: c,
                source: Some(format!("samples_{c}.csv")),
                summary: summarize(chain)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let between = if chains.len() >= 2 && chains[0].n_rows() >= 2 {
        let columns: Vec<usize> = (0..chains[0].labels.len()).collect();
        let matrices: Vec<_> = chains.iter().map(|c| c.matrix(&columns)).collect();
        Some(between_within(&chains[0].labels, &matrices)?)
    } else {
        None
    };
    write_json(
        args.out.join("summary.json"),
        &SummaryFile {
            schema_version: SCHEMA_VERSION.into(),
            model: Some(args.model),
            chains: summaries,
            between_within: between,
        },
    )?;

    let report = drift_report(args.model, &data, &hyper, g, args.radius_multiplier)?;
    let start = initial_state(args.model, &data, &hyper, g, &InitMode::Default)?;
    let v = drift_value(&start, &data, &hyper, g)?;
    write_json(
        args.out.join("drift.json"),
        &DriftFile {
            schema_version: SCHEMA_VERSION.into(),
            default_start_in_small_set: v <= report.d,
            default_start_v: v,
            report,
        },
    )?;
    if data.n() < 3 {
        eprintln!("warning: n < 3, the drift rate is not covered by the ergodicity theory");
    }
    println!(
        "wrote {} chain(s) of {} draws to {}",
        chains.len(),
        base.kept_rows(),
        args.out.display()
    );
    Ok(())
}
