use plg_core::output::{between_within, summarize_matrix};

use crate::args::DiagnoseArgs;
use crate::error::{CliError, Result};
use crate::io::{read_samples, write_json};
use crate::reports::{ChainSummary, SummaryFile, SCHEMA_VERSION};

pub fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let mut labels: Option<Vec<String>> = None;
    let mut matrices = Vec::new();
    let mut chains = Vec::new();
    for (c, path) in args.chains.iter().enumerate() {
        let (l, m) = read_samples(path)?;
        match &labels {
            Some(first) if *first != l => {
                return Err(CliError::Format {
                    path: path.clone(),
                    message: "columns differ from the first samples file".into(),
                })
            }
            Some(_) => {}
            None => labels = Some(l.clone()),
        }
        chains.push(ChainSummary {
            chain: c,
            source: Some(path.display().to_string()),
            summary: summarize_matrix(&l, &m)?,
        });
        matrices.push(m);
    }
    let labels = labels.expect("at least one chain");
    let between = if matrices.len() >= 2 && matrices.iter().all(|m| m.nrows() >= 2) {
        Some(between_within(&labels, &matrices)?)
    } else {
        None
    };
    write_json(
        &args.out,
        &SummaryFile {
            schema_version: SCHEMA_VERSION.into(),
            model: None,
            chains,
            between_within: between,
        },
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}
