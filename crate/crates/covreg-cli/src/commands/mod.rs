pub mod fit;
pub mod lrtest;
pub mod predict;
pub mod simulate;

use crate::ingest::{self, ColumnSpec, Extracted, Table};
use crate::{CliError, DataArgs, EmArgs};
use covreg::em::EmConfig;

/// Parses the shared data flags into a column spec.
pub fn column_spec(args: &DataArgs) -> Result<ColumnSpec, CliError> {
    let derive = args
        .derive
        .iter()
        .map(|d| ingest::parse_derive(d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ColumnSpec {
        y: args.y.clone(),
        x: args.x.clone(),
        w: args.w_cols.clone(),
        derive,
    })
}

/// Loads the CSV, applies derives and extracts the dataset.
pub fn load(args: &DataArgs, extra_required: &[String]) -> Result<(Extracted, ColumnSpec), CliError> {
    let spec = column_spec(args)?;
    let mut table: Table = ingest::load_csv(&args.csv)?;
    table.apply_derives(&spec.derive)?;
    let extracted = ingest::build_dataset(&table, &spec, extra_required)?;
    Ok((extracted, spec))
}

pub fn em_config(seed: u64, overrides: &EmArgs) -> EmConfig<f64> {
    let mut config = EmConfig::with_seed(seed);
    if let Some(v) = overrides.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = overrides.rel_tol {
        config.rel_tol = v;
    }
    if let Some(v) = overrides.restarts {
        config.n_restarts = v;
    }
    if let Some(v) = overrides.init_scale {
        config.init_scale = v;
    }
    config
}
