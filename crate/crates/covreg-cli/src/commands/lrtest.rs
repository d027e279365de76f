use serde_json::{json, Value};

use super::{em_config, load};
use crate::report::envelope;
use crate::{CliError, LrtestArgs};
use covreg::em::fit_em;
use covreg::inference::{homoscedastic_fit, lr_test_from_logliks};

pub fn run(args: LrtestArgs) -> Result<Value, CliError> {
    if args.alt_rank < 1 {
        return Err(CliError::usage("--alt-rank must be at least 1"));
    }
    if args.alt_rank <= args.null_rank {
        return Err(CliError::usage(
            "--alt-rank must exceed --null-rank for a nested comparison",
        ));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::usage("--alpha must lie strictly inside (0, 1)"));
    }
    let (extracted, _spec) = load(&args.data, &[])?;
    let data = &extracted.dataset;
    let config = em_config(args.seed, &args.em);

    let (ll_null, df) = if args.null_rank == 0 {
        let (_, ll) = homoscedastic_fit(data).map_err(CliError::from)?;
        let df = args.df.unwrap_or(data.p() * data.q());
        (ll, df)
    } else {
        // Between-rank comparisons: the parameter count difference depends
        // on the rotation dimension, so the caller states the degrees of
        // freedom explicitly.
        let df = args.df.ok_or_else(|| {
            CliError::usage(format!(
                "--df is required when comparing rank {} against rank {}",
                args.null_rank, args.alt_rank
            ))
        })?;
        let null_fit = fit_em(data, args.null_rank, &config)?;
        if args.strict && !null_fit.converged {
            return Err(CliError::NonConvergence(
                "null-model EM did not converge".into(),
            ));
        }
        (null_fit.final_loglik, df)
    };

    let alt_fit = fit_em(data, args.alt_rank, &config)?;
    if args.strict && !alt_fit.converged {
        return Err(CliError::NonConvergence(
            "alternative-model EM did not converge".into(),
        ));
    }
    let test = lr_test_from_logliks(ll_null, alt_fit.final_loglik, df, args.alpha);

    let payload = json!({
        "dropped_rows": extracted.dropped_rows,
        "test": {
            "statistic": test.statistic,
            "df": test.df,
            "p_value": test.p_value,
            "reject": test.reject,
            "alpha": test.alpha,
            "loglik_null": test.loglik_null,
            "loglik_alt": test.loglik_alt,
            "null_rank": args.null_rank,
            "alt_rank": args.alt_rank,
        },
    });
    Ok(envelope("lrtest", args.seed, payload))
}
