use serde_json::{json, Value};

use super::{em_config, load};
use crate::report::{envelope, ParamsJson};
use crate::{CliError, FitArgs, Method};
use covreg::em::fit_em;
use covreg::gibbs::{default_prior, run_chain, PosteriorDraws};
use covreg::inference::expected_information;
use covreg::{Mat64, Params64};

pub fn run(args: FitArgs) -> Result<Value, CliError> {
    if args.rank < 1 {
        return Err(CliError::usage("--rank must be at least 1"));
    }
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::usage("--level must lie strictly inside (0, 1)"));
    }
    let (extracted, spec) = load(&args.data, &[])?;
    let data = &extracted.dataset;

    let method_name = match args.method {
        Method::Em => "em",
        Method::Gibbs => "gibbs",
    };
    let spec_json = json!({
        "csv": args.data.csv.display().to_string(),
        "columns": spec,
        "rank": args.rank,
        "method": method_name,
        "level": args.level,
    });

    let payload = match args.method {
        Method::Em => {
            let config = em_config(args.seed, &args.em);
            let fit = fit_em(data, args.rank, &config)?;
            if args.strict && !fit.converged {
                return Err(CliError::NonConvergence(format!(
                    "EM did not converge within {} iterations",
                    config.max_iters
                )));
            }
            let mut inference = Value::Null;
            if args.rank == 1 {
                let rep = expected_information(&fit.params, data, args.level)?;
                let mut entries = Vec::new();
                let p = fit.params.p();
                for j in 0..fit.params.q_m() {
                    for i in 0..p {
                        entries.push(wald_entry(&rep, rep.a_index(i, j), a_name(i, j)));
                    }
                }
                for j in 0..fit.params.q() {
                    for i in 0..p {
                        entries.push(wald_entry(&rep, rep.b_index(i, j), b_name(0, 1, i, j)));
                    }
                }
                for j in 0..p {
                    for i in j..p {
                        entries.push(wald_entry(&rep, rep.psi_index(i, j), psi_name(i, j)));
                    }
                }
                inference = json!({
                    "kind": "wald",
                    "level": args.level,
                    "pseudo_inverse_used": rep.pseudo_inverse_used,
                    "null_directions": rep.null_directions,
                    "entries": entries,
                });
            }
            json!({
                "spec": spec_json,
                "dropped_rows": extracted.dropped_rows,
                "params": ParamsJson::from_params(&fit.params),
                "fit": {
                    "method": "em",
                    "rank": args.rank,
                    "loglik": fit.final_loglik,
                    "iterations": fit.iterations,
                    "converged": fit.converged,
                    "warnings": fit.warnings,
                },
                "inference": inference,
            })
        }
        Method::Gibbs => {
            let prior = default_prior(data, args.rank)?;
            let draws = run_chain(
                data,
                &prior,
                args.rank,
                args.gibbs_iters,
                args.burn_in,
                args.thin,
                args.seed,
            )?;
            let summary = summarize_draws(&draws, args.rank, args.level)?;
            json!({
                "spec": spec_json,
                "dropped_rows": extracted.dropped_rows,
                "params": summary.mean_params,
                "fit": {
                    "method": "gibbs",
                    "rank": args.rank,
                    "draws": draws.len(),
                    "n_iter": draws.n_iter,
                    "burn_in": draws.burn_in,
                    "thin": draws.thin,
                },
                "inference": {
                    "kind": "credible",
                    "level": args.level,
                    "entries": summary.entries,
                },
            })
        }
    };

    Ok(envelope("fit", args.seed, payload))
}

fn a_name(i: usize, j: usize) -> String {
    format!("A[{},{}]", i + 1, j + 1)
}

fn b_name(k: usize, rank: usize, i: usize, j: usize) -> String {
    if rank == 1 {
        format!("B[{},{}]", i + 1, j + 1)
    } else {
        format!("B{}[{},{}]", k + 1, i + 1, j + 1)
    }
}

fn psi_name(i: usize, j: usize) -> String {
    format!("Psi[{},{}]", i + 1, j + 1)
}

fn wald_entry(
    rep: &covreg::InformationReport64,
    idx: usize,
    name: String,
) -> Value {
    json!({
        "name": name,
        "estimate": rep.estimate[idx],
        "se": rep.se[idx],
        "lower": rep.wald[idx].lower,
        "upper": rep.wald[idx].upper,
    })
}

struct DrawSummary {
    mean_params: ParamsJson,
    entries: Vec<Value>,
}

/// Posterior means and equal-tailed credible intervals over the
/// canonically oriented draws.
fn summarize_draws(
    draws: &PosteriorDraws<f64>,
    rank: usize,
    level: f64,
) -> Result<DrawSummary, CliError> {
    let n = draws.len();
    if n == 0 {
        return Err(CliError::usage(
            "no stored draws: increase --gibbs-iters or lower --burn-in",
        ));
    }
    let canonical: Vec<Params64> = (0..n)
        .map(|i| draws.canonical_params_at(i).map_err(CliError::from))
        .collect::<Result<_, _>>()?;

    let p = canonical[0].p();
    let q = canonical[0].q();
    let q_m = canonical[0].q_m();
    let mut entries = Vec::new();

    let mut collect = |name: String, values: Vec<f64>| -> f64 {
        let mean = values.iter().sum::<f64>() / n as f64;
        let (lo, hi) = equal_tailed(values, level);
        entries.push(json!({
            "name": name,
            "estimate": mean,
            "lower": lo,
            "upper": hi,
        }));
        mean
    };

    let mut a_mean = Mat64::zeros(p, q_m);
    for j in 0..q_m {
        for i in 0..p {
            let vals: Vec<f64> = canonical.iter().map(|c| c.a()[(i, j)]).collect();
            a_mean[(i, j)] = collect(a_name(i, j), vals);
        }
    }
    let mut b_means = Vec::new();
    for k in 0..rank {
        let mut b_mean = Mat64::zeros(p, q);
        for j in 0..q {
            for i in 0..p {
                let vals: Vec<f64> = canonical.iter().map(|c| c.b(k)[(i, j)]).collect();
                b_mean[(i, j)] = collect(b_name(k, rank, i, j), vals);
            }
        }
        b_means.push(b_mean);
    }
    let mut psi_mean = Mat64::zeros(p, p);
    for j in 0..p {
        for i in j..p {
            let vals: Vec<f64> = canonical.iter().map(|c| c.psi()[(i, j)]).collect();
            let m = collect(psi_name(i, j), vals);
            psi_mean[(i, j)] = m;
            psi_mean[(j, i)] = m;
        }
    }

    let mean_params = ParamsJson {
        a: crate::report::MatrixJson::from_mat(&a_mean),
        b: b_means
            .iter()
            .map(crate::report::MatrixJson::from_mat)
            .collect(),
        psi: crate::report::MatrixJson::from_mat(&psi_mean),
    };
    Ok(DrawSummary {
        mean_params,
        entries,
    })
}

fn equal_tailed(mut values: Vec<f64>, level: f64) -> (f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        let t = p * (values.len() - 1) as f64;
        let lo = t.floor() as usize;
        let hi = t.ceil() as usize;
        let frac = t - lo as f64;
        values[lo] * (1.0 - frac) + values[hi] * frac
    };
    let tail = (1.0 - level) / 2.0;
    (q(tail), q(1.0 - tail))
}
