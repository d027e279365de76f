use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::ingest::{self, ColumnSpec};
use crate::report::{envelope, MatrixJson, ParamsJson};
use crate::{CliError, PredictArgs};
use covreg::inference::homoscedastic_fit;
use covreg::linalg::{sub_vec, sym_eigen, Cholesky};
use covreg::special::chi2_quantile;

pub fn run(args: PredictArgs) -> Result<Value, CliError> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::usage("--level must lie strictly inside (0, 1)"));
    }

    // Recover the fitted parameters and the column mapping from the
    // stored fit report.
    let stored: Value = serde_json::from_str(
        &std::fs::read_to_string(&args.fit)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", args.fit.display())))?,
    )
    .map_err(|e| CliError::io(format!("{} is not valid JSON: {e}", args.fit.display())))?;
    let spec: ColumnSpec = serde_json::from_value(stored["spec"]["columns"].clone())
        .map_err(|e| CliError::io(format!("fit report lacks a column spec: {e}")))?;
    let params_json: ParamsJson = serde_json::from_value(stored["params"].clone())
        .map_err(|e| CliError::io(format!("fit report lacks parameters: {e}")))?;
    let params = params_json.to_params()?;

    let mut table = ingest::load_csv(&args.csv)?;
    table.apply_derives(&spec.derive)?;
    let extracted = ingest::build_dataset(&table, &spec, std::slice::from_ref(&args.group_col))?;
    let data = &extracted.dataset;
    if params.p() != data.p() || params.q() != data.q() || params.q_m() != data.q_m() {
        return Err(CliError::usage(
            "fitted parameter dimensions do not match the CSV columns",
        ));
    }

    let p = data.p();
    let threshold = chi2_quantile(args.level, p);
    let (homo_params, _) = homoscedastic_fit(data).map_err(CliError::from)?;
    let homo_chol = Cholesky::new(homo_params.psi()).map_err(CliError::from)?;

    // Group rows by the raw text of the grouping column.
    let raw = table.raw_column(&args.group_col)?;
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (row_pos, &orig) in extracted.kept_rows.iter().enumerate() {
        groups.entry(raw[orig].clone()).or_default().push(row_pos);
    }

    // Order numerically when every label parses as a number.
    let mut labels: Vec<String> = groups.keys().cloned().collect();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        labels = order.into_iter().map(|i| labels[i].clone()).collect();
    }

    let mut warnings: Vec<String> = Vec::new();
    if let Some(grid) = &args.grid {
        let wanted: Vec<String> = grid.iter().map(|g| g.trim().to_string()).collect();
        for g in &wanted {
            if !groups.contains_key(g) {
                warnings.push(format!("grid value '{g}' has no rows; skipped"));
            }
        }
        labels.retain(|l| wanted.contains(l));
    }

    let mut regions = Vec::new();
    let mut inside_cvr = 0usize;
    let mut inside_homo = 0usize;
    let mut total = 0usize;
    for label in &labels {
        let rows = &groups[label];
        let mut hits_cvr = 0usize;
        let mut hits_homo = 0usize;
        for &i in rows {
            let mu = params.mean_at(data.w_row(i)).map_err(CliError::from)?;
            let e = sub_vec(data.y_row(i), &mu);
            let sigma = params.sigma_at(data.x_row(i)).map_err(CliError::from)?;
            let m = Cholesky::new(&sigma)
                .map_err(CliError::from)?
                .inv_quad_form(&e);
            if m < threshold {
                hits_cvr += 1;
            }

            let mu0 = homo_params.mean_at(data.w_row(i)).map_err(CliError::from)?;
            let e0 = sub_vec(data.y_row(i), &mu0);
            if homo_chol.inv_quad_form(&e0) < threshold {
                hits_homo += 1;
            }
        }
        inside_cvr += hits_cvr;
        inside_homo += hits_homo;
        total += rows.len();

        // Ellipse geometry at the group's mean regressor values.
        let nf = rows.len() as f64;
        let mut x_bar = vec![0.0; data.q()];
        let mut w_bar = vec![0.0; data.q_m()];
        for &i in rows {
            for (acc, &v) in x_bar.iter_mut().zip(data.x_row(i)) {
                *acc += v / nf;
            }
            for (acc, &v) in w_bar.iter_mut().zip(data.w_row(i)) {
                *acc += v / nf;
            }
        }
        let center = params.mean_at(&w_bar).map_err(CliError::from)?;
        let sigma = params.sigma_at(&x_bar).map_err(CliError::from)?;
        let axes = if p == 2 {
            let eig = sym_eigen(&sigma);
            let axes: Vec<Value> = (0..2)
                .map(|k| {
                    json!({
                        "half_length": (eig.values[k].max(0.0) * threshold).sqrt(),
                        "direction": eig.vectors.col(k),
                    })
                })
                .collect();
            Value::Array(axes)
        } else {
            Value::Null
        };

        regions.push(json!({
            "group": label,
            "n": rows.len(),
            "center": center,
            "sigma": MatrixJson::from_mat(&sigma),
            "axes": axes,
            "coverage": hits_cvr as f64 / nf,
            "coverage_homoscedastic": hits_homo as f64 / nf,
        }));
    }
    if total == 0 {
        return Err(CliError::usage("no rows fall in the requested groups"));
    }

    let payload = json!({
        "dropped_rows": extracted.dropped_rows,
        "level": args.level,
        "chi2_threshold": threshold,
        "group_column": args.group_col,
        "regions": regions,
        "overall": {
            "n": total,
            "coverage": inside_cvr as f64 / total as f64,
            "coverage_homoscedastic": inside_homo as f64 / total as f64,
        },
        "warnings": warnings,
    });
    Ok(envelope("predict-region", 0, payload))
}
