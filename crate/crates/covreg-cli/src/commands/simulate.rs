use serde_json::{json, Map, Value};

use crate::report::envelope;
use crate::{CliError, DesignArg, SimulateArgs, StudyArg};
use covreg::sim::{
    run_additive_study, run_coverage_study, run_mse_study, SimScenario, StudyReport,
};

pub fn run(args: SimulateArgs) -> Result<Value, CliError> {
    let reps = if args.full_scale { 1000 } else { args.reps };
    let (scenario, study_name) = match args.design {
        DesignArg::Single => {
            let mut sc = SimScenario::single_x(args.w, args.n, reps, args.seed);
            sc.alpha = args.alpha;
            let name = match args.study {
                StudyArg::Mse => "mse",
                StudyArg::Coverage => "coverage",
            };
            (sc, name)
        }
        DesignArg::Additive => {
            let mut sc = SimScenario::additive(args.w, args.n, reps, args.seed);
            sc.alpha = args.alpha;
            (sc, "additive")
        }
    };

    let report = match (args.design, args.study) {
        (DesignArg::Additive, _) => run_additive_study(&scenario),
        (DesignArg::Single, StudyArg::Mse) => run_mse_study(&scenario),
        (DesignArg::Single, StudyArg::Coverage) => run_coverage_study(&scenario),
    }
    .map_err(CliError::from)?;

    let payload = json!({
        "scenario": {
            "design": match args.design {
                DesignArg::Single => "single",
                DesignArg::Additive => "additive",
            },
            "study": study_name,
            "w": args.w,
            "n": args.n,
            "reps": reps,
            "alpha": args.alpha,
            "full_scale": args.full_scale,
        },
        "study": study_json(&report),
    });
    Ok(envelope("simulate", args.seed, payload))
}

fn study_json(report: &StudyReport<f64>) -> Value {
    let mut obj = Map::new();
    if let Some(v) = report.relative_mse_ols_vs_cvr {
        obj.insert("relative_mse_ols_vs_cvr".into(), json!(v));
    }
    if let Some(v) = report.power_or_level {
        obj.insert("power_or_level".into(), json!(v));
    }
    if let Some(v) = report.relative_mse_ms {
        obj.insert("relative_mse_ms".into(), json!(v));
    }
    if let Some(cov) = &report.coverage_per_param {
        obj.insert("coverage_per_param".into(), json!(cov));
    }
    if let Some(v) = report.g_win_fraction {
        obj.insert("g_win_fraction".into(), json!(v));
    }
    if let Some(v) = report.mean_g_fit {
        obj.insert("mean_g_fit".into(), json!(v));
    }
    if let Some(v) = report.mean_g_baseline {
        obj.insert("mean_g_baseline".into(), json!(v));
    }
    obj.insert("excluded_reps".into(), json!(report.excluded_reps));
    obj.insert("reps_used".into(), json!(report.reps_used));
    Value::Object(obj)
}
