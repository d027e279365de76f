//! JSON report envelope shared by all commands.
//!
//! Every report carries `version`, `command`, `seed` and a determinism
//! hash computed over the full payload with the timestamp excluded, so
//! seeded runs are verifiable across machines. The timestamp honors
//! SOURCE_DATE_EPOCH for byte-identical output.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::CliError;
use covreg::{Mat64, Params64};

pub const SCHEMA_VERSION: &str = "1";

/// Row-major nested-array matrix encoding with explicit dimensions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_mat(m: &Mat64) -> Self {
        MatrixJson {
            rows: m.rows(),
            cols: m.cols(),
            data: (0..m.rows()).map(|i| m.row(i).to_vec()).collect(),
        }
    }

    pub fn to_mat(&self) -> Result<Mat64, CliError> {
        if self.data.len() != self.rows || self.data.iter().any(|r| r.len() != self.cols) {
            return Err(CliError::io("matrix dims disagree with nested data"));
        }
        Ok(Mat64::from_rows(&self.data))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamsJson {
    #[serde(rename = "A")]
    pub a: MatrixJson,
    #[serde(rename = "B")]
    pub b: Vec<MatrixJson>,
    #[serde(rename = "Psi")]
    pub psi: MatrixJson,
}

impl ParamsJson {
    pub fn from_params(p: &Params64) -> Self {
        ParamsJson {
            a: MatrixJson::from_mat(p.a()),
            b: p.bs().iter().map(MatrixJson::from_mat).collect(),
            psi: MatrixJson::from_mat(p.psi()),
        }
    }

    pub fn to_params(&self) -> Result<Params64, CliError> {
        let bs = self
            .b
            .iter()
            .map(|m| m.to_mat())
            .collect::<Result<Vec<_>, _>>()?;
        Params64::new(self.a.to_mat()?, bs, self.psi.to_mat()?).map_err(CliError::from)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn timestamp_unix() -> u64 {
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = epoch.parse() {
            return v;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Wraps a command payload in the versioned envelope, stamping the
/// determinism hash over everything except the timestamp.
pub fn envelope(command: &str, seed: u64, payload: Value) -> Value {
    let mut root = json!({
        "version": SCHEMA_VERSION,
        "command": command,
        "seed": seed,
    });
    let obj = root.as_object_mut().expect("envelope is an object");
    if let Value::Object(fields) = payload {
        for (k, v) in fields {
            obj.insert(k, v);
        }
    }
    let hash = fnv1a64(
        serde_json::to_string(&root)
            .expect("serializable report")
            .as_bytes(),
    );
    let obj = root.as_object_mut().expect("envelope is an object");
    obj.insert("determinism_hash".into(), json!(format!("{hash:016x}")));
    obj.insert("timestamp_unix".into(), json!(timestamp_unix()));
    root
}

/// Recomputes the determinism hash of a finished report; used by tests and
/// available for consumers auditing stored reports.
pub fn recompute_hash(report: &Value) -> Option<String> {
    let mut stripped = report.clone();
    let obj = stripped.as_object_mut()?;
    obj.remove("determinism_hash");
    obj.remove("timestamp_unix");
    let hash = fnv1a64(serde_json::to_string(&stripped).ok()?.as_bytes());
    Some(format!("{hash:016x}"))
}
