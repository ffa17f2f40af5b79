use std::io::Write;
use std::path::Path;

use conehyp::cone::SymMatrix;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `text` to `out`, or to stdout when absent.
pub fn write_text(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("output types serialize")
}

/// `{command, config, ...body, metadata}`; `metadata` is the only part that
/// varies between identical runs.
pub fn document<C: Serialize>(command: &str, config: &C, body: Value, runtime_ms: u64) -> Value {
    let mut map = Map::new();
    map.insert("command".into(), json!(command));
    map.insert("config".into(), to_value(config));
    if let Value::Object(fields) = body {
        map.extend(fields);
    }
    map.insert("metadata".into(), json!({ "runtime_ms": runtime_ms }));
    Value::Object(map)
}

/// Header `m_11,m_12,...,m_rr` over the upper triangle, row-major.
pub fn matrix_header(rank: usize) -> String {
    let mut cols = Vec::new();
    for i in 1..=rank {
        for j in i..=rank {
            cols.push(format!("m_{i}{j}"));
        }
    }
    cols.join(",")
}

pub fn samples_csv(rank: usize, samples: &[SymMatrix]) -> String {
    let mut s = matrix_header(rank);
    s.push('\n');
    for x in samples {
        let row: Vec<String> = x.upper_triangle().into_iter().map(fmt_f64).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// CSV with a header line and one row.
pub fn single_row_csv(columns: &[(&str, String)]) -> String {
    let head: Vec<&str> = columns.iter().map(|(k, _)| *k).collect();
    let vals: Vec<&str> = columns.iter().map(|(_, v)| v.as_str()).collect();
    format!("{}\n{}\n", head.join(","), vals.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_formatting() {
        for v in [0.1, 1.0 / 3.0, 2.5e-300, -7.0, std::f64::consts::PI] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn header_order() {
        assert_eq!(matrix_header(2), "m_11,m_12,m_22");
        assert_eq!(matrix_header(3), "m_11,m_12,m_13,m_22,m_23,m_33");
    }

    #[test]
    fn document_layout() {
        let d = document("constant", &json!({"rank": 1}), json!({"value": 12.0}), 5);
        let keys: Vec<&String> = d.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["command", "config", "value", "metadata"]);
    }
}
